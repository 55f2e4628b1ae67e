"""Work extraction from noisy arrays of quantum cells: ergotropy-type
functionals, energy-constrained output maxima, capacitances and MAWER."""

from .channels import Composed, Dephasing, Depolarizing, Replacement, apply_tensor_power
from .constrained_search import (
    EnergyShell,
    SearchConfig,
    SearchResult,
    brute_force_shell_oracle,
    full_dephasing_diagonal_solver,
    max_output_functional,
    max_output_separable,
)
from .quantum_core import SizeError, ValidationError
from .work_functionals import (
    ergotropy,
    free_energy_work,
    gibbs_beta_star,
    local_ergotropy,
    total_ergotropy,
    work_report,
)

__version__ = "0.1.0"
