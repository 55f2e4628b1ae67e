import math

import numpy as np
import pytest

from ergokit.asymptotics import dephasing_single_site, depolarizing_single_site
from ergokit.channels import Composed, Dephasing, Depolarizing
from ergokit.constrained_search import (
    EnergyShell,
    SearchConfig,
    brute_force_shell_oracle,
    cat_witness,
    evaluate_input,
    full_dephasing_diagonal_solver,
    max_output_functional,
    max_output_separable,
)
from ergokit.quantum_core import SizeError, ValidationError, random_unitary

FAST = SearchConfig(starts=4)


def test_shell_validation():
    with pytest.raises(ValidationError, match="infeasible"):
        EnergyShell(2, 2.5)
    with pytest.raises(ValidationError):
        EnergyShell(2, 1.0, "between")
    with pytest.raises(ValidationError):
        SearchConfig(starts=0)
    with pytest.raises(ValidationError):
        SearchConfig(functional="free_energy")


@pytest.mark.parametrize("kappa,E", [(0.3, 0.2), (0.8, 0.5), (1.0, 0.9), (0.0, 0.4)])
def test_single_site_dephasing(kappa, E):
    res = max_output_functional(Dephasing(kappa), EnergyShell(1, E), FAST)
    assert res.value == pytest.approx(dephasing_single_site(kappa, E), abs=1e-7)
    assert abs(res.achieved_energy - E) <= 1e-10


def test_witness_is_normalised_and_on_shell():
    res = max_output_functional(Dephasing(0.6), EnergyShell(2, 0.7), FAST)
    psi = res.witness_state
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)
    assert abs(res.achieved_energy - 0.7) <= 1e-10
    assert evaluate_input(Dephasing(0.6), 2, psi) == pytest.approx(res.value, abs=1e-12)


def test_zero_energy_single_feasible_state():
    res = max_output_functional(Depolarizing(0.5), EnergyShell(2, 0.0), FAST)
    ground = np.zeros(4)
    ground[0] = 1
    assert res.value == pytest.approx(evaluate_input(Depolarizing(0.5), 2, ground), abs=1e-12)


@pytest.mark.parametrize("E", [0, 1, 2])
def test_integer_saturation_two_sites(E):
    res = max_output_functional(Dephasing(0.5), EnergyShell(2, E), FAST)
    assert res.value == pytest.approx(E, abs=1e-8)


def test_entanglement_boost_two_sites():
    ch, shell = Dephasing(0.9), EnergyShell(2, 0.5)
    g = max_output_functional(ch, shell, FAST).value
    s = max_output_separable(ch, shell, FAST).value
    cat = evaluate_input(ch, 2, cat_witness(2, 0.5, np.array([0.0, 1.0])))
    assert g - s > 1e-4
    assert cat >= s - 1e-12


def test_separable_depolarizing_is_product_optimum():
    lam = 0.4
    for e in (0.25, 0.6):
        s = max_output_separable(Depolarizing(lam), EnergyShell(2, 2 * e), FAST).value
        assert s == pytest.approx(2 * depolarizing_single_site(lam, e), abs=1e-7)


def test_at_most_dominates_exact_and_negative_lambda_counterexample():
    ch = Depolarizing(-0.2)
    exact = max_output_functional(ch, EnergyShell(1, 1.0, "exact"), FAST).value
    at_most = max_output_functional(ch, EnergyShell(1, 1.0, "at_most"), FAST).value
    assert at_most >= exact - 1e-9
    assert exact < at_most - 1e-3


def test_monotone_in_energy_at_most():
    vals = [max_output_functional(Dephasing(0.7), EnergyShell(2, E, "at_most"), FAST).value for E in np.linspace(0, 2, 6)]
    assert all(b >= a - 1e-8 for a, b in zip(vals, vals[1:]))


def test_superadditivity_two_sites():
    ch = Dephasing(0.6)
    for E1, E2 in [(0.3, 0.5), (0.2, 0.9)]:
        one = max_output_functional(ch, EnergyShell(1, E1), FAST).value + max_output_functional(ch, EnergyShell(1, E2), FAST).value
        two = max_output_functional(ch, EnergyShell(2, E1 + E2), FAST).value
        assert two >= one - 1e-8


def test_covariance_restriction_sound():
    for ch in (Dephasing(0.6), Depolarizing(0.3)):
        a = max_output_functional(ch, EnergyShell(2, 0.8), SearchConfig(starts=8)).value
        b = max_output_functional(ch, EnergyShell(2, 0.8), SearchConfig(starts=8, nonneg_amplitudes=False)).value
        assert abs(a - b) <= 2e-8 + 1e-7


def test_non_covariant_channel_uses_complex_amplitudes():
    ch = Composed(Dephasing(1.0), random_unitary(2, seed=3))
    res = max_output_functional(ch, EnergyShell(1, 0.5), FAST)
    assert abs(res.achieved_energy - 0.5) <= 1e-10
    assert res.value >= 0.0


@pytest.mark.parametrize("functional,beta", [("total_ergotropy", None), ("free_energy", 1.0), ("local_ergotropy", None)])
def test_other_functionals_run(functional, beta):
    cfg = SearchConfig(functional=functional, beta=beta, starts=2)
    res = max_output_functional(Dephasing(0.5), EnergyShell(2, 1.0), cfg)
    assert math.isfinite(res.value)
    d = res.to_dict()
    assert set(d) == {"value", "witness_state", "achieved_energy", "starts", "converged"}


def test_diagonal_solver_half_filling():
    assert full_dephasing_diagonal_solver(2, 1.0).value == pytest.approx(2 * 0.5)
    assert full_dephasing_diagonal_solver(4, 2.0).ratio == pytest.approx(1.0, abs=1e-12)
    assert full_dephasing_diagonal_solver(1, 0.5).value == pytest.approx(0.0, abs=1e-12)
    sol = full_dephasing_diagonal_solver(3, 1.5, cross_check=True, cfg=SearchConfig(starts=8))
    assert 0 < sol.ratio < 1
    assert sol.search_value == pytest.approx(sol.value, abs=1e-6)


def test_oracle_matches_closed_form_and_is_below_optimizer():
    ch = Dephasing(0.5)
    shell = EnergyShell(1, 0.3)
    oracle = brute_force_shell_oracle(ch, shell, grid_density=20000)
    assert oracle == pytest.approx(dephasing_single_site(0.5, 0.3), abs=1e-3)
    assert oracle <= max_output_functional(ch, shell, FAST).value + 1e-9


def test_oracle_size_cap():
    with pytest.raises(SizeError):
        brute_force_shell_oracle(Dephasing(0.5), EnergyShell(7, 1.0), grid_density=10)
