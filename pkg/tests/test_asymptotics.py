import math

import numpy as np
import pytest

from ergokit import asymptotics as asy
from ergokit.channels import Dephasing, Depolarizing, Replacement
from ergokit.constrained_search import SearchConfig, evaluate_input
from ergokit.quantum_core import ValidationError

H5 = np.diag(np.linspace(0, 1, 5))


def test_dephasing_capacitances_equal_e():
    for kappa in (0.0, 0.5, 1.0):
        pts = asy.dephasing_capacitances(kappa, 0.37)
        assert {p.functional for p in pts} == set(asy.ERGOTROPIC_KINDS)
        assert all(p.value == 0.37 and p.provenance == "closed_form" for p in pts)


def test_dephasing_free_energy_capacitance():
    v = asy.dephasing_free_energy_capacitance(0.3, 0.5, 2.0)
    assert v == pytest.approx(0.5 + math.log(1 + math.exp(-2.0)) / 2.0)
    with pytest.raises(ValidationError):
        asy.dephasing_free_energy_capacitance(0.3, 0.5, 0.0)


def test_lower_bound_witness_value():
    ch = Dephasing(0.5)
    for n, E in [(3, 1.5), (4, 2.25), (2, 0.3)]:
        psi, bound = asy.lower_bound_witness(0.5, n, E)
        assert evaluate_input(ch, n, psi) == pytest.approx(bound, abs=1e-9)


def test_free_energy_lower_bound_attained_by_witness():
    beta = 1.5
    psi, _ = asy.lower_bound_witness(0.4, 3, 1.3)
    val = evaluate_input(Dephasing(0.4), 3, psi, SearchConfig(functional="free_energy", beta=beta))
    lnZ = 3 * math.log(1 + math.exp(-beta))
    # evaluator reports the work form E - S/beta + ln Z / beta
    assert val - lnZ / beta == pytest.approx(asy.free_energy_lower_bound(0.4, 3, 1.3, beta), abs=1e-9)


def test_Sd_limits():
    assert asy.depolarizing_Sd(1.0, 3) == pytest.approx(0.0, abs=1e-12)
    assert asy.depolarizing_Sd(0.0, 3) == pytest.approx(math.log(3))


def test_Dtot_qubit_equals_D():
    for lam in np.linspace(-1 / 3, 1, 17):
        assert asy.depolarizing_Dtot(lam) == pytest.approx(asy.depolarizing_D(lam), abs=1e-8)


def test_Dtot_positive_qutrit_interior():
    assert asy.depolarizing_Dtot(0.5, H5) > 1e-3
    assert asy.depolarizing_Dtot(1.0, H5) == pytest.approx(0.0, abs=1e-10)
    assert asy.depolarizing_Dtot(0.0, H5) == pytest.approx(0.0, abs=1e-10)


def test_single_site_variants():
    h = np.diag([0.0, 1.0])
    assert asy.depolarizing_single_site(-1 / 3, 0.2, h, "ergotropy_at_most") == pytest.approx(1 / 3)
    assert asy.depolarizing_single_site(0.4, 0.5, h, "ergotropy_exact_shell") == pytest.approx(0.2)
    assert asy.depolarizing_single_site(-0.2, 0.5, h, "ergotropy_exact_shell") == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        asy.depolarizing_single_site(0.4, 0.5, h, "nope")


def test_depolarizing_hierarchy_and_C_beta():
    pts = {p.functional: p.value for p in asy.depolarizing_capacitances(0.5, 0.3, H5, beta=1.0)}
    assert pts["C_E"] == pts["C_sep"] > pts["C_loc"] == pts["C_sep_loc"]
    assert pts["C_beta"] > 0


def test_capacitances_monotone_in_e():
    es = np.linspace(0, 1, 11)
    for lam in (-0.04, 0.3, 0.9):
        for kind in ("C_E", "C_loc"):
            vals = [next(p.value for p in asy.depolarizing_capacitances(lam, e, H5) if p.functional == kind) for e in es]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
            assert all(-1e-12 <= v <= 1 + 1e-12 for v in vals)


def test_mawer_values():
    assert asy.mawer(Dephasing(0.2)).value == 1.0
    assert asy.mawer(Depolarizing(0.3)).value == pytest.approx(0.3)
    assert asy.mawer(Depolarizing(0.3, 3)).infinite
    assert asy.mawer(Depolarizing(-0.1)).infinite
    assert str(asy.mawer(Depolarizing(-0.1))) == "infinity"
    with pytest.raises(ValidationError):
        asy.mawer(Replacement(np.eye(2) / 2))


def test_rate_sequence_dephasing():
    rs = asy.rate_sequence(Dephasing(0.5), 0.5, 3, SearchConfig(starts=4))
    assert rs.weakly_increasing
    assert not rs.sandwich_violations
    assert len(rs.rates) == 3


def test_king_spot_check():
    lo, bound = asy.king_spot_check(0.5, samples=5000, seed=1)
    assert lo >= bound - 1e-6


def test_replacement_demo():
    rep = asy.replacement_gap_demo(np.diag([0.5, 0.3, 0.2]), np.diag([0, 0.5, 1]))
    assert rep.ergotropy == pytest.approx(0.0, abs=1e-12)
    assert rep.total_ergotropy > 1e-4 and not rep.gibbs_shaped
    eps = np.array([0, 0.5, 1])
    p = np.exp(-2 * eps) / np.exp(-2 * eps).sum()
    rep = asy.replacement_gap_demo(np.diag(p), np.diag(eps))
    assert rep.gibbs_shaped and rep.gap < 1e-10
    with pytest.raises(ValidationError, match="passive"):
        asy.replacement_gap_demo(np.diag([0.2, 0.3, 0.5]), np.diag(eps))


def test_points_serialisation():
    pts = asy.dephasing_capacitances(0.5, 0.25)
    text = asy.points_to_csv(pts)
    assert text.splitlines()[0] == "channel,param,functional,e,value,provenance"
    assert len(text.splitlines()) == 5
    assert asy.points_to_json(pts) == asy.points_to_json(pts)
