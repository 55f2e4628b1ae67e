"""Work capacitances, MAWER values and finite-n rate sequences for
dephasing, depolarizing and replacement noise."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .channels import Dephasing, Depolarizing, Replacement, depolarizing_range
from .constrained_search import (
    EnergyShell,
    SearchConfig,
    _with,
    cell_state_with_energy,
    max_output_functional,
)
from .quantum_core import (
    ValidationError,
    as_density_matrix,
    as_hermitian,
    entropy_of_spectrum,
    is_diagonal,
    projector,
    rng_from,
    tensor_product,
)
from .work_functionals import (
    ergotropy,
    free_energy,
    gibbs_beta_star,
    gibbs_thermodynamics,
    total_ergotropy,
)

ERGOTROPIC_KINDS = ("C_E", "C_sep", "C_loc", "C_sep_loc")


@dataclass(frozen=True)
class CapacitancePoint:
    channel: dict
    functional: str
    e: float
    value: float
    provenance: str = "closed_form"
    n: int | None = None

    def row(self) -> dict:
        ch = self.channel
        param = ch.get("kappa", ch.get("lambda"))
        prov = self.provenance if self.n is None else f"{self.provenance}({self.n})"
        return {
            "channel": ch["kind"],
            "param": param,
            "functional": self.functional,
            "e": self.e,
            "value": self.value,
            "provenance": prov,
        }


@dataclass(frozen=True)
class MawerValue:
    channel: dict
    value: float | None
    infinite: bool = False

    def __str__(self) -> str:
        return "infinity" if self.infinite else repr(self.value)

    def to_dict(self) -> dict:
        return {"channel": self.channel, "value": "infinity" if self.infinite else self.value}


def _check_e(e: float) -> float:
    e = float(e)
    if not (-1e-12 <= e <= 1 + 1e-12):
        raise ValidationError(f"energy fraction e={e} outside [0, 1]")
    return min(max(e, 0.0), 1.0)


def _cell_h(h, d: int | None = None):
    if h is None:
        h = np.diag(np.linspace(0.0, 1.0, d or 2))
    return as_hermitian(h, role="hamiltonian")


def points_to_csv(points) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["channel", "param", "functional", "e", "value", "provenance"], lineterminator="\n")
    w.writeheader()
    for p in points:
        r = p.row()
        r["e"] = f"{r['e']:.12g}"
        r["value"] = f"{r['value']:.12g}"
        w.writerow(r)
    return buf.getvalue()


def points_to_json(points) -> str:
    return json.dumps([asdict(p) for p in points], indent=2, sort_keys=True)


# ---------------------------------------------------------------- dephasing


def dephasing_single_site(kappa: float, E: float) -> float:
    """Maximum output ergotropy of one dephased qubit at input energy E."""
    return E - 0.5 * (1.0 - math.sqrt(max(1.0 - 4.0 * kappa * E * (1.0 - E), 0.0)))


def dephasing_capacitances(kappa: float, e: float) -> list[CapacitancePoint]:
    ch = Dephasing(kappa).to_dict()
    e = _check_e(e)
    return [CapacitancePoint(ch, kind, e, e) for kind in ERGOTROPIC_KINDS]


def dephasing_free_energy_capacitance(kappa: float, e: float, beta: float, h=None) -> float:
    if not (beta > 0 and math.isfinite(beta)):
        raise ValidationError(f"beta must be positive and finite, got {beta}")
    Dephasing(kappa)
    h = _cell_h(h)
    lnZ = gibbs_thermodynamics(beta, np.linalg.eigvalsh(h))[0]
    return _check_e(e) + lnZ / beta


def lower_bound_witness(kappa: float, n: int, E: float, h=None):
    """Product input |top>^floor(E) |ground>^(n-floor(E)-1) |psi_(E-floor(E))>
    and the analytic value E - delta_E it attains (qubit cells)."""
    h = _cell_h(h)
    eps = np.real(np.diag(h))
    k = int(math.floor(E + 1e-12))
    if k >= n:
        cells = [cell_state_with_energy(eps.max(), eps)] * n
        return tensor_product(*cells), float(n)
    dE = E - k
    cells = [cell_state_with_energy(eps.max(), eps)] * k + [cell_state_with_energy(eps.min(), eps)] * (n - k - 1)
    cells.append(cell_state_with_energy(dE, eps))
    delta = 0.5 * (1.0 - math.sqrt(max(1.0 - 4.0 * kappa * dE * (1.0 - dE), 0.0)))
    return tensor_product(*cells), E - delta


def free_energy_lower_bound(kappa: float, n: int, E: float, beta: float, h=None) -> float:
    """floor(E) + F_beta of the dephased single-cell remainder state."""
    h = _cell_h(h)
    eps = np.real(np.diag(h))
    k = int(math.floor(E + 1e-12))
    if k >= n:
        return float(n)
    rest = Dephasing(kappa, h.shape[0]).apply(projector(cell_state_with_energy(E - k, eps)))
    return k + free_energy(rest, h, beta)


# -------------------------------------------------------------- depolarizing


def depolarizing_D(lam: float) -> float:
    return 0.0 if lam >= 0 else -lam


def depolarizing_spectrum(lam: float, d: int) -> tuple[float, float]:
    """(non-degenerate, (d-1)-fold) eigenvalues of a depolarized pure state."""
    return lam + (1.0 - lam) / d, (1.0 - lam) / d


def depolarizing_Sd(lam: float, d: int) -> float:
    """Output entropy of a depolarized pure state, in nats."""
    Depolarizing(lam, d)
    l1, l2 = depolarizing_spectrum(lam, d)
    return entropy_of_spectrum([l1] + [l2] * (d - 1))


def depolarizing_Dtot(lam: float, h=None) -> float:
    h = _cell_h(h)
    d = h.shape[0]
    Depolarizing(lam, d)
    eps = np.linalg.eigvalsh(h)
    sol = gibbs_beta_star(depolarizing_Sd(lam, d), eps)
    # non-negative: the depolarized ground state has entropy S_d
    return max(float((1.0 - lam) / d * float(eps.sum()) - sol.gibbs_energy), 0.0)


def depolarizing_single_site(lam: float, E: float, h=None, which: str = "ergotropy_exact_shell") -> float:
    h = _cell_h(h)
    Depolarizing(lam, h.shape[0])
    E = _check_e(E)
    if which == "ergotropy_exact_shell":
        return lam * E + depolarizing_D(lam)
    if which == "ergotropy_at_most":
        return lam * E if lam >= 0 else abs(lam)
    if which in ("total_exact_shell", "total_at_most"):
        Dt = depolarizing_Dtot(lam, h)
        if which == "total_at_most" and lam <= 0:
            return Dt
        return lam * E + Dt
    raise ValidationError(f"unknown single-site variant {which!r}")


def depolarizing_capacitances(lam: float, e: float, h=None, beta: float | None = None) -> list[CapacitancePoint]:
    h = _cell_h(h)
    d = h.shape[0]
    ch = Depolarizing(lam, d).to_dict()
    e = _check_e(e)
    glob = depolarizing_single_site(lam, e, h, "total_at_most")
    loc = depolarizing_single_site(lam, e, h, "ergotropy_at_most")
    pts = [
        CapacitancePoint(ch, "C_E", e, glob),
        CapacitancePoint(ch, "C_sep", e, glob),
        CapacitancePoint(ch, "C_loc", e, loc),
        CapacitancePoint(ch, "C_sep_loc", e, loc),
        CapacitancePoint(ch, "C_tot", e, glob),
        CapacitancePoint(ch, "C_sep_tot", e, glob),
    ]
    if beta is not None:
        if not (beta > 0 and math.isfinite(beta)):
            raise ValidationError(f"beta must be positive and finite, got {beta}")
        lnZ = gibbs_thermodynamics(beta, np.linalg.eigvalsh(h))[0]
        F1 = lam * e + (1.0 - lam) / d * float(np.trace(h).real) - depolarizing_Sd(lam, d) / beta
        pts.append(CapacitancePoint(ch, "C_beta", e, F1 + lnZ / beta))
    return pts


def king_spot_check(lam: float, d: int = 2, samples: int = 100_000, seed=0, batch: int = 20_000) -> tuple[float, float]:
    """Smallest two-cell output entropy over random pure inputs, and 2 S_d."""
    ch = Depolarizing(lam, d)
    rng = rng_from(seed)
    best = math.inf
    left = samples
    while left > 0:
        B = min(batch, left)
        left -= B
        z = rng.standard_normal((B, d * d)) + 1j * rng.standard_normal((B, d * d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        rho = z[:, :, None] * z[:, None, :].conj()
        w = np.clip(np.linalg.eigvalsh(ch.apply_n(rho, 2)), 0.0, None)
        with np.errstate(divide="ignore", invalid="ignore"):
            S = -np.sum(np.where(w > 0, w * np.log(w), 0.0), axis=1)
        best = min(best, float(S.min()))
    return best, 2.0 * depolarizing_Sd(lam, d)


# ---------------------------------------------------------------------- MAWER


def mawer(channel, h=None, atol: float = 1e-10) -> MawerValue:
    desc = channel.to_dict()
    if isinstance(channel, Dephasing):
        return MawerValue(desc, 1.0)
    if isinstance(channel, Depolarizing):
        lam = channel.lam
        if lam < 0:
            return MawerValue(desc, None, True)
        if depolarizing_Dtot(lam, _cell_h(h, channel.dim)) > atol:
            return MawerValue(desc, None, True)
        return MawerValue(desc, lam)
    raise ValidationError(f"MAWER is only available for dephasing and depolarizing channels, got {desc['kind']}")


# -------------------------------------------------------------- rate sequence


@dataclass
class RateSequence:
    channel: dict
    e: float
    n_values: list
    rates: list
    wi_violations: list = field(default_factory=list)
    sandwich_violations: list = field(default_factory=list)

    @property
    def weakly_increasing(self) -> bool:
        return not self.wi_violations


def _seed_products(witnesses: dict, n: int) -> list:
    seeds = []
    for a in range(1, n):
        b = n - a
        if a in witnesses and b in witnesses:
            seeds.append(np.kron(witnesses[a], witnesses[b]))
    for a in range(1, n):
        if n % a == 0 and a in witnesses:
            v = witnesses[a]
            for _ in range(n // a - 1):
                v = np.kron(v, witnesses[a])
            seeds.append(v)
    return seeds


def rate_sequence(channel, e: float, n_max: int, cfg: SearchConfig | None = None, mode: str = "at_most", tol: float = 1e-8) -> RateSequence:
    """w_n = W^(n)(channel; n e)/n for n = 1..n_max.

    Each n is seeded with tensor products of the optimisers found at smaller
    n, so the super-additive witnesses are always among the starts.
    """
    cfg = cfg or SearchConfig()
    e = _check_e(e)
    witnesses, rates, ns = {}, [], list(range(1, n_max + 1))
    for n in ns:
        seeds = tuple(_seed_products(witnesses, n)) + tuple(cfg.seed_states)
        res = max_output_functional(channel, EnergyShell(n, n * e, mode), _with(cfg, seed_states=seeds))
        witnesses[n] = np.asarray(res.witness_state, dtype=complex)
        rates.append(res.value / n)
    w = dict(zip(ns, rates))
    wi = []
    for n in ns:
        for k in ns:
            if n * k <= n_max and k > 1 and w[n * k] < w[n] - tol:
                wi.append(("product", n, k, w[n * k], w[n]))
            if n + k <= n_max and n <= k:
                bound = (n * w[n] + k * w[k]) / (n + k)
                if w[n + k] < bound - tol:
                    wi.append(("convex", n, k, w[n + k], bound))
    sandwich = []
    if isinstance(channel, Dephasing) and cfg.functional == "ergotropy":
        for n in ns:
            if not (e - 1.0 / n - tol <= w[n] <= e + tol):
                sandwich.append((n, w[n]))
    return RateSequence(channel.to_dict(), e, ns, rates, wi, sandwich)


# ------------------------------------------------------------ replacement


def is_gibbs_shaped(p, eps, atol: float = 1e-10) -> bool:
    """True when populations follow exp(-beta eps) for a single beta >= 0."""
    p = np.asarray(p, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if np.any(p <= 0):
        # zero populations only allowed above a zero-temperature ground space
        g = eps - eps.min() <= atol
        return bool(np.all(p[~g] <= atol)) and np.allclose(p[g], p[g][0], atol=atol)
    order = np.argsort(eps)
    p, eps = p[order], eps[order]
    betas = []
    for i in range(len(p) - 1):
        de = eps[i + 1] - eps[i]
        if de <= atol:
            if abs(p[i + 1] - p[i]) > atol:
                return False
            continue
        betas.append(-math.log(p[i + 1] / p[i]) / de)
    return bool(not betas or (min(betas) >= -atol and max(betas) - min(betas) <= 1e-8))


@dataclass
class ReplacementReport:
    ergotropy: float
    total_ergotropy: float
    gibbs_shaped: bool
    capacitances: dict
    gap: float

    def to_dict(self) -> dict:
        return asdict(self)


def replacement_gap_demo(rho0, h) -> ReplacementReport:
    """Local vs local-total capacitances of the replacement channel with a
    passive output state ``rho0``."""
    h = as_hermitian(h)
    rho0 = as_density_matrix(rho0)
    if not (is_diagonal(rho0, 1e-12) and is_diagonal(h, 1e-12)):
        raise ValidationError("replacement demo needs rho0 and h diagonal in the energy basis")
    eps = np.real(np.diag(h))
    p = np.real(np.diag(rho0))
    order = np.argsort(eps, kind="stable")
    if np.any(np.diff(p[order]) > 1e-12):
        raise ValidationError("rho0 is not passive: populations must be non-increasing with energy")
    Replacement(rho0)
    erg = ergotropy(rho0, h)
    tot = total_ergotropy(rho0, h)
    caps = {
        "C_E": tot,
        "C_sep": tot,
        "C_loc": erg,
        "C_sep_loc": erg,
        "C_loc_tot": tot,
        "C_sep_loc_tot": tot,
    }
    return ReplacementReport(erg, tot, is_gibbs_shaped(p, eps), caps, tot - erg)
