"""Work extraction functionals: ergotropy, total ergotropy, free-energy work
and local ergotropy, plus the Gibbs-state machinery they rely on."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .quantum_core import (
    ValidationError,
    as_hermitian,
    entropy_of_spectrum,
    local_hamiltonian,
    mean_energy,
    partial_trace,
    random_unitary,
    rng_from,
    tensor_product,
    von_neumann_entropy,
)

BISECTION_STEPS = 200
BISECTION_RESIDUAL = 1e-12
BETA_CAP = 2.0**100
DEGENERACY_ATOL = 1e-12


class UnsupportedFeatureError(NotImplementedError):
    pass


def _energies(H) -> np.ndarray:
    H = np.asarray(H)
    if H.ndim == 1:
        return np.sort(H.astype(float))
    return np.linalg.eigvalsh(as_hermitian(H))


def passive_energy_from_spectra(populations, energies) -> float:
    """sum_l lambda_l E_l with populations descending and energies ascending."""
    p = np.sort(np.asarray(populations, dtype=float))[::-1]
    e = np.sort(np.asarray(energies, dtype=float))
    return float(np.dot(p, e))


def passive_state(rho, H) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    H = as_hermitian(H)
    if rho.shape != H.shape:
        raise ValidationError(f"dimension mismatch: state {rho.shape} vs Hamiltonian {H.shape}")
    lam = np.linalg.eigvalsh(rho)[::-1]
    _, V = np.linalg.eigh(H)
    return (V * lam) @ V.conj().T


def ergotropy(rho, H) -> float:
    """Mean energy minus the energy of the passive counterpart of ``rho``."""
    rho = np.asarray(rho, dtype=complex)
    E = mean_energy(rho, H)
    val = E - passive_energy_from_spectra(np.linalg.eigvalsh(rho), _energies(H))
    return max(val, 0.0)


def gibbs_thermodynamics(beta: float, energies) -> tuple[float, float, float]:
    """Return (ln Z, mean energy, entropy) of the Gibbs state at ``beta``."""
    e = np.asarray(energies, dtype=float)
    e0 = e.min()
    shifted = -beta * (e - e0)
    lz_shift = logsumexp(shifted)
    p = np.exp(shifted - lz_shift)
    mean_shift = float(np.dot(p, e - e0))
    entropy = beta * mean_shift + lz_shift
    return float(lz_shift - beta * e0), mean_shift + e0, float(entropy)


def log_partition(beta: float, H) -> float:
    return gibbs_thermodynamics(beta, _energies(H))[0]


def gibbs_state(beta: float, H) -> np.ndarray:
    H = as_hermitian(H)
    e, V = np.linalg.eigh(H)
    w = np.exp(-beta * (e - e.min()))
    w /= w.sum()
    return (V * w) @ V.conj().T


@dataclass(frozen=True)
class GibbsSolution:
    beta_star: float
    infinite: bool
    gibbs_energy: float
    gibbs_entropy: float
    residual: float


def gibbs_beta_star(target_entropy: float, H) -> GibbsSolution:
    """Inverse temperature whose Gibbs state has the requested entropy (nats).

    Bisection on the monotone map beta -> S_beta, with the upper bracket
    doubled from 1 until it undershoots the target.
    """
    e = _energies(H)
    d = e.size
    ln_d = math.log(d)
    target = float(target_entropy)
    if target < -1e-12 or target > ln_d + 1e-12:
        raise ValidationError(f"target entropy {target:.6g} outside [0, ln {d}]")
    target = min(max(target, 0.0), ln_d)
    g0 = int(np.sum(e - e[0] <= DEGENERACY_ATOL))
    s_inf = math.log(g0)

    def at(beta):
        _, energy, ent = gibbs_thermodynamics(beta, e)
        return energy, ent

    if target >= ln_d - 1e-15 or g0 == d:
        energy, ent = at(0.0)
        return GibbsSolution(0.0, False, energy, ent, abs(ent - target))
    if target <= s_inf + 1e-15:
        return GibbsSolution(math.inf, True, float(e[0]), s_inf, abs(s_inf - target))

    lo, hi = 0.0, 1.0
    while at(hi)[1] > target:
        lo, hi = hi, 2.0 * hi
        if hi > BETA_CAP:
            return GibbsSolution(math.inf, True, float(e[0]), s_inf, abs(s_inf - target))
    mid = hi
    energy, ent = at(mid)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        energy, ent = at(mid)
        if abs(ent - target) <= BISECTION_RESIDUAL or mid in (lo, hi):
            break
        if ent > target:
            lo = mid
        else:
            hi = mid
    return GibbsSolution(mid, False, energy, ent, abs(ent - target))


def total_ergotropy(rho, H) -> float:
    """Mean energy minus the energy of the entropy-matched Gibbs state."""
    rho = np.asarray(rho, dtype=complex)
    sol = gibbs_beta_star(von_neumann_entropy(rho), H)
    return float(max(mean_energy(rho, H) - sol.gibbs_energy, 0.0))


def total_ergotropy_from_spectrum(populations, mean, energies) -> float:
    sol = gibbs_beta_star(entropy_of_spectrum(populations), energies)
    return float(max(float(mean) - sol.gibbs_energy, 0.0))


def free_energy(rho, H, beta: float) -> float:
    return mean_energy(rho, H) - von_neumann_entropy(rho) / beta


def free_energy_work(rho, H, beta: float) -> float:
    """Bath-assisted extractable work F_beta(rho) + ln Z_beta / beta."""
    beta = float(beta)
    if not (beta > 0 and math.isfinite(beta)):
        raise ValidationError(f"inverse temperature must be positive and finite, got {beta}")
    val = free_energy(rho, H, beta) + log_partition(beta, H) / beta
    return max(val, 0.0)


def _local_terms(dims, local_hs):
    dims = [int(d) for d in dims]
    if isinstance(local_hs, np.ndarray) and local_hs.ndim == 2:
        local_hs = [local_hs] * len(dims)
    local_hs = [as_hermitian(h) for h in local_hs]
    if len(local_hs) != len(dims) or any(h.shape[0] != d for h, d in zip(local_hs, dims)):
        raise ValidationError("one local Hamiltonian per cell with matching dimension is required")
    return dims, local_hs


def _sum_of_locals(dims, local_hs) -> np.ndarray:
    eyes = [np.eye(d) for d in dims]
    D = int(np.prod(dims))
    H = np.zeros((D, D), dtype=complex)
    for j, h in enumerate(local_hs):
        factors = list(eyes)
        factors[j] = h
        H += tensor_product(*factors)
    return H


def local_ergotropy(rho_n, dims, local_hs, H_total=None) -> float:
    """Ergotropy under product unitaries for a non-interacting Hamiltonian.

    The energy splits cell by cell, so the optimum is the sum of the
    marginal ergotropies. Passing an ``H_total`` that is not the sum of the
    local terms raises ``UnsupportedFeatureError``.
    """
    dims, local_hs = _local_terms(dims, local_hs)
    if H_total is not None:
        diff = np.max(np.abs(np.asarray(H_total) - _sum_of_locals(dims, local_hs)))
        if diff > 1e-10:
            raise UnsupportedFeatureError("local ergotropy is only available for non-interacting Hamiltonians")
    if len(dims) == 1:
        return ergotropy(rho_n, local_hs[0])
    return float(sum(ergotropy(partial_trace(rho_n, dims, j), h) for j, h in enumerate(local_hs)))


def _hermitian_from_params(x: np.ndarray, d: int) -> np.ndarray:
    G = np.zeros((d, d), dtype=complex)
    G[np.diag_indices(d)] = x[:d]
    iu = np.triu_indices(d, 1)
    m = len(iu[0])
    G[iu] = x[d : d + m] + 1j * x[d + m : d + 2 * m]
    G = G + np.triu(G, 1).conj().T
    return G


def _unitary_from_params(x: np.ndarray, d: int) -> np.ndarray:
    w, V = np.linalg.eigh(_hermitian_from_params(x, d))
    return (V * np.exp(1j * w)) @ V.conj().T


@dataclass(frozen=True)
class VariationalResult:
    value: float
    converged: bool
    best_start: int
    starts: int

    def __float__(self) -> float:
        return self.value


def variational_local_ergotropy(
    rho_n, dims, local_hs, starts: int = 32, seed=0, maxiter: int = 5000, tol: float = 1e-10
) -> VariationalResult:
    """Direct maximisation over product unitaries, each the exponential of a
    Hermitian generator with d^2 real coefficients.

    Works on the full state and the full Hamiltonian, so it does not rely
    on the marginal decomposition used by :func:`local_ergotropy`.
    """
    if starts < 1:
        raise ValidationError("starts must be >= 1")
    dims, local_hs = _local_terms(dims, local_hs)
    rho = np.asarray(rho_n, dtype=complex)
    H = _sum_of_locals(dims, local_hs)
    E0 = mean_energy(rho, H)
    offsets = np.cumsum([0] + [d * d for d in dims])
    rng = rng_from(seed)

    def out_energy(x):
        U = tensor_product(*[_unitary_from_params(x[offsets[j] : offsets[j + 1]], d) for j, d in enumerate(dims)])
        return float(np.real(np.einsum("ij,ji->", U @ rho @ U.conj().T, H)))

    best, best_k, conv = -math.inf, 0, False
    for k in range(starts):
        x0 = rng.normal(scale=np.pi / 2, size=offsets[-1]) if k else np.zeros(offsets[-1])
        res = minimize(out_energy, x0, method="BFGS", options={"gtol": 1e-9, "maxiter": maxiter})
        val = E0 - res.fun
        if val > best + tol:
            best, best_k, conv = val, k, bool(res.success) or res.nit < maxiter
    return VariationalResult(max(best, 0.0), conv, best_k, starts)


def brute_force_ergotropy(rho, H, samples: int = 10_000, seed=0, refine_steps: int = 4000) -> float:
    """Random-unitary lower bound on the ergotropy.

    ``samples`` Haar unitaries are scored, then the best one is improved by a
    stochastic hill climb with shrinking random generators. Never uses the
    eigenvalue sorting formula.
    """
    rho = np.asarray(rho, dtype=complex)
    H = as_hermitian(H)
    d = rho.shape[0]
    rng = rng_from(seed)
    E0 = mean_energy(rho, H)
    best_U, best_e = np.eye(d, dtype=complex), E0
    for _ in range(samples):
        U = random_unitary(d, rng)
        e = float(np.real(np.einsum("ij,ji->", U @ rho @ U.conj().T, H)))
        if e < best_e:
            best_U, best_e = U, e
    step = 0.3
    for _ in range(refine_steps):
        x = rng.normal(scale=step, size=d * d)
        U = _unitary_from_params(x, d) @ best_U
        e = float(np.real(np.einsum("ij,ji->", U @ rho @ U.conj().T, H)))
        if e < best_e:
            best_U, best_e = U, e
        else:
            step = max(step * 0.995, 1e-5)
    return E0 - best_e


@dataclass
class WorkReport:
    mean_energy: float
    ergotropy: float
    total_ergotropy: float
    free_energy_work: float
    local_ergotropy: float
    passive_energy: float
    beta: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def work_report(rho, H, beta: float, dims=None, local_hs=None) -> WorkReport:
    rho = np.asarray(rho, dtype=complex)
    H = as_hermitian(H)
    passive = passive_energy_from_spectra(np.linalg.eigvalsh(rho), _energies(H))
    if dims is None or len(dims) == 1:
        loc = ergotropy(rho, H)
    else:
        loc = local_ergotropy(rho, dims, local_hs, H_total=H)
    return WorkReport(
        mean_energy=mean_energy(rho, H),
        ergotropy=ergotropy(rho, H),
        total_ergotropy=total_ergotropy(rho, H),
        free_energy_work=free_energy_work(rho, H, beta),
        local_ergotropy=loc,
        passive_energy=passive,
        beta=float(beta),
    )


def array_work_report(rho_n, h, n: int, beta: float) -> WorkReport:
    """Report for n identical non-interacting cells with cell Hamiltonian ``h``."""
    h = as_hermitian(h)
    H = local_hamiltonian(h, n)
    return work_report(rho_n, H, beta, dims=[h.shape[0]] * n, local_hs=[h] * n)
