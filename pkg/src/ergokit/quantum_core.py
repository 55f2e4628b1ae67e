"""Dense linear-algebra primitives shared by every other module.

Operators and states are plain complex ``numpy`` arrays. The ``as_*``
helpers validate and normalise inputs; everything else is a pure function.
Entropies are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

DIM_CAP = 4096
HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
PSD_ATOL = 1e-10
NORM_ATOL = 1e-12


class ValidationError(ValueError):
    """An input violates a documented invariant."""


class SizeError(ValidationError):
    """Requested Hilbert-space dimension exceeds ``DIM_CAP``."""


def check_dim(dim: int) -> int:
    dim = int(dim)
    if dim < 1:
        raise ValidationError(f"dimension must be positive, got {dim}")
    if dim > DIM_CAP:
        raise SizeError(f"dimension {dim} exceeds the dense cap {DIM_CAP}")
    return dim


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _square(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {A.shape}")
    check_dim(A.shape[0])
    return A


def hermiticity_error(A: np.ndarray) -> float:
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def as_hermitian(A, role: str = "generic", atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate a Hermitian operator and return it as a complex array.

    With ``role="hamiltonian"`` the operator is treated as a single q-cell
    Hamiltonian and must have spectrum spanning exactly ``[0, 1]``.
    """
    if role not in ("generic", "hamiltonian"):
        raise ValidationError(f"unknown operator role {role!r}")
    A = _square(A, "operator")
    err = hermiticity_error(A)
    if err > atol:
        raise ValidationError(f"operator is not Hermitian: max |A - A^dag| = {err:.3e}")
    if role == "hamiltonian":
        ev = np.linalg.eigvalsh(A)
        if abs(ev[0]) > atol or abs(ev[-1] - 1.0) > atol:
            raise ValidationError(
                "cell Hamiltonian must be normalised to smallest eigenvalue 0 and "
                f"largest 1, got [{ev[0]:.6g}, {ev[-1]:.6g}]"
            )
    return A


def as_density_matrix(rho) -> np.ndarray:
    rho = _square(rho, "density matrix")
    err = hermiticity_error(rho)
    if err > HERMITIAN_ATOL:
        raise ValidationError(f"density matrix is not Hermitian: max |rho - rho^dag| = {err:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_ATOL:
        raise ValidationError(f"density matrix trace is {tr:.12g}, expected 1")
    ev_min = np.linalg.eigvalsh(rho)[0]
    if ev_min < -PSD_ATOL:
        raise ValidationError(f"density matrix has negative eigenvalue {ev_min:.3e}")
    return rho


def as_pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    check_dim(psi.size)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORM_ATOL:
        raise ValidationError(f"state vector norm is {norm:.15g}, expected 1")
    return psi


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return np.outer(psi, psi.conj())


def basis_state(index: int, dim: int) -> np.ndarray:
    v = np.zeros(check_dim(dim), dtype=complex)
    v[index] = 1.0
    return v


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def _fix_phases(V: np.ndarray) -> np.ndarray:
    # first non-negligible entry of each column made real positive
    V = V.copy()
    for k in range(V.shape[1]):
        col = V[:, k]
        idx = int(np.argmax(np.abs(col) > 1e-10))
        ph = col[idx] / abs(col[idx])
        V[:, k] = col / ph
    return V


def spectral_decomposition(A) -> SpectralDecomposition:
    """Eigen-decomposition of a Hermitian operator, eigenvalues descending.

    Eigenvectors are phase-fixed and ties are ordered by the eigenvector
    entries so the output is deterministic.
    """
    A = as_hermitian(A)
    w, V = np.linalg.eigh(A)
    V = _fix_phases(V)
    key_vals = np.round(-w, 12)
    # lexsort: last key is primary
    mags = np.round(np.abs(V), 12)
    keys = [mags[i] for i in range(V.shape[0] - 1, -1, -1)] + [key_vals]
    order = np.lexsort(keys)
    return SpectralDecomposition(w[order].copy(), V[:, order].copy())


def mean_energy(rho, H) -> float:
    rho = np.asarray(rho, dtype=complex)
    H = np.asarray(H, dtype=complex)
    if rho.shape != H.shape:
        raise ValidationError(f"dimension mismatch: state {rho.shape} vs Hamiltonian {H.shape}")
    val = np.einsum("ij,ji->", rho, H)
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise ValidationError(f"Tr[rho H] has imaginary residue {val.imag:.3e}")
    return float(val.real)


def entropy_of_spectrum(p) -> float:
    """-sum p ln p with 0 ln 0 = 0; tiny negative entries are clamped."""
    p = np.asarray(p, dtype=float)
    if p.size and p.min() < -PSD_ATOL:
        raise ValidationError(f"negative probability {p.min():.3e}")
    p = np.clip(p, 0.0, None)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def von_neumann_entropy(rho) -> float:
    rho = _square(rho, "density matrix")
    return entropy_of_spectrum(np.linalg.eigvalsh(rho))


def tensor_product(*ops) -> np.ndarray:
    """Kronecker product; the first argument is cell 1 (leftmost factor)."""
    if len(ops) == 1 and not isinstance(ops[0], np.ndarray) and isinstance(ops[0], (list, tuple)):
        ops = tuple(ops[0])
    arrays = [np.asarray(o, dtype=complex) for o in ops]
    total = int(np.prod([a.shape[0] for a in arrays]))
    check_dim(total)
    return reduce(np.kron, arrays)


def tensor_power(A, n: int) -> np.ndarray:
    return tensor_product(*([A] * n))


def local_hamiltonian(h, n: int) -> np.ndarray:
    """Non-interacting array Hamiltonian sum_j h_j on n identical cells."""
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    check_dim(d**n)
    eye = np.eye(d, dtype=complex)
    H = np.zeros((d**n, d**n), dtype=complex)
    for j in range(n):
        factors = [eye] * n
        factors[j] = h
        H += reduce(np.kron, factors)
    return H


def array_energies(cell_energies: Sequence[float], n: int) -> np.ndarray:
    """Diagonal of the array Hamiltonian for a diagonal cell Hamiltonian."""
    eps = np.asarray(cell_energies, dtype=float)
    check_dim(eps.size**n)
    out = np.zeros(1)
    for _ in range(n):
        out = (out[:, None] + eps[None, :]).reshape(-1)
    return out


def partial_trace(rho, dims: Sequence[int], keep) -> np.ndarray:
    """Reduced state on the cells listed in ``keep`` (int or iterable)."""
    rho = np.asarray(rho, dtype=complex)
    dims = [int(d) for d in dims]
    D = int(np.prod(dims))
    if rho.shape != (D, D):
        raise ValidationError(f"dims {dims} do not factor a matrix of shape {rho.shape}")
    keep = [keep] if np.isscalar(keep) else sorted(int(k) for k in keep)
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise ValidationError(f"keep indices {keep} out of range for {n} cells")
    t = rho.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise SizeError("too many cells for partial_trace")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for j in range(n):
        if j not in keep:
            col[j] = row[j]
    out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    red = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = int(np.prod([dims[k] for k in keep]))
    return red.reshape(dk, dk)


def random_pure_state(dim: int, seed=None) -> np.ndarray:
    rng = rng_from(seed)
    v = rng.standard_normal(check_dim(dim)) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_density_matrix(dim: int, seed=None, rank: int | None = None) -> np.ndarray:
    """Random mixed state from the induced (Ginibre) measure."""
    rng = rng_from(seed)
    rank = dim if rank is None else rank
    G = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = G @ G.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def random_unitary(dim: int, seed=None) -> np.ndarray:
    rng = rng_from(seed)
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(check_dim(dim), random_state=rng)


def random_energy_preserving_unitary(H, seed=None) -> np.ndarray:
    """Diagonal-phase unitary in the eigenbasis of ``H`` (commutes with ``H``)."""
    rng = rng_from(seed)
    H = as_hermitian(H)
    _, V = np.linalg.eigh(H)
    phases = rng.uniform(0.0, 2 * np.pi, size=H.shape[0])
    return (V * np.exp(1j * phases)) @ V.conj().T


def is_diagonal(A, atol: float = 0.0) -> bool:
    A = np.asarray(A)
    off = A - np.diag(np.diag(A))
    return bool(np.max(np.abs(off), initial=0.0) <= atol)


def cell_energies(h) -> np.ndarray:
    """Ascending eigenvalues of a cell Hamiltonian."""
    return np.linalg.eigvalsh(as_hermitian(h))

