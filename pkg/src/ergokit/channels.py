"""Noise channels acting identically and independently on every q-cell.

Channel actions are written entrywise in the cell energy eigenbasis (the
computational basis), so an n-cell tensor power never materialises a
superoperator. All ``apply*`` functions accept a leading batch shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .quantum_core import (
    ValidationError,
    as_density_matrix,
    as_hermitian,
    check_dim,
    is_diagonal,
)

COVARIANT = "n_covariant_all_n"
NOT_COVARIANT = "none"
_RANGE_ATOL = 1e-12


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not (-_RANGE_ATOL <= kappa <= 1.0 + _RANGE_ATOL):
        raise ValidationError(f"dephasing parameter kappa={kappa} outside [0, 1]")
    return min(max(kappa, 0.0), 1.0)


def depolarizing_range(d: int) -> tuple[float, float]:
    return -1.0 / (d * d - 1), 1.0


def _check_lambda(lam: float, d: int) -> float:
    lam = float(lam)
    lo, hi = depolarizing_range(d)
    if not (lo - _RANGE_ATOL <= lam <= hi + _RANGE_ATOL):
        raise ValidationError(f"depolarizing parameter lambda={lam} outside [{lo:.6g}, 1] for d={d}")
    return min(max(lam, lo), hi)


def _cells(rho: np.ndarray, d: int) -> int:
    D = rho.shape[-1]
    n = int(round(np.log(D) / np.log(d))) if d > 1 else 1
    if d**n != D:
        raise ValidationError(f"state dimension {D} is not a power of the cell dimension {d}")
    return n


def dephasing_mask(kappa: float, d: int = 2, coefficients=None) -> np.ndarray:
    """Single-cell multiplier matrix: 1 on the diagonal, sqrt(1-kappa) elsewhere."""
    kappa = _check_kappa(kappa)
    if coefficients is not None:
        C = np.asarray(coefficients, dtype=complex)
        if C.shape != (d, d):
            raise ValidationError(f"coefficient matrix must be {d}x{d}")
        C = C.copy()
        np.fill_diagonal(C, 1.0)
        return C
    C = np.full((d, d), np.sqrt(1.0 - kappa), dtype=complex)
    np.fill_diagonal(C, 1.0)
    return C


def _apply_dephasing_array(rho, cell_mask: np.ndarray, n: int) -> np.ndarray:
    mask = reduce(np.kron, [cell_mask] * n) if n > 1 else cell_mask
    return rho * mask


def apply_dephasing(kappa: float, rho, H_basis=None, coefficients=None) -> np.ndarray:
    """Dephase ``rho`` in the eigenbasis of ``H_basis`` (default: computational basis).

    Populations are untouched and every coherence is multiplied by
    ``sqrt(1 - kappa)`` (or the matching entry of ``coefficients``).
    """
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[-1]
    mask = dephasing_mask(kappa, d, coefficients)
    if H_basis is None or is_diagonal(H_basis):
        return rho * mask
    H = as_hermitian(H_basis)
    _, V = np.linalg.eigh(H)
    Vh = V.conj().T
    return V @ ((Vh @ rho @ V) * mask) @ Vh


def apply_depolarizing(lam: float, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[-1]
    lam = _check_lambda(lam, d)
    tr = np.trace(rho, axis1=-2, axis2=-1)[..., None, None]
    return lam * rho + (1.0 - lam) * tr * np.eye(d) / d


def apply_replacement(rho0, rho) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-1] != rho0.shape[-1]:
        raise ValidationError(f"replacement state dimension {rho0.shape[-1]} != input {rho.shape[-1]}")
    tr = np.trace(rho, axis1=-2, axis2=-1)[..., None, None]
    return tr * rho0


def _depolarize_every_cell(rho: np.ndarray, lam: float, d: int, n: int) -> np.ndarray:
    batch = rho.shape[:-2]
    nb = len(batch)
    t = rho.reshape(batch + (d,) * (2 * n))
    eye = np.eye(d)
    for j in range(n):
        reduced = np.trace(t, axis1=nb + j, axis2=nb + n + j)
        back = np.moveaxis(np.multiply.outer(reduced, eye), [-2, -1], [nb + j, nb + n + j])
        t = lam * t + (1.0 - lam) / d * back
    return t.reshape(rho.shape)


def _phase_or_dense_power(U: np.ndarray, n: int) -> np.ndarray:
    return reduce(np.kron, [U] * n) if n > 1 else U


@dataclass(frozen=True)
class Dephasing:
    kappa: float
    dim: int = 2
    coefficients: tuple | None = None
    kind: str = field(default="dephasing", init=False)

    def __post_init__(self):
        object.__setattr__(self, "kappa", _check_kappa(self.kappa))
        check_dim(self.dim)
        if self.coefficients is not None:
            C = np.asarray(self.coefficients, dtype=complex)
            if C.shape != (self.dim, self.dim):
                raise ValidationError(f"coefficient matrix must be {self.dim}x{self.dim}")
            object.__setattr__(self, "coefficients", tuple(map(tuple, C.tolist())))

    @property
    def covariance(self) -> str:
        return COVARIANT

    def cell_mask(self) -> np.ndarray:
        return dephasing_mask(self.kappa, self.dim, self.coefficients)

    def apply(self, rho) -> np.ndarray:
        return np.asarray(rho, dtype=complex) * self.cell_mask()

    def apply_n(self, rho, n: int) -> np.ndarray:
        return _apply_dephasing_array(np.asarray(rho, dtype=complex), self.cell_mask(), n)

    def to_dict(self) -> dict:
        out = {"kind": "dephasing", "kappa": self.kappa, "dim": self.dim}
        if self.coefficients is not None:
            out["coefficients"] = [[[c.real, c.imag] for c in row] for row in self.coefficients]
        return out


@dataclass(frozen=True)
class Depolarizing:
    lam: float
    dim: int = 2
    kind: str = field(default="depolarizing", init=False)

    def __post_init__(self):
        check_dim(self.dim)
        object.__setattr__(self, "lam", _check_lambda(self.lam, self.dim))

    @property
    def covariance(self) -> str:
        return COVARIANT

    def apply(self, rho) -> np.ndarray:
        return apply_depolarizing(self.lam, rho)

    def apply_n(self, rho, n: int) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return _depolarize_every_cell(rho, self.lam, self.dim, n)

    def to_dict(self) -> dict:
        return {"kind": "depolarizing", "lambda": self.lam, "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Replacement:
    rho0: np.ndarray
    kind: str = field(default="replacement", init=False)

    def __post_init__(self):
        object.__setattr__(self, "rho0", as_density_matrix(self.rho0))

    @property
    def dim(self) -> int:
        return self.rho0.shape[0]

    @property
    def covariance(self) -> str:
        return COVARIANT

    def apply(self, rho) -> np.ndarray:
        return apply_replacement(self.rho0, rho)

    def apply_n(self, rho, n: int) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        out = reduce(np.kron, [self.rho0] * n) if n > 1 else self.rho0
        tr = np.trace(rho, axis1=-2, axis2=-1)[..., None, None]
        return tr * out

    def to_dict(self) -> dict:
        return {"kind": "replacement", "dim": self.dim, "rho0": matrix_to_pairs(self.rho0)}


@dataclass(frozen=True, eq=False)
class Composed:
    """Two-slot composition of a channel with a single-cell unitary.

    ``order="after"`` is U_V o channel, ``order="before"`` is channel o U_V.
    """

    channel: object
    unitary: np.ndarray
    order: str = "after"
    kind: str = field(default="composed", init=False)

    def __post_init__(self):
        U = np.asarray(self.unitary, dtype=complex)
        d = self.channel.dim
        if U.shape != (d, d) or not np.allclose(U @ U.conj().T, np.eye(d), atol=1e-10):
            raise ValidationError(f"composed slot must be a {d}x{d} unitary")
        if self.order not in ("after", "before"):
            raise ValidationError(f"order must be 'after' or 'before', got {self.order!r}")
        object.__setattr__(self, "unitary", U)

    @property
    def dim(self) -> int:
        return self.channel.dim

    @property
    def covariance(self) -> str:
        # a diagonal-phase slot keeps energy-preserving covariance
        if self.channel.covariance == COVARIANT and is_diagonal(self.unitary, 1e-12):
            return COVARIANT
        return NOT_COVARIANT

    def _rotate(self, rho, n):
        Un = _phase_or_dense_power(self.unitary, n)
        return Un @ rho @ Un.conj().T

    def apply(self, rho) -> np.ndarray:
        return self.apply_n(rho, 1)

    def apply_n(self, rho, n: int) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        if self.order == "after":
            return self._rotate(self.channel.apply_n(rho, n), n)
        return self.channel.apply_n(self._rotate(rho, n), n)

    def to_dict(self) -> dict:
        return {
            "kind": "composed",
            "dim": self.dim,
            "order": self.order,
            "channel": self.channel.to_dict(),
            "unitary": matrix_to_pairs(self.unitary),
        }


Channel = Dephasing | Depolarizing | Replacement | Composed


def apply_tensor_power(ch, n: int, rho_n) -> np.ndarray:
    """Action of ``ch`` applied independently to each of ``n`` cells."""
    rho_n = np.asarray(rho_n, dtype=complex)
    n = int(n)
    check_dim(rho_n.shape[-1])
    if ch.dim**n != rho_n.shape[-1]:
        raise ValidationError(
            f"state dimension {rho_n.shape[-1]} does not match {n} cells of dimension {ch.dim}"
        )
    return ch.apply_n(rho_n, n)


def depolarized_energy(lam: float, E: float, n: int, h) -> float:
    """Mean output energy of n depolarized cells whose input energy is E."""
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    lam = _check_lambda(lam, d)
    return float(lam * E + (1.0 - lam) * n * np.trace(h).real / d)


def matrix_to_pairs(A) -> list:
    A = np.asarray(A, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


def pairs_to_matrix(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def channel_from_dict(desc: dict):
    kind = desc.get("kind")
    if kind == "dephasing":
        coeffs = desc.get("coefficients")
        if coeffs is not None:
            coeffs = pairs_to_matrix(coeffs)
        return Dephasing(desc["kappa"], int(desc.get("dim", 2)), coeffs)
    if kind == "depolarizing":
        lam = desc["lambda"] if "lambda" in desc else desc["lam"]
        return Depolarizing(lam, int(desc.get("dim", 2)))
    if kind == "replacement":
        return Replacement(pairs_to_matrix(desc["rho0"]))
    if kind == "composed":
        return Composed(
            channel_from_dict(desc["channel"]), pairs_to_matrix(desc["unitary"]), desc.get("order", "after")
        )
    raise ValidationError(f"unknown channel kind {kind!r}")


def channel_to_json(ch) -> str:
    return json.dumps(ch.to_dict(), sort_keys=True)


def channel_from_json(text: str):
    return channel_from_dict(json.loads(text))
