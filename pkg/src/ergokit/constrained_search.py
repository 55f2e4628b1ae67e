"""Energy-constrained maximisation of output work functionals.

Inputs are searched over pure states (global or product) or diagonal
states whose mean energy either equals ``E`` or does not exceed it. Every
iterate is pushed back onto the shell by mixing its energy-basis
populations with the ground or top level, which fixes the energy exactly
without penalty terms. A multi-start Nelder-Mead search runs on top of
that, seeded with a few structured witnesses (integer-filling product
states, two-level cat states) alongside random starts.

The cell Hamiltonian is assumed diagonal in the computational basis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .channels import COVARIANT, Dephasing, matrix_to_pairs
from .quantum_core import (
    SizeError,
    ValidationError,
    array_energies,
    as_hermitian,
    check_dim,
    entropy_of_spectrum,
    is_diagonal,
    partial_trace,
    rng_from,
)
from .work_functionals import gibbs_beta_star, gibbs_thermodynamics

FUNCTIONALS = ("ergotropy", "total_ergotropy", "free_energy", "local_ergotropy")
INPUT_CLASSES = ("global_pure", "separable_pure", "diagonal")
CONSTRAINT_TOL = 1e-10
ORACLE_MAX_QUBITS = 6


def default_starts(n: int) -> int:
    return {1: 2, 2: 64, 3: 256}.get(n, 64)


def default_cell_hamiltonian(d: int) -> np.ndarray:
    return np.diag(np.linspace(0.0, 1.0, d)).astype(complex)


@dataclass(frozen=True)
class EnergyShell:
    n: int
    E: float
    mode: str = "exact"

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"number of cells must be >= 1, got {self.n}")
        if self.mode not in ("exact", "at_most"):
            raise ValidationError(f"shell mode must be 'exact' or 'at_most', got {self.mode!r}")
        if self.E < -CONSTRAINT_TOL or self.E > self.n + CONSTRAINT_TOL:
            raise ValidationError(f"infeasible shell: E={self.E} outside [0, {self.n}]")
        object.__setattr__(self, "E", min(max(float(self.E), 0.0), float(self.n)))


@dataclass(frozen=True)
class SearchConfig:
    functional: str = "ergotropy"
    input_class: str = "global_pure"
    starts: int | None = None
    seed: int = 0
    tolerance: float = 1e-8
    nonneg_amplitudes: bool = True
    beta: float | None = None
    cell_h: object = None
    maxiter: int | None = None
    seed_states: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.functional not in FUNCTIONALS:
            raise ValidationError(f"unsupported functional {self.functional!r}")
        if self.input_class not in INPUT_CLASSES:
            raise ValidationError(f"unsupported input class {self.input_class!r}")
        if self.starts is not None and self.starts < 1:
            raise ValidationError("starts must be >= 1")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        if self.functional == "free_energy" and not (self.beta and self.beta > 0 and math.isfinite(self.beta)):
            raise ValidationError("free_energy search needs a positive finite beta")


@dataclass
class SearchResult:
    value: float
    witness_state: np.ndarray
    achieved_energy: float
    starts: int
    converged: bool
    best_start: int = 0
    input_class: str = "global_pure"

    def to_dict(self) -> dict:
        w = np.asarray(self.witness_state)
        return {
            "value": float(self.value),
            "witness_state": matrix_to_pairs(w[None, :])[0],
            "achieved_energy": float(self.achieved_energy),
            "starts": int(self.starts),
            "converged": bool(self.converged),
        }


# ---------------------------------------------------------------- evaluators


class _Problem:
    """Everything fixed for one (channel, shell, config) triple."""

    def __init__(self, ch, shell: EnergyShell, cfg: SearchConfig):
        self.ch, self.shell, self.cfg = ch, shell, cfg
        self.n, self.d = shell.n, ch.dim
        self.D = check_dim(self.d**self.n)
        h = default_cell_hamiltonian(self.d) if cfg.cell_h is None else as_hermitian(cfg.cell_h, role="hamiltonian")
        if h.shape[0] != self.d:
            raise ValidationError(f"cell Hamiltonian dimension {h.shape[0]} != channel dimension {self.d}")
        if not is_diagonal(h, 1e-12):
            raise ValidationError("constrained search expects a cell Hamiltonian diagonal in the computational basis")
        self.eps = np.real(np.diag(h)).copy()
        self.En = array_energies(self.eps, self.n)
        self.En_sorted = np.sort(self.En)
        self.ground, self.top = int(np.argmin(self.En)), int(np.argmax(self.En))
        self.cell_ground, self.cell_top = int(np.argmin(self.eps)), int(np.argmax(self.eps))
        self.complex_amp = not (cfg.nonneg_amplitudes and ch.covariance == COVARIANT)
        if cfg.functional == "free_energy":
            self.lnZ = self.n * gibbs_thermodynamics(cfg.beta, self.eps)[0]
        self._mask = None
        if isinstance(ch, Dephasing):
            m = ch.cell_mask()
            self._mask = m
            for _ in range(self.n - 1):
                self._mask = np.kron(self._mask, m)

    def functional(self, rho_out: np.ndarray) -> float:
        f = self.cfg.functional
        if f == "local_ergotropy":
            dims = [self.d] * self.n
            tot = 0.0
            for j in range(self.n):
                r = partial_trace(rho_out, dims, j) if self.n > 1 else rho_out
                w = np.linalg.eigvalsh(r)
                tot += float(np.real(np.diag(r)) @ self.eps) - float(np.sort(w)[::-1] @ np.sort(self.eps))
            return tot
        w = np.linalg.eigvalsh(rho_out)
        mean = float(np.real(np.diag(rho_out)) @ self.En)
        if f == "ergotropy":
            return mean - float(w[::-1] @ self.En_sorted)
        if f == "total_ergotropy":
            return mean - gibbs_beta_star(entropy_of_spectrum(w), self.En_sorted).gibbs_energy
        return mean - entropy_of_spectrum(w) / self.cfg.beta + self.lnZ / self.cfg.beta

    def output(self, rho_in: np.ndarray) -> np.ndarray:
        if self._mask is not None:
            return rho_in * self._mask
        return self.ch.apply_n(rho_in, self.n) if self.n > 1 else self.ch.apply(rho_in)


def repair_populations(p: np.ndarray, energies: np.ndarray, E: float, mode: str, lo: int, hi: int) -> np.ndarray:
    """Mix ``p`` with the ground (index ``lo``) or top (index ``hi``) level so
    that ``p @ energies`` hits the shell."""
    e = float(p @ energies)
    if mode == "at_most" and e <= E:
        return p
    if abs(e - E) <= 0.0:
        return p
    out = p.copy()
    if e > E:
        t = (e - E) / (e - energies[lo])
        out *= 1.0 - t
        out[lo] += t
    else:
        t = (E - e) / (energies[hi] - e)
        out *= 1.0 - t
        out[hi] += t
    return out


def _repaired_amplitudes(z: np.ndarray, pb: _Problem) -> np.ndarray:
    nrm = np.linalg.norm(z)
    if nrm < 1e-300:
        z = np.zeros(pb.D, dtype=complex)
        z[pb.ground] = 1.0
        nrm = 1.0
    psi = z / nrm
    p = np.abs(psi) ** 2
    p2 = repair_populations(p, pb.En, pb.shell.E, pb.shell.mode, pb.ground, pb.top)
    phase = np.where(np.abs(psi) > 1e-300, psi / np.maximum(np.abs(psi), 1e-300), 1.0)
    return np.sqrt(np.clip(p2, 0.0, None)) * phase


def _product_amplitudes(x: np.ndarray, pb: _Problem) -> np.ndarray:
    d, n = pb.d, pb.n
    width = 2 * d if pb.complex_amp else d
    cells = []
    for j in range(n):
        seg = x[j * width : (j + 1) * width]
        z = seg[:d] + 1j * seg[d:] if pb.complex_amp else np.abs(seg).astype(complex)
        nrm = np.linalg.norm(z)
        if nrm < 1e-300:
            z = np.zeros(d, dtype=complex)
            z[pb.cell_ground] = 1.0
            nrm = 1.0
        cells.append(z / nrm)
    probs = [np.abs(c) ** 2 for c in cells]
    e = sum(float(p @ pb.eps) for p in probs)
    E = pb.shell.E
    if not (pb.shell.mode == "at_most" and e <= E) and e != E:
        if e > E:
            t = (e - E) / (e - n * pb.eps[pb.cell_ground])
            target = pb.cell_ground
        else:
            t = (E - e) / (n * pb.eps[pb.cell_top] - e)
            target = pb.cell_top
        new = []
        for c, p in zip(cells, probs):
            q = (1.0 - t) * p
            q[target] += t
            ph = np.where(np.abs(c) > 1e-300, c / np.maximum(np.abs(c), 1e-300), 1.0)
            new.append(np.sqrt(np.clip(q, 0.0, None)) * ph)
        cells = new
    out = cells[0]
    for c in cells[1:]:
        out = np.kron(out, c)
    return out


def _decode(x: np.ndarray, pb: _Problem):
    """Parameter vector -> (input density matrix, witness vector)."""
    cls = pb.cfg.input_class
    if cls == "separable_pure":
        psi = _product_amplitudes(x, pb)
        return np.outer(psi, psi.conj()), psi
    if cls == "diagonal":
        p = x**2
        s = p.sum()
        p = p / s if s > 0 else np.eye(pb.D)[pb.ground]
        p = repair_populations(p, pb.En, pb.shell.E, pb.shell.mode, pb.ground, pb.top)
        return np.diag(p).astype(complex), p
    z = x[: pb.D] + 1j * x[pb.D :] if pb.complex_amp else np.abs(x).astype(complex)
    psi = _repaired_amplitudes(z, pb)
    return np.outer(psi, psi.conj()), psi


def _encode_global(psi: np.ndarray, pb: _Problem) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if pb.cfg.input_class == "diagonal":
        return np.abs(psi)
    if pb.complex_amp:
        return np.concatenate([psi.real, psi.imag])
    return np.abs(psi)


def _encode_product(cells, pb: _Problem) -> np.ndarray:
    parts = []
    for c in cells:
        c = np.asarray(c, dtype=complex)
        parts.append(np.concatenate([c.real, c.imag]) if pb.complex_amp else np.abs(c))
    return np.concatenate(parts)


# ------------------------------------------------------------ structured starts


def cell_state_with_energy(e: float, eps: np.ndarray) -> np.ndarray:
    """sqrt(1-f)|ground> + sqrt(f)|top> with mean energy ``e``."""
    lo, hi = int(np.argmin(eps)), int(np.argmax(eps))
    f = 0.0 if eps[hi] == eps[lo] else (e - eps[lo]) / (eps[hi] - eps[lo])
    f = min(max(f, 0.0), 1.0)
    v = np.zeros(eps.size, dtype=complex)
    v[lo] += math.sqrt(1.0 - f)
    v[hi] += math.sqrt(f)
    return v


def integer_filling_cells(n: int, E: float, eps: np.ndarray) -> list[np.ndarray]:
    """Cells of the product witness |top>^k |ground>^(n-k-1) |psi_(E-k)>."""
    k = min(int(math.floor(E + 1e-12)), n)
    top = cell_state_with_energy(eps.max(), eps)
    ground = cell_state_with_energy(eps.min(), eps)
    if k >= n:
        return [top] * n
    rest = E - k
    return [top] * k + [ground] * (n - k - 1) + [cell_state_with_energy(rest, eps)]


def _kron_all(vectors) -> np.ndarray:
    out = np.asarray(vectors[0], dtype=complex)
    for v in vectors[1:]:
        out = np.kron(out, v)
    return out


def cat_witness(n: int, E: float, eps: np.ndarray) -> np.ndarray:
    """sqrt(1-E/n)|ground...ground> + sqrt(E/n)|top...top>."""
    g = _kron_all([cell_state_with_energy(eps.min(), eps)] * n)
    t = _kron_all([cell_state_with_energy(eps.max(), eps)] * n)
    f = E / n
    return math.sqrt(1.0 - f) * g + math.sqrt(f) * t


def _structured_starts(pb: _Problem) -> list[np.ndarray]:
    n, E, eps = pb.n, pb.shell.E, pb.eps
    fill = integer_filling_cells(n, E, eps)
    even = [cell_state_with_energy(E / n, eps)] * n
    out = []
    if pb.cfg.input_class == "separable_pure":
        out.append(_encode_product(fill, pb))
        out.append(_encode_product(even, pb))
        for s in pb.cfg.seed_states:
            if isinstance(s, (list, tuple)) and len(s) == n:
                out.append(_encode_product(s, pb))
        return out
    out.append(_encode_global(_kron_all(fill), pb))
    if n > 1:
        out.append(_encode_global(cat_witness(n, E, eps), pb))
        out.append(_encode_global(_kron_all(even), pb))
    for s in pb.cfg.seed_states:
        s = np.asarray(s, dtype=complex).reshape(-1)
        if s.size == pb.D:
            out.append(_encode_global(s, pb))
    return out


def _random_start(pb: _Problem, rng: np.random.Generator) -> np.ndarray:
    if pb.cfg.input_class == "separable_pure":
        width = (2 if pb.complex_amp else 1) * pb.d
        return rng.standard_normal(width * pb.n)
    if pb.cfg.input_class == "diagonal" or not pb.complex_amp:
        return np.abs(rng.standard_normal(pb.D))
    return rng.standard_normal(2 * pb.D)


# ------------------------------------------------------------------- driver


def _local_search(f, x0, maxiter, tol):
    opts = {"maxiter": maxiter, "maxfev": 2 * maxiter, "xatol": 1e-10, "fatol": tol * 1e-2, "adaptive": x0.size > 4}
    res = minimize(f, x0, method="Nelder-Mead", options=opts)
    # restart from the optimum to escape a collapsed simplex
    res2 = minimize(f, res.x, method="Nelder-Mead", options=opts)
    best = res2 if res2.fun <= res.fun else res
    return best.x, -best.fun, bool(res.success or res2.success)


def _run(ch, shell: EnergyShell, cfg: SearchConfig) -> SearchResult:
    pb = _Problem(ch, shell, cfg)
    starts = cfg.starts or default_starts(shell.n)
    rng = rng_from(cfg.seed)
    structured = _structured_starts(pb)
    nparams = structured[0].size if structured else _random_start(pb, rng).size
    maxiter = cfg.maxiter or max(2000, 400 * nparams)

    def neg(x):
        rho_in, _ = _decode(x, pb)
        return -pb.functional(pb.output(rho_in))

    best = (-math.inf, None, False, 0)
    total = max(starts, len(structured))
    for k in range(total):
        x0 = structured[k] if k < len(structured) else _random_start(pb, rng)
        x, val, ok = _local_search(neg, np.asarray(x0, dtype=float), maxiter, cfg.tolerance)
        start_val = -neg(x0)
        if start_val > val:
            x, val = np.asarray(x0, dtype=float), start_val
        if val > best[0] + 1e-15:
            best = (val, x, ok, k)
    rho_in, witness = _decode(best[1], pb)
    achieved = float(np.real(np.diag(rho_in)) @ pb.En)
    return SearchResult(
        value=float(best[0]),
        witness_state=witness,
        achieved_energy=achieved,
        starts=total,
        converged=best[2],
        best_start=best[3],
        input_class=cfg.input_class,
    )


def max_output_functional(ch, shell: EnergyShell, cfg: SearchConfig | None = None) -> SearchResult:
    """Maximum of the configured output functional over the input shell.

    The returned value is attained by ``witness_state`` and is therefore a
    certified lower bound of the true maximum.
    """
    cfg = cfg or SearchConfig()
    if shell.n == 0:
        raise ValidationError("empty array")
    return _run(ch, shell, cfg)


def max_output_separable(ch, shell: EnergyShell, cfg: SearchConfig | None = None) -> SearchResult:
    cfg = cfg or SearchConfig()
    return _run(ch, shell, _with(cfg, input_class="separable_pure"))


def _with(cfg: SearchConfig, **changes) -> SearchConfig:
    kw = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    kw.update(changes)
    return SearchConfig(**kw)


def evaluate_input(ch, n: int, psi, cfg: SearchConfig | None = None) -> float:
    """Functional value of the channel output for a given pure input."""
    cfg = cfg or SearchConfig()
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    h = default_cell_hamiltonian(ch.dim) if cfg.cell_h is None else np.asarray(cfg.cell_h)
    E = float(np.abs(psi) ** 2 @ array_energies(np.real(np.diag(h)), n))
    pb = _Problem(ch, EnergyShell(n, min(E, n), "exact"), cfg)
    return pb.functional(pb.output(np.outer(psi, psi.conj())))


# ------------------------------------------------- complete dephasing solver


@dataclass
class DiagonalSolution:
    value: float
    ratio: float
    support: tuple
    populations: tuple
    search_value: float | None = None


def diagonal_ergotropy(p, energies) -> float:
    p = np.asarray(p, dtype=float)
    e = np.asarray(energies, dtype=float)
    return float(p @ e - np.sort(p)[::-1] @ np.sort(e))


def full_dephasing_diagonal_solver(n: int, E: float, h=None, cross_check: bool = False, cfg=None) -> DiagonalSolution:
    """Maximum output ergotropy of the completely dephasing channel at input
    energy exactly ``E``.

    The output is diag(p) with p the input populations; its ergotropy is
    convex in p, so the maximum over the feasible polytope sits on a vertex
    with at most two occupied levels. All such vertices are enumerated.
    With ``cross_check`` the generic pure-state search is run as well.
    """
    h = default_cell_hamiltonian(2) if h is None else as_hermitian(h, role="hamiltonian")
    eps = np.real(np.diag(h))
    En = array_energies(eps, n)
    if E < -CONSTRAINT_TOL or E > En.max() + CONSTRAINT_TOL:
        raise ValidationError(f"infeasible shell: E={E}")
    levels = np.unique(np.round(En, 12))
    s = np.sort(En)
    s0, s1 = s[0], s[1] if s.size > 1 else s[0]
    best = (-math.inf, (), ())
    for a in levels:
        if abs(a - E) <= 1e-12:
            val = E - s0
            if val > best[0]:
                best = (val, (float(a),), (1.0,))
    for a, b in itertools.combinations(levels, 2):
        if not (a < E < b):
            continue
        pa, pb = (b - E) / (b - a), (E - a) / (b - a)
        val = E - (max(pa, pb) * s0 + min(pa, pb) * s1)
        if val > best[0] + 1e-15:
            best = (val, (float(a), float(b)), (float(pa), float(pb)))
    value = max(best[0], 0.0)
    search_value = None
    if cross_check:
        cfg = cfg or SearchConfig()
        res = max_output_functional(Dephasing(1.0, h.shape[0]), EnergyShell(n, E, "exact"), _with(cfg, cell_h=h))
        search_value = res.value
        value = max(value, res.value)
    ratio = value / E if E > 0 else 0.0
    return DiagonalSolution(value, ratio, best[1], best[2], search_value)


# ------------------------------------------------------------------ oracle


def _batched_functional(rho_out, pb: _Problem) -> np.ndarray:
    f = pb.cfg.functional
    if f == "local_ergotropy":
        B, n = rho_out.shape[0], pb.n
        t = rho_out.reshape((B,) + (pb.d,) * (2 * n))
        letters = "acdefghijklmnopqrstuvwxyz"
        total = np.zeros(B)
        for j in range(n):
            row = list(letters[:n])
            col = list(letters[n : 2 * n])
            for k in range(n):
                if k != j:
                    col[k] = row[k]
            r = np.einsum("b" + "".join(row) + "".join(col) + "->b" + row[j] + col[j], t)
            w = np.linalg.eigvalsh(r)
            mean = np.real(np.einsum("bii,i->b", r, pb.eps))
            total += mean - w[:, ::-1] @ np.sort(pb.eps)
        return total
    w = np.linalg.eigvalsh(rho_out)
    mean = np.real(np.einsum("bii,i->b", rho_out, pb.En))
    if f == "ergotropy":
        return mean - w[:, ::-1] @ pb.En_sorted
    ents = np.array([entropy_of_spectrum(row) for row in w])
    if f == "total_ergotropy":
        return mean - np.array([gibbs_beta_star(s, pb.En_sorted).gibbs_energy for s in ents])
    return mean - ents / pb.cfg.beta + pb.lnZ / pb.cfg.beta


def _batched_repair(p: np.ndarray, pb: _Problem) -> np.ndarray:
    E = pb.shell.E
    e = p @ pb.En
    out = p.copy()
    down = e > E
    up = (e < E) & (pb.shell.mode == "exact")
    t_down = np.where(down, (e - E) / np.where(down, e - pb.En[pb.ground], 1.0), 0.0)
    t_up = np.where(up, (E - e) / np.where(up, pb.En[pb.top] - e, 1.0), 0.0)
    out *= (1.0 - t_down - t_up)[:, None]
    out[:, pb.ground] += t_down
    out[:, pb.top] += t_up
    return out


def brute_force_shell_oracle(ch, shell: EnergyShell, cfg: SearchConfig | None = None, grid_density: int = 10**6, batch: int = 20_000) -> float:
    """Best functional value over ``grid_density`` random members of the
    input family (Haar pure, product pure or diagonal states on the shell).

    Independent of the optimiser; meant for tiny instances only.
    """
    cfg = cfg or SearchConfig()
    pb = _Problem(ch, shell, cfg)
    if shell.n * math.log2(pb.d) > ORACLE_MAX_QUBITS + 1e-9:
        raise SizeError(f"oracle limited to n*log2(d) <= {ORACLE_MAX_QUBITS}")
    rng = rng_from(cfg.seed + 7919)
    best = -math.inf
    remaining = int(grid_density)
    while remaining > 0:
        B = min(batch, remaining)
        remaining -= B
        if cfg.input_class == "separable_pure":
            cells = rng.standard_normal((pb.n, B, pb.d)) + 1j * rng.standard_normal((pb.n, B, pb.d))
            cells /= np.linalg.norm(cells, axis=2, keepdims=True)
            probs = np.abs(cells) ** 2
            e_cells = probs @ pb.eps
            e = e_cells.sum(axis=0)
            E = shell.E
            down = e > E
            up = (e < E) & (shell.mode == "exact")
            t = np.where(down, (e - E) / np.where(down, e - pb.n * pb.eps[pb.cell_ground], 1.0), 0.0)
            u = np.where(up, (E - e) / np.where(up, pb.n * pb.eps[pb.cell_top] - e, 1.0), 0.0)
            probs = probs * (1.0 - t - u)[None, :, None]
            probs[:, :, pb.cell_ground] += t[None, :]
            probs[:, :, pb.cell_top] += u[None, :]
            phases = cells / np.maximum(np.abs(cells), 1e-300)
            cells = np.sqrt(np.clip(probs, 0, None)) * phases
            psi = cells[0]
            for j in range(1, pb.n):
                psi = (psi[:, :, None] * cells[j][:, None, :]).reshape(B, -1)
            rho = psi[:, :, None] * psi[:, None, :].conj()
        elif cfg.input_class == "diagonal":
            p = rng.dirichlet(np.ones(pb.D), size=B)
            p = _batched_repair(p, pb)
            rho = np.zeros((B, pb.D, pb.D), dtype=complex)
            rho[:, np.arange(pb.D), np.arange(pb.D)] = p
        else:
            z = rng.standard_normal((B, pb.D)) + 1j * rng.standard_normal((B, pb.D))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            p = _batched_repair(np.abs(z) ** 2, pb)
            psi = np.sqrt(np.clip(p, 0, None)) * z / np.maximum(np.abs(z), 1e-300)
            rho = psi[:, :, None] * psi[:, None, :].conj()
        out = ch.apply_n(rho, pb.n) if pb.n > 1 else ch.apply(rho)
        vals = _batched_functional(out, pb)
        best = max(best, float(vals.max()))
    return best
