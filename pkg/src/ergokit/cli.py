"""``ergokit`` command line: single-state reports, figure data and tables.

Every command writes CSV/JSON tables (the canonical output) and optional
SVG/PNG plots into ``--out``. Exit codes: 0 success, 2 invalid input,
3 optimizer non-convergence (all output is still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import plotting
from .channels import Dephasing, Depolarizing, depolarizing_range, matrix_to_pairs
from .constrained_search import (
    EnergyShell,
    SearchConfig,
    full_dephasing_diagonal_solver,
    max_output_functional,
    max_output_separable,
)
from .quantum_core import ValidationError, as_density_matrix, as_hermitian, local_hamiltonian
from .work_functionals import work_report

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3
FORMATS = ("csv", "json", "svg", "png")
DEFAULT_POINTS = 101
DEFAULT_POINTS_N2 = 21


class NonConvergence(Exception):
    pass


# ------------------------------------------------------------------ parsing


def parse_grid(text: str, lo: float, hi: float, name: str) -> np.ndarray:
    """``a:b:num`` (inclusive linspace), ``x,y,z`` or a single number."""
    try:
        if ":" in text:
            a, b, num = text.split(":")
            vals = np.linspace(float(a), float(b), int(num))
        else:
            vals = np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError as exc:
        raise ValidationError(f"cannot parse {name} grid {text!r}: {exc}") from None
    if vals.size == 0:
        raise ValidationError(f"{name} grid is empty")
    tol = 1e-12
    if np.any(vals < lo - tol) or np.any(vals > hi + tol):
        raise ValidationError(f"{name} grid leaves [{lo:.6g}, {hi:.6g}]")
    return np.clip(vals, lo, hi)


def default_grid(lo: float, hi: float, num: int) -> str:
    return f"{lo!r}:{hi!r}:{num}"


def parse_spectrum(text: str | None, dim: int | None) -> np.ndarray:
    """Cell Hamiltonian from ``--spectrum`` ('equal' or comma energies)."""
    if text is None or text == "equal":
        d = dim or 2
        return np.diag(np.linspace(0.0, 1.0, d)).astype(complex)
    try:
        eps = [float(t) for t in text.split(",")]
    except ValueError:
        raise ValidationError(f"cannot parse spectrum {text!r}") from None
    if dim is not None and dim != len(eps):
        raise ValidationError(f"--dim {dim} disagrees with a spectrum of {len(eps)} levels")
    return as_hermitian(np.diag(eps).astype(complex), role="hamiltonian")


def read_matrix(path: str) -> np.ndarray:
    """JSON file ``{"dim": d, "entries": [[re, im], ...]}`` in row-major order.

    Nested rows (``[[[re, im], ...], ...]``) are accepted as well.
    """
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read matrix file {path}: {exc}") from None
    if not isinstance(obj, dict) or "dim" not in obj:
        raise ValidationError(f"{path}: matrix file needs a 'dim' field")
    d = int(obj["dim"])
    raw = obj.get("entries", obj.get("data"))
    if raw is None:
        raise ValidationError(f"{path}: matrix file needs an 'entries' field")
    arr = np.asarray(raw, dtype=float)
    if arr.shape[-1] != 2 or arr.size != 2 * d * d:
        raise ValidationError(f"{path}: expected {d * d} [re, im] pairs")
    arr = arr.reshape(d, d, 2)
    return arr[..., 0] + 1j * arr[..., 1]


def write_matrix(path, A) -> None:
    A = np.asarray(A, dtype=complex)
    pairs = [p for row in matrix_to_pairs(A) for p in row]
    Path(path).write_text(json.dumps({"dim": A.shape[0], "entries": pairs}) + "\n")


def resolve_threads(arg: int | None) -> int:
    if arg is None:
        env = os.environ.get("ERGOKIT_THREADS")
        if env:
            try:
                arg = int(env)
            except ValueError:
                raise ValidationError(f"ERGOKIT_THREADS={env!r} is not an integer") from None
        else:
            arg = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    if arg < 1:
        raise ValidationError("thread count must be >= 1")
    return arg


def pmap(fn, items, threads: int) -> list:
    """Ordered map over a process pool (serial when threads == 1)."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def channel_from_args(args):
    has_k = getattr(args, "kappa", None) is not None
    has_l = getattr(args, "lam", None) is not None
    if has_k == has_l:
        raise ValidationError("give exactly one of --kappa (dephasing) or --lambda (depolarizing)")
    h = parse_spectrum(getattr(args, "spectrum", None), getattr(args, "dim", None))
    d = h.shape[0]
    if has_k:
        return Dephasing(float(args.kappa), d), h
    return Depolarizing(float(args.lam), d), h


# ------------------------------------------------------------------ output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return "infinity" if math.isinf(x) else x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


class Writer:
    def __init__(self, out: str, formats: str):
        self.out = Path(out)
        fmts = [f.strip() for f in formats.split(",") if f.strip()]
        bad = [f for f in fmts if f not in FORMATS]
        if bad or not fmts:
            raise ValidationError(f"unknown output format(s) {bad}; choose from {', '.join(FORMATS)}")
        self.formats = fmts
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ValidationError(f"output directory {out} is not writable: {exc}") from None
        self.written: list[Path] = []

    def table(self, name: str, header: list, rows: list, with_json: bool = True) -> None:
        if "csv" in self.formats:
            p = self.out / f"{name}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for r in rows:
                    w.writerow([_fmt(v) for v in r])
            self.written.append(p)
        if with_json and "json" in self.formats:
            recs = [{k: _jsonable(v) for k, v in zip(header, r)} for r in rows]
            self.json(name, recs)

    def json(self, name: str, obj) -> None:
        if "json" in self.formats:
            p = self.out / f"{name}.json"
            p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
            self.written.append(p)

    def text(self, name: str, csv_text: str, json_text: str) -> None:
        if "csv" in self.formats:
            p = self.out / f"{name}.csv"
            p.write_text(csv_text)
            self.written.append(p)
        if "json" in self.formats:
            p = self.out / f"{name}.json"
            p.write_text(json_text + "\n")
            self.written.append(p)

    def figure(self, name: str, fig) -> None:
        for fmt in ("svg", "png"):
            if fmt in self.formats:
                self.written.append(plotting.save(fig, self.out / name, fmt))
        plotting.plt.close(fig)


def _config(args, **extra) -> SearchConfig:
    return SearchConfig(starts=args.starts, seed=args.seed, **extra)


# ---------------------------------------------------------------- commands


def cmd_report(args, out: Writer) -> int:
    rho = as_density_matrix(read_matrix(args.state))
    H = read_matrix(args.hamiltonian)
    if args.beta is None:
        raise ValidationError("report needs --beta")
    if args.n and args.n > 1:
        h = as_hermitian(H)
        if h.shape[0] ** args.n != rho.shape[0]:
            raise ValidationError(f"state dimension {rho.shape[0]} is not {h.shape[0]}^{args.n}")
        rep = work_report(rho, local_hamiltonian(h, args.n), args.beta, [h.shape[0]] * args.n, [h] * args.n)
    else:
        if H.shape != rho.shape:
            raise ValidationError(f"state shape {rho.shape} does not match Hamiltonian {H.shape}")
        rep = work_report(rho, H, args.beta)
    d = {k: _jsonable(v) for k, v in rep.to_dict().items()}
    out.json("report", d)
    if "csv" in out.formats:
        out.table("report", list(d), [list(d.values())], with_json=False)
    print(json.dumps(d, indent=2, sort_keys=True))
    return EXIT_OK


def _dephasing_row(task):
    kappa, energies, starts, seed = task
    ch = Dephasing(kappa)
    rows, prev = [], ()
    for E in energies:
        cfg = SearchConfig(starts=starts, seed=seed, seed_states=prev)
        g = max_output_functional(ch, EnergyShell(2, E, "exact"), cfg)
        s = max_output_separable(ch, EnergyShell(2, E, "exact"), SearchConfig(starts=starts, seed=seed))
        prev = (g.witness_state,)
        rows.append((g.value, s.value, g.converged and s.converged))
    return rows


def cmd_fig_dephasing(args, out: Writer) -> int:
    n = args.n or 1
    if n not in (1, 2):
        raise ValidationError("fig-dephasing supports --n 1 or --n 2")
    pts = DEFAULT_POINTS if n == 1 else DEFAULT_POINTS_N2
    kappas = parse_grid(args.kappa or default_grid(0.0, 1.0, pts), 0.0, 1.0, "kappa")
    energies = parse_grid(args.energy or default_grid(0.0, float(n), pts), 0.0, float(n), "energy")
    if n == 1:
        rows = [(k, E, asy.dephasing_single_site(k, E)) for k in kappas for E in energies]
        out.table("fig_dephasing_n1", ["kappa", "E", "ergotropy"], rows)
        Z = np.array([r[2] for r in rows]).reshape(len(kappas), len(energies))
        out.figure("fig_dephasing_n1", plotting.heatmap(energies, kappas, Z, "E", "kappa", "single-site output ergotropy"))
        return EXIT_OK
    starts = args.starts or 4
    tasks = [(float(k), [float(E) for E in energies], starts, args.seed) for k in kappas]
    results = pmap(_dephasing_row, tasks, args.threads)
    rows, ok = [], True
    for k, row in zip(kappas, results):
        for E, (g, s, conv) in zip(energies, row):
            rows.append((k, E, g, s, g - s, conv))
            ok &= conv
    out.table("fig_dephasing_n2", ["kappa", "E", "global", "separable", "boost", "converged"], rows)
    G = np.array([r[2] for r in rows]).reshape(len(kappas), len(energies))
    B = np.array([r[4] for r in rows]).reshape(len(kappas), len(energies))
    out.figure("fig_dephasing_n2", plotting.heatmap(energies, kappas, G / 2, "E", "kappa", "two-site output ergotropy per site"))
    out.figure("fig_dephasing_n2_boost", plotting.heatmap(energies, kappas, B / 2, "E", "kappa", "global minus separable, per site", diverging=True))
    if not ok:
        raise NonConvergence("some grid points did not converge (see 'converged' column)")
    return EXIT_OK


def cmd_fig_halffill(args, out: Writer) -> int:
    n_max = args.n or 7
    if n_max < 1:
        raise ValidationError("--n must be >= 1")
    rows = []
    for n in range(1, n_max + 1):
        sol = full_dephasing_diagonal_solver(n, n / 2)
        rows.append((n, n / 2, sol.value / n * 2, sol.value))
    out.table("fig_halffill", ["n", "E", "ratio", "ergotropy"], rows)
    out.figure(
        "fig_halffill",
        plotting.lines([r[0] for r in rows], {"ergotropy / E": [r[2] for r in rows]}, "n", "ratio", "complete dephasing, E = n/2", markers=True),
    )
    return EXIT_OK


def cmd_fig_depolarizing(args, out: Writer) -> int:
    dim = (args.dim or 5) if args.spectrum in (None, "equal") else args.dim
    h = parse_spectrum(args.spectrum, dim)
    d = h.shape[0]
    lo, hi = depolarizing_range(d)
    lams = parse_grid(args.lam or default_grid(lo, hi, DEFAULT_POINTS), lo, hi, "lambda")
    energies = parse_grid(args.energy or default_grid(0.0, 1.0, DEFAULT_POINTS), 0.0, 1.0, "energy")
    rows = []
    for lam in lams:
        Dt = asy.depolarizing_Dtot(lam, h)
        for E in energies:
            ex = lam * E + asy.depolarizing_D(lam)
            am = lam * E if lam >= 0 else abs(lam)
            tex = lam * E + Dt
            tam = Dt if lam <= 0 else lam * E + Dt
            rows.append((lam, E, ex, am, tex, tam, Dt))
    header = ["lambda", "E", "ergotropy_exact", "ergotropy_at_most", "total_exact", "total_at_most", "D_tot"]
    out.table(f"fig_depolarizing_d{d}", header, rows)
    shape = (len(lams), len(energies))
    for col, name, title in ((3, "ergotropy", "ergotropy (at most E)"), (5, "total", "total ergotropy (at most E)")):
        Z = np.array([r[col] for r in rows]).reshape(shape)
        out.figure(f"fig_depolarizing_d{d}_{name}", plotting.heatmap(energies, lams, Z, "E", "lambda", f"d={d}: {title}"))
    return EXIT_OK


def _efrac(args) -> np.ndarray:
    return parse_grid(args.efrac or default_grid(0.0, 1.0, DEFAULT_POINTS), 0.0, 1.0, "efrac")


def cmd_capacitance(args, out: Writer) -> int:
    ch, h = channel_from_args(args)
    es = _efrac(args)
    pts = []
    for e in es:
        if isinstance(ch, Dephasing):
            pts += asy.dephasing_capacitances(ch.kappa, e)
            if args.beta is not None:
                v = asy.dephasing_free_energy_capacitance(ch.kappa, e, args.beta, h)
                pts.append(asy.CapacitancePoint(ch.to_dict(), "C_beta", float(e), v))
        else:
            pts += asy.depolarizing_capacitances(ch.lam, e, h, args.beta)
    out.text("capacitance", asy.points_to_csv(pts), asy.points_to_json(pts))
    kinds = sorted({p.functional for p in pts})
    series = {k: [p.value for p in pts if p.functional == k] for k in kinds}
    out.figure("capacitance", plotting.lines(es, series, "energy fraction e", "capacitance", f"{ch.kind} capacitances"))
    return EXIT_OK


def cmd_mawer(args, out: Writer) -> int:
    ch, h = channel_from_args(args)
    m = asy.mawer(ch, h)
    out.json("mawer", m.to_dict())
    param = ch.kappa if isinstance(ch, Dephasing) else ch.lam
    out.table("mawer", ["channel", "param", "dim", "mawer"], [(ch.kind, param, ch.dim, str(m))], with_json=False)
    print(str(m))
    return EXIT_OK


def cmd_rate_sequence(args, out: Writer) -> int:
    ch, h = channel_from_args(args)
    es = _efrac(args) if args.efrac else np.array([0.5])
    n_max = args.n or 3
    rows, ok = [], True
    for e in es:
        cfg = SearchConfig(starts=args.starts, seed=args.seed, cell_h=h)
        rs = asy.rate_sequence(ch, e, n_max, cfg)
        for n, w in zip(rs.n_values, rs.rates):
            rows.append((ch.kind, e, n, w, f"numeric_bound({n})"))
        ok &= rs.weakly_increasing and not rs.sandwich_violations
    out.table("rate_sequence", ["channel", "e", "n", "rate", "provenance"], rows)
    series = {f"e={e:g}": [r[3] for r in rows if r[1] == e] for e in es}
    out.figure("rate_sequence", plotting.lines(list(range(1, n_max + 1)), series, "n", "rate", "finite-n work rate", markers=True))
    if not ok:
        raise NonConvergence("rate sequence violates the expected ordering; optimizer likely under-converged")
    return EXIT_OK


def cmd_replacement_demo(args, out: Writer) -> int:
    h = parse_spectrum(args.spectrum or "0,0.5,1", args.dim)
    pops = [float(t) for t in (args.populations or "0.5,0.3,0.2").split(",")]
    if len(pops) != h.shape[0]:
        raise ValidationError(f"{len(pops)} populations for a {h.shape[0]}-level cell")
    rep = asy.replacement_gap_demo(np.diag(pops), h)
    d = {k: _jsonable(v) for k, v in rep.to_dict().items()}
    d["capacitances"] = {k: _jsonable(v) for k, v in rep.capacitances.items()}
    out.json("replacement_demo", d)
    out.table("replacement_demo", ["capacitance", "value"], sorted(rep.capacitances.items()))
    print(json.dumps(d, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "report": cmd_report,
    "fig-dephasing": cmd_fig_dephasing,
    "fig-halffill": cmd_fig_halffill,
    "fig-depolarizing": cmd_fig_depolarizing,
    "capacitance": cmd_capacitance,
    "mawer": cmd_mawer,
    "rate-sequence": cmd_rate_sequence,
    "replacement-demo": cmd_replacement_demo,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="ergokit_out", help="output directory (created if missing)")
    common.add_argument("--format", default="csv,json,svg", help="comma list from csv,json,svg,png")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--starts", type=int, default=None, help="optimizer starts (default depends on n)")
    common.add_argument("--threads", type=int, default=None, help="worker processes (fallback: ERGOKIT_THREADS, then CPU count)")
    common.add_argument("--dim", type=int, default=None, help="cell dimension d")
    common.add_argument("--spectrum", default=None, help="'equal' or comma list of cell energies spanning [0, 1]")
    common.add_argument("--beta", type=float, default=None, help="inverse temperature")
    common.add_argument("--n", type=int, default=None, help="number of cells (or n_max)")
    grids = "grids are 'a:b:num', a comma list or one number"
    common.add_argument("--kappa", default=None, help=f"dephasing strength ({grids})")
    common.add_argument("--lambda", dest="lam", default=None, help=f"depolarizing parameter ({grids})")
    common.add_argument("--energy", default=None, help=f"input energy E ({grids})")
    common.add_argument("--efrac", default=None, help=f"energy per cell e ({grids})")

    p = argparse.ArgumentParser(prog="ergokit", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("report", parents=[common], help="work functionals of one state")
    r.add_argument("state", help="density matrix JSON file")
    r.add_argument("hamiltonian", help="Hamiltonian JSON file (cell Hamiltonian when --n > 1)")
    sub.add_parser("fig-dephasing", parents=[common], help="max output ergotropy under dephasing; --n 1 (101x101 grid) or --n 2 (21x21 grid, with boost map)")
    sub.add_parser("fig-halffill", parents=[common], help="complete dephasing at half filling, n = 1..N (default N=7)")
    sub.add_parser("fig-depolarizing", parents=[common], help="single-site depolarizing surfaces (default d=5 equally spaced, 101x101 grid)")
    sub.add_parser("capacitance", parents=[common], help="capacitance table over an e grid (default 101 points)")
    sub.add_parser("mawer", parents=[common], help="maximal asymptotic work/energy ratio")
    sub.add_parser("rate-sequence", parents=[common], help="finite-n rates w_n = W(n e)/n for n = 1..N (default N=3, e=0.5)")
    rd = sub.add_parser("replacement-demo", parents=[common], help="local vs total-local capacitance gap of a replacement channel")
    rd.add_argument("--populations", default=None, help="passive populations of rho0 (default 0.5,0.3,0.2)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.threads = resolve_threads(args.threads)
        out = Writer(args.out, args.format)
        return COMMANDS[args.command](args, out)
    except NonConvergence as exc:
        print(f"ergokit: warning: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ValidationError, ValueError) as exc:
        print(f"ergokit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
