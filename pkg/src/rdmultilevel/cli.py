"""Benchmark runner: single solves, parameter sweeps, dense spectra and theory checks.

Iteration counts are numbers of operator applications (CG steps) needed to
reduce the Euclidean residual by ``--tol``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .coefficients import floating_component_count
from .errors import ConfigurationError
from .krylov import SolveReport
from .mesh import DEFAULT_INCLUSIONS
from .multilevel import PRECONDITIONERS
from .problems import GEOMETRIES, benchmark_hierarchy, setup_problem
from .spectral import dense_spectrum, effective_condition

DECADES = (1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6, 1e8)
RHO_GRID = (0.0,) + DECADES
AGGREGATIONS = ("single", "max-over-rho")
MAX_ITER_EXIT = 2


@dataclass
class SweepConfig:
    """One sweep: every combination of level, coefficient values and preconditioner.

    With ``aggregate="max-over-rho"`` cells sharing the ratio ``rho1/rho2``
    are merged into their maximum iteration count.
    """

    geometry: str = "cube3d"
    levels: tuple = (1, 2, 3)
    omega1: tuple = (1.0,)
    omega2: tuple = (1.0,)
    rho1: tuple = (1.0,)
    rho2: tuple = RHO_GRID
    preconditioners: tuple = ("sgs",)
    tol: float = 1e-12
    max_iter: int = 2000
    seed: int = 0
    coarse_cells: int | None = None
    inclusions: tuple | None = None
    aggregate: str = "single"
    stationary: bool = False
    jobs: int = 1

    def __post_init__(self):
        for name in ("levels", "omega1", "omega2", "rho1", "rho2", "preconditioners"):
            setattr(self, name, tuple(getattr(self, name)))
        for name in ("levels", "omega1", "omega2", "rho1", "rho2"):
            if not getattr(self, name):
                raise ConfigurationError(f"sweep grid {name!r} is empty")
        if min(self.omega1 + self.omega2) <= 0:
            raise ConfigurationError("omega values must be positive")
        if min(self.rho1 + self.rho2) < 0:
            raise ConfigurationError("rho values must be nonnegative")
        if self.geometry not in GEOMETRIES:
            raise ConfigurationError(f"unknown geometry {self.geometry!r}")
        if self.aggregate not in AGGREGATIONS:
            raise ConfigurationError(f"unknown aggregation {self.aggregate!r}")
        bad = [p for p in self.preconditioners if p not in PRECONDITIONERS]
        if bad:
            raise ConfigurationError(f"unknown preconditioner(s) {bad}")

    def digest(self) -> str:
        d = asdict(self)
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class ResultRow:
    level: int
    n: int
    omega: tuple
    rho: tuple
    precond: str
    iterations: int
    converged: bool
    conv_factor: float
    lambda_min_est: float
    lambda_max_est: float
    kappa_est: float

    def key(self):
        return (self.level, self.precond, self.omega, self.rho)

    def _cmp(self):
        return tuple(None if isinstance(x, float) and math.isnan(x) else x for x in astuple_row(self))

    def __eq__(self, other):
        return isinstance(other, ResultRow) and self._cmp() == other._cmp()

    def __hash__(self):
        return hash(self._cmp())


def astuple_row(row: ResultRow) -> tuple:
    return (row.level, row.n, row.omega, row.rho, row.precond, row.iterations, row.converged,
            row.conv_factor, row.lambda_min_est, row.lambda_max_est, row.kappa_est)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    aggregate: str = "single"

    def __len__(self):
        return len(self.rows)

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.rows)


def row_from_report(level: int, n: int, omega, rho, precond: str, rep: SolveReport) -> ResultRow:
    return ResultRow(level, n, tuple(omega), tuple(rho), precond, rep.iterations, rep.converged,
                     float(rep.conv_factor), float(rep.lambda_min_est), float(rep.lambda_max_est),
                     float(rep.kappa_est))


def _cells(config: SweepConfig):
    for w1 in config.omega1:
        for w2 in config.omega2:
            for r1 in config.rho1:
                for r2 in config.rho2:
                    yield (w1, w2), (r1, r2)


def run_sweep(config: SweepConfig) -> ResultTable:
    """Solve every sweep cell; cells run concurrently over shared level data when ``jobs > 1``."""
    rows = []
    if not config.preconditioners:
        return ResultTable([], config.aggregate)
    for level in config.levels:
        hier = benchmark_hierarchy(config.geometry, level, config.coarse_cells, config.seed,
                                   config.inclusions if config.inclusions is not None else DEFAULT_INCLUSIONS)

        def cell(coeffs):
            omega, rho = coeffs
            prob = setup_problem(hier, omega, rho)
            out = []
            for kind in config.preconditioners:
                rep = prob.solve(kind, config.tol, config.max_iter, stationary=config.stationary)
                out.append(row_from_report(level, prob.n, omega, rho, kind, rep))
            return out

        cells = list(_cells(config))
        if config.jobs > 1:
            with ThreadPoolExecutor(config.jobs) as pool:
                results = list(pool.map(cell, cells))
        else:
            results = [cell(c) for c in cells]
        for r in results:
            rows.extend(r)
    table = ResultTable(rows, "single")
    return aggregate_max_over_rho(table) if config.aggregate == "max-over-rho" else table


def _ratio_key(rho) -> float:
    r1, r2 = rho
    if r2 == 0 or r1 == 0:
        return math.nan
    return float(f"{r1 / r2:.12g}")  # 1e-8/1e-4 and 1e-4/1 share a key


def aggregate_max_over_rho(table: ResultTable) -> ResultTable:
    """Merge rows with equal ``rho1/rho2`` (all other keys equal) into the row with the most iterations.

    The merged row carries ``rho = (ratio, 1.0)``. Rows with a zero rho value are dropped.
    """
    groups: dict = {}
    for row in table.rows:
        ratio = _ratio_key(row.rho)
        if not math.isfinite(ratio):
            continue
        key = (row.level, row.precond, row.omega, ratio)
        best = groups.get(key)
        if best is None or row.iterations > best.iterations:
            groups[key] = row
    rows = []
    for (level, precond, omega, ratio), r in groups.items():
        rows.append(ResultRow(level, r.n, omega, (ratio, 1.0), precond, r.iterations, r.converged,
                              r.conv_factor, r.lambda_min_est, r.lambda_max_est, r.kappa_est))
    return ResultTable(rows, "max-over-rho")


CSV_FIELDS = ("level", "N", "omega", "rho", "precond", "iterations", "converged",
              "conv_factor", "lambda_min_est", "lambda_max_est", "kappa_est")


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_tuple(t) -> str:
    return ";".join(_fmt(x) for x in t)


def emit_table(table: ResultTable, format: str = "markdown") -> str:
    """Render a result table as benchmark-style markdown (rho2 columns) or full-metadata CSV."""
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in table.rows:
            w.writerow([r.level, r.n, _fmt_tuple(r.omega), _fmt_tuple(r.rho), r.precond, r.iterations,
                        int(r.converged), _fmt(r.conv_factor), _fmt(r.lambda_min_est),
                        _fmt(r.lambda_max_est), _fmt(r.kappa_est)])
        return buf.getvalue()
    if format != "markdown":
        raise ConfigurationError(f"unknown format {format!r}")
    return _markdown(table)


def parse_csv(text: str) -> ResultTable:
    """Inverse of ``emit_table(table, "csv")``."""
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for d in reader:
        rows.append(ResultRow(
            int(d["level"]), int(d["N"]),
            tuple(float(x) for x in d["omega"].split(";")),
            tuple(float(x) for x in d["rho"].split(";")),
            d["precond"], int(d["iterations"]), bool(int(d["converged"])),
            float(d["conv_factor"]), float(d["lambda_min_est"]),
            float(d["lambda_max_est"]), float(d["kappa_est"]),
        ))
    return ResultTable(rows)


def _col(x: float) -> str:
    return "0" if x == 0 else f"{x:.0e}".replace("e+0", "e+").replace("e-0", "e-")


def _markdown(table: ResultTable) -> str:
    label = "rho1/rho2" if table.aggregate == "max-over-rho" else "rho2"
    cols = sorted({r.rho[-1 if table.aggregate == "single" else 0] for r in table.rows})
    groups: dict = {}
    for r in table.rows:
        head = (r.precond, r.omega, r.rho[0] if table.aggregate == "single" else None)
        groups.setdefault(head, {}).setdefault((r.level, r.n), {})
        c = r.rho[-1] if table.aggregate == "single" else r.rho[0]
        cell = str(r.iterations) + ("" if r.converged else "*")
        if math.isnan(r.lambda_min_est) and not math.isnan(r.conv_factor):  # stationary run
            cell += f" ({r.conv_factor:.2f})"
        groups[head][(r.level, r.n)][c] = cell
    out = []
    for (precond, omega, rho1), by_level in groups.items():
        title = f"**{precond}**, omega = ({_fmt_tuple(omega).replace(';', ', ')})"
        if rho1 is not None:
            title += f", rho1 = {rho1:g}"
        out.append(title)
        out.append("")
        out.append("| level | N | " + " | ".join(f"{label}={_col(c)}" for c in cols) + " |")
        out.append("|" + "---|" * (len(cols) + 2))
        for (level, n), cells in sorted(by_level.items()):
            out.append(f"| {level} | {n:,} | " + " | ".join(cells.get(c, "") for c in cols) + " |")
        out.append("")
    return "\n".join(out)


def emit_history(report: SolveReport) -> str:
    """Two-column CSV of the relative Euclidean residual per iteration."""
    rel = report.relative_residuals
    lines = ["iteration,relative_residual"]
    lines += [f"{i},{_fmt(r)}" for i, r in enumerate(rel)]
    return "\n".join(lines) + "\n"


def floating_count(hierarchy) -> int:
    """m0: facet-connected single-label regions of the coarse mesh without a boundary facet.

    Regions touching only at vertices or edges count separately, since such
    contacts have zero measure.
    """
    return floating_component_count(hierarchy[0])


# -- argument handling ------------------------------------------------------

def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _levels(text: str) -> tuple:
    if "-" in text and "," not in text:
        lo, hi = (int(x) for x in text.split("-"))
        return tuple(range(lo, hi + 1))
    return tuple(int(x) for x in text.split(","))


def _grid(text: str) -> tuple:
    if text == "decades":
        return DECADES
    if text == "full":
        return RHO_GRID
    return _floats(text)


def read_config(path) -> dict:
    """Key-value file (``key = value``, ``#`` comments) with keys
    ``dim``, ``levels``, ``coarse_cells``, ``inclusions``, ``seed``.

    ``inclusions`` is a ``;``-separated list of boxes ``x0,y0,z0:x1,y1,z1``.
    """
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"malformed config line {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "dim":
            out["geometry"] = {"2": "square2d", "3": "cube3d"}.get(val) or _bad(key, val)
        elif key == "levels":
            out["levels"] = val
        elif key in ("coarse_cells", "seed"):
            out[key] = int(val)
        elif key == "inclusions":
            boxes = []
            for box in filter(None, (b.strip() for b in val.split(";"))):
                lo, hi = box.split(":")
                boxes.append((_floats(lo), _floats(hi)))
            out["inclusions"] = tuple(boxes)
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    return out


def _bad(key, val):
    raise ConfigurationError(f"invalid value {val!r} for {key!r}")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 is reserved for non-convergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdmultilevel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, levels_default):
        p.add_argument("--config", help="key-value file (dim, levels, coarse_cells, inclusions, seed)")
        p.add_argument("--geometry", choices=GEOMETRIES, default=None)
        p.add_argument("--levels", default=None, help=f"refinement level(s), e.g. 3, 1-3 or 1,3 (default {levels_default})")
        p.add_argument("--coarse-cells", type=int, default=None)
        p.add_argument("--seed", type=int, default=None, help="subdomain assignment seed (square2d)")
        p.add_argument("--omega", default="1,1", help="omega1,omega2")
        p.add_argument("--rho", default="1,1", help="rho1,rho2")
        p.add_argument("--out", default=None, help="output file (solve/spectrum) or directory (sweep)")
        p.set_defaults(levels_default=levels_default)

    p = sub.add_parser("solve", help="single solve")
    common(p, "1")
    p.add_argument("--precond", choices=PRECONDITIONERS, default="mg")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--stationary", action="store_true", help="iterate with the preconditioner instead of CG")
    p.add_argument("--history", default=None, help="write the residual history CSV here")

    p = sub.add_parser("sweep", help="parameter sweep tables")
    common(p, "1-3")
    p.add_argument("--precond", default="sgs", help="comma-separated list")
    p.add_argument("--omega1-grid", default=None, help="values for omega1 (overrides --omega)")
    p.add_argument("--rho1-grid", default=None, help="values for rho1 (overrides --rho)")
    p.add_argument("--rho-grid", default="full", help="rho2 values: 'full' ({0} and decades), 'decades' or a list")
    p.add_argument("--aggregate", choices=AGGREGATIONS, default="single")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--stationary", action="store_true")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("spectrum", help="dense spectrum of the preconditioned operator")
    common(p, "1")
    p.add_argument("--precond", choices=PRECONDITIONERS, default="bpx")
    p.add_argument("--n-limit", type=int, default=4000)
    p.add_argument("--gap-threshold", type=float, default=10.0)

    p = sub.add_parser("verify", help="measured checks of the multilevel analysis")
    common(p, "2")
    p.add_argument("--level", type=int, default=1, help="coarse level k of the interpolation checks")
    p.add_argument("--sampled", action="store_true", help="sampled instead of exact stability constants")
    return parser


def _settings(args) -> dict:
    cfg = read_config(args.config) if args.config else {}
    geometry = args.geometry or cfg.get("geometry") or ("square2d" if args.command == "verify" else "cube3d")
    levels = _levels(args.levels or cfg.get("levels") or args.levels_default)
    return {
        "geometry": geometry,
        "levels": levels,
        "coarse_cells": args.coarse_cells if args.coarse_cells is not None else cfg.get("coarse_cells"),
        "seed": args.seed if args.seed is not None else cfg.get("seed", 0),
        "inclusions": cfg.get("inclusions"),
    }


def _hierarchy(s: dict, level: int):
    return benchmark_hierarchy(s["geometry"], level, s["coarse_cells"], s["seed"],
                               s["inclusions"] if s["inclusions"] is not None else DEFAULT_INCLUSIONS)


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    s = _settings(args)
    omega, rho = _floats(args.omega), _floats(args.rho)
    buf = ["# iterations = CG steps (operator applications) to reach the relative l2 residual tolerance",
           ",".join(CSV_FIELDS)]
    ok = True
    for level in s["levels"]:
        prob = setup_problem(_hierarchy(s, level), omega, rho)
        rep = prob.solve(args.precond, args.tol, args.max_iter, stationary=args.stationary)
        ok &= rep.converged
        row = row_from_report(level, prob.n, omega, rho, args.precond, rep)
        buf.append(emit_table(ResultTable([row]), "csv").splitlines()[1])
        if args.history:
            path = Path(args.history)
            if len(s["levels"]) > 1:
                path = path.with_name(f"{path.stem}_L{level}{path.suffix}")
            path.write_text(emit_history(rep))
    _write("\n".join(buf) + "\n", args.out)
    return 0 if ok else MAX_ITER_EXIT


def cmd_sweep(args) -> int:
    s = _settings(args)
    omega, rho = _floats(args.omega), _floats(args.rho)
    config = SweepConfig(
        geometry=s["geometry"],
        levels=s["levels"],
        omega1=_grid(args.omega1_grid) if args.omega1_grid else (omega[0],),
        omega2=(omega[1],),
        rho1=_grid(args.rho1_grid) if args.rho1_grid else (rho[0],),
        rho2=_grid(args.rho_grid),
        preconditioners=tuple(p for p in args.precond.split(",") if p),
        tol=args.tol,
        max_iter=args.max_iter,
        seed=s["seed"],
        coarse_cells=s["coarse_cells"],
        inclusions=s["inclusions"],
        aggregate=args.aggregate,
        stationary=args.stationary,
        jobs=args.jobs,
    )
    table = run_sweep(config)
    text = emit_table(table, args.format)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"sweep-{config.digest()}.csv"
        path.write_text(emit_table(table, "csv"))
        print(f"# wrote {path}", file=sys.stderr)
    sys.stdout.write(text)
    return 0 if table.all_converged else MAX_ITER_EXIT


def cmd_spectrum(args) -> int:
    s = _settings(args)
    level = s["levels"][-1]
    hier = _hierarchy(s, level)
    prob = setup_problem(hier, _floats(args.omega), _floats(args.rho))
    rep = dense_spectrum(prob.A, prob.preconditioner(args.precond), n_limit=args.n_limit,
                         gap_threshold=args.gap_threshold)
    m0 = floating_count(hier)
    lines = ["index,eigenvalue"] + [f"{i + 1},{_fmt(x)}" for i, x in enumerate(rep.eigenvalues)]
    k_m0 = effective_condition(rep, m0) if m0 < rep.n else math.nan
    lines += ["", "N,kappa,m0,kappa_m0,m_detected",
              f"{rep.n},{_fmt(rep.kappa)},{m0},{_fmt(k_m0)},{rep.m_detected}"]
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_verify(args) -> int:
    from .theory import verify_suite

    s = _settings(args)
    hier = _hierarchy(s, s["levels"][-1])
    checks = verify_suite(hier, k=min(args.level, hier.L), seed=s["seed"], exact=not args.sampled)
    _write("\n".join(c.line() for c in checks) + "\n", args.out)
    return 0 if all(c.passed for c in checks) else 1


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "spectrum": cmd_spectrum, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
