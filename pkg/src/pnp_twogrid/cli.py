"""Command-line driver.

Subcommands::

    pnp-twogrid solve --alg tg1 --coarse-level 2 --fine-level 4
    pnp-twogrid convergence --alg fem-gummel --levels 2 3 4
    pnp-twogrid verify --alg tg1 --pairs 1:2 2:4

Exit codes: 0 success, 1 usage error, 2 solver non-convergence or a failed
bound check.
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .fem import PnpCoefficients, error_h1, error_l2
from .manufactured import exact_solution
from .mesh import Mesh, build_cube_mesh, with_solute_box, write_vtk
from .solvers import (ALGORITHMS, BOUNDS, Discretization, GummelConfig, PnpState, RhsBundle,
                      RunMetrics, constants_bounded, gummel_solve, two_grid_II,
                      verify_theorem_bounds)
from .sparse import write_matrix_market

log = logging.getLogger(__name__)

ALG_CHOICES = ("fem-gummel", "tg1", "tg2", "tg3")
FIELDS = ("phi", "p1", "p2")
CSV_HEADER = "alg,H,h,field,norm,error,order"
H1_WINDOW = (0.85, 1.15)
L2_WINDOW = (1.8, 2.2)

# bounds judged by `verify` for each algorithm
BOUNDS_FOR = {
    "tg1": ("potential_by_coarse_concentration", "concentration_by_coarse_concentration"),
    "tg2": ("potential_by_coarse_concentration", "concentration_by_coarse_potential"),
    "tg3": ("potential_by_coarse_concentration", "concentration_by_coarse_potential"),
    "fem-gummel": tuple(BOUNDS),
}


class UsageError(Exception):
    pass


@dataclass
class RunSpec:
    algorithm: str = "fem-gummel"
    coarse_level: int = 0
    fine_level: int = 2
    case: str = "manufactured"
    output: str = "table"
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALG_CHOICES:
            raise UsageError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm != "fem-gummel" and self.coarse_level > self.fine_level:
            raise UsageError("coarse level must not exceed fine level")


@dataclass
class RunResult:
    state: PnpState
    metrics: RunMetrics
    errors: dict | None
    H: float | None
    h: float


# --------------------------------------------------------------------------
# configuration files

def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. ``charge`` may
    repeat (``charge = q x y z``)."""
    out: dict = {"charges": []}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        nums = [float(v) for v in value.split()]
        if key == "charge":
            if len(nums) != 4:
                raise UsageError(f"config line {lineno}: charge needs q x y z")
            out["charges"].append((nums[0], tuple(nums[1:])))
        elif key == "solute_box":
            if len(nums) != 6:
                raise UsageError(f"config line {lineno}: solute_box needs 6 numbers")
            out[key] = (tuple(nums[:3]), tuple(nums[3:]))
        elif len(nums) == 1:
            out[key] = nums[0]
        else:
            raise UsageError(f"config line {lineno}: bad value for {key}")
    return out


_KNOWN_KEYS = {"D1", "D2", "q1", "q2", "beta", "eps_m", "eps_s", "bulk1", "bulk2",
               "sign", "charges", "solute_box"}


def coefficients_from_config(cfg: dict, base: PnpCoefficients) -> PnpCoefficients:
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return PnpCoefficients(
        n_species=2,
        D=(cfg.get("D1", base.D[0]), cfg.get("D2", base.D[1])),
        q=(cfg.get("q1", base.q[0]), cfg.get("q2", base.q[1])),
        beta=cfg.get("beta", base.beta),
        eps={1: cfg.get("eps_m", base.eps[1]), 2: cfg.get("eps_s", base.eps[2])},
        lam=dict(base.lam),
        fixed_charges=tuple(cfg.get("charges", ())) or tuple(base.fixed_charges),
        bulk=(cfg.get("bulk1", base.bulk[0]), cfg.get("bulk2", base.bulk[1])),
        poisson_coupling_sign=cfg.get("sign", base.poisson_coupling_sign),
    )


# --------------------------------------------------------------------------
# library-level drivers

def _mesh(level: int, config: dict) -> Mesh:
    mesh = build_cube_mesh(level)
    if "solute_box" in config:
        mesh = with_solute_box(mesh, *config["solute_box"])
    return mesh


def error_table(state: PnpState, case=None) -> dict:
    case = case or exact_solution()
    out = {}
    for name, u, exact in zip(FIELDS, [state.phi] + state.p, case.fields.values()):
        out[name] = {"L2": error_l2(u, exact), "H1": error_h1(u, exact, exact.grad)}
    return out


def run(spec: RunSpec, cfg: GummelConfig | None = None, parallel_step2: bool = False) -> RunResult:
    cfg = cfg or GummelConfig()
    if spec.case == "manufactured":
        case = exact_solution()
        coeffs, rhs = case.coeffs, case.rhs()
    else:
        case = None
        coeffs = coefficients_from_config(spec.config, PnpCoefficients())
        rhs = RhsBundle()
    fine = _mesh(spec.fine_level, spec.config)
    if spec.algorithm == "fem-gummel":
        state, metrics = gummel_solve(fine, coeffs, rhs, cfg)
        H = None
    else:
        coarse = _mesh(spec.coarse_level, spec.config)
        if spec.algorithm == "tg2":
            state, metrics = two_grid_II(coarse, fine, coeffs, rhs, cfg, parallel=parallel_step2)
        else:
            state, metrics = ALGORITHMS[spec.algorithm](coarse, fine, coeffs, rhs, cfg)
        H = coarse.h
    errors = error_table(state, case) if case is not None else None
    return RunResult(state, metrics, errors, H, fine.h)


def observed_orders(hs, errors) -> list[float]:
    """``log(e_k / e_{k+1}) / log(h_k / h_{k+1})`` for consecutive pairs."""
    return [math.log(errors[k] / errors[k + 1]) / math.log(hs[k] / hs[k + 1])
            for k in range(len(hs) - 1)]


def level_pairs(alg: str, levels, pairing: str, coarse_level: int | None = None):
    """(coarse, fine) level pairs for a study. For ``square`` the listed
    levels are coarse levels and the fine level doubles them (h = H^2)."""
    levels = list(levels)
    if alg == "fem-gummel":
        return [(None, L) for L in levels]
    if pairing == "square":
        return [(L, 2 * L) for L in levels]
    if pairing == "equal":
        return [(L, L) for L in levels]
    if pairing == "fixed":
        if coarse_level is None:
            raise UsageError("--pairing fixed needs --coarse-level")
        return [(coarse_level, L) for L in levels]
    raise UsageError(f"unknown pairing {pairing!r}")


def convergence_study(alg: str, pairs, cfg: GummelConfig | None = None) -> list[dict]:
    """Run every pair and return CSV-ready rows with observed orders."""
    if len(pairs) < 2:
        raise UsageError("a convergence study needs at least two levels")
    results = []
    for c, f in pairs:
        spec = RunSpec(alg, coarse_level=c if c is not None else 0, fine_level=f)
        results.append(run(spec, cfg))
    rows = []
    hs = [r.h for r in results]
    for name in FIELDS:
        for norm in ("H1", "L2"):
            errs = [r.errors[name][norm] for r in results]
            orders = [None] + observed_orders(hs, errs)
            for r, e, o in zip(results, errs, orders):
                rows.append({"alg": alg, "H": r.H, "h": r.h, "field": name, "norm": norm,
                             "error": e, "order": o})
    return rows


def order_verdict(rows) -> dict:
    """Whether every observed order falls in its window, per (field, norm)."""
    verdict = {}
    for r in rows:
        if r["order"] is None:
            continue
        lo, hi = H1_WINDOW if r["norm"] == "H1" else L2_WINDOW
        key = (r["field"], r["norm"])
        verdict[key] = verdict.get(key, True) and lo <= r["order"] <= hi
    return verdict


# --------------------------------------------------------------------------
# formatting

def _frac(h) -> str:
    if h is None:
        return "-"
    return f"1/{round(1 / h)}"


def format_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in rows:
        order = "" if r["order"] is None else f"{r['order']:.6f}"
        buf.write(f"{r['alg']},{_frac(r['H'])},{_frac(r['h'])},{r['field']},{r['norm']},"
                  f"{r['error']:.6e},{order}\n")
    return buf.getvalue()


def rows_from_result(alg: str, res: RunResult) -> list[dict]:
    return [{"alg": alg, "H": res.H, "h": res.h, "field": name, "norm": norm,
             "error": res.errors[name][norm], "order": None}
            for name in FIELDS for norm in ("H1", "L2")]


def format_table(alg: str, res: RunResult) -> str:
    lines = []
    if res.errors is not None:
        lines.append(f"{'alg':<11}{'H':>6}{'h':>7}  {'norm':<4}" + "".join(f"{f:>11}" for f in FIELDS))
        for norm in ("H1", "L2"):
            vals = "".join(f"{res.errors[f][norm]:>11.2E}" for f in FIELDS)
            lines.append(f"{alg:<11}{_frac(res.H):>6}{_frac(res.h):>7}  {norm:<4}{vals}")
    m = res.metrics
    lines.append(f"outer iterations: {m.outer_iterations}  converged: {m.converged}")
    if m.coarse_metrics is not None:
        lines.append(f"coarse gummel iterations: {m.coarse_metrics.outer_iterations}")
    lines.append(f"inner solves: {m.inner_solve_counts}")
    lines.append(f"final update norm: {m.final_update_norm:.3e}")
    lines.append(f"min concentrations: {', '.join(f'{c:.3e}' for c in m.min_concentration)}")
    lines.append(f"wall time: {m.wall_time_seconds:.2f} s")
    return "\n".join(lines) + "\n"


def format_study(rows) -> str:
    lines = [f"{'field':<6}{'norm':<5}{'H':>6}{'h':>7}{'error':>11}{'order':>8}"]
    for r in rows:
        order = "" if r["order"] is None else f"{r['order']:.3f}"
        lines.append(f"{r['field']:<6}{r['norm']:<5}{_frac(r['H']):>6}{_frac(r['h']):>7}"
                     f"{r['error']:>11.2E}{order:>8}")
    for (name, norm), ok in order_verdict(rows).items():
        lo, hi = H1_WINDOW if norm == "H1" else L2_WINDOW
        lines.append(f"{name} {norm} orders in [{lo}, {hi}]: {'yes' if ok else 'no'}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# commands

def _gummel_config(args) -> GummelConfig:
    return GummelConfig(tol=args.tol, max_outer=args.max_outer, damping=args.damping,
                        norm_kind=args.norm_kind)


def _load_config(args) -> dict:
    if not args.config:
        return {}
    try:
        return parse_config(Path(args.config).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc


def cmd_solve(args) -> int:
    config = _load_config(args)
    spec = RunSpec(args.alg, args.coarse_level, args.fine_level,
                   case="config-file" if config else "manufactured", output=args.format,
                   config=config)
    if args.format == "vtk" and not args.out:
        raise UsageError("--format vtk needs --out")
    res = run(spec, _gummel_config(args), parallel_step2=args.parallel_step2)

    if args.format == "table":
        text = format_table(args.alg, res)
        _emit(text, args.out)
    elif args.format == "csv":
        if res.errors is None:
            raise UsageError("csv output needs the manufactured case")
        _emit(format_csv(rows_from_result(args.alg, res)), args.out)
    else:
        data = {"phi": res.state.phi.coeffs}
        data.update({f"p{i + 1}": p.coeffs for i, p in enumerate(res.state.p)})
        if res.errors is not None:
            for name, exact in exact_solution().fields.items():
                data[f"{name}_exact"] = exact(res.state.mesh.vertices)
        write_vtk(res.state.mesh, args.out, data)
        sys.stdout.write(format_table(args.alg, res))

    if args.dump_matrices:
        _dump_matrices(res, spec, Path(args.dump_matrices))
    return 0 if res.metrics.converged else 2


def _dump_matrices(res: RunResult, spec: RunSpec, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    if spec.case == "manufactured":
        case = exact_solution()
        coeffs, rhs = case.coeffs, case.rhs()
    else:
        coeffs, rhs = coefficients_from_config(spec.config, PnpCoefficients()), RhsBundle()
    disc = Discretization(res.state.mesh, coeffs, rhs)
    A, _ = disc.poisson_system(res.state.p)
    write_matrix_market(A, outdir / "poisson.mtx")
    for i in range(coeffs.n_species):
        A, _ = disc.species_system(i, res.state.phi)
        write_matrix_market(A, outdir / f"nernst_planck_{i + 1}.mtx")


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_convergence(args) -> int:
    pairs = level_pairs(args.alg, args.levels, args.pairing, args.coarse_level)
    if any(a is not None and a > b for a, b in pairs):
        raise UsageError("coarse level must not exceed fine level")
    if list(args.levels) != sorted(args.levels):
        raise UsageError("levels must be ascending")
    rows = convergence_study(args.alg, pairs, _gummel_config(args))
    text = format_csv(rows) if args.format == "csv" else format_study(rows)
    _emit(text, args.out)
    return 0


def parse_pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(t) for t in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected COARSE:FINE, got {text!r}") from exc
    return a, b


def verify_pairs(alg: str, pairs, cfg: GummelConfig | None = None) -> dict:
    """Run paired coupled and two-grid solves; returns
    ``{bound: [(H, h, BoundCheck), ...]}``."""
    case = exact_solution()
    out = {name: [] for name in BOUNDS}
    for c, f in pairs:
        fine, coarse = build_cube_mesh(f), build_cube_mesh(c)
        fem_state, _ = gummel_solve(fine, case.coeffs, case.rhs(), cfg)
        if alg == "fem-gummel":
            checks = verify_theorem_bounds(fem_state, fem_state, fem_state)
        else:
            tg_state, metrics = ALGORITHMS[alg](coarse, fine, case.coeffs, case.rhs(), cfg)
            checks = verify_theorem_bounds(fem_state, tg_state, metrics.coarse_state)
        for name, chk in checks.items():
            out[name].append((coarse.h, fine.h, chk))
    return out


def cmd_verify(args) -> int:
    if any(a > b for a, b in args.pairs):
        raise UsageError("coarse level must not exceed fine level")
    report = verify_pairs(args.alg, args.pairs, _gummel_config(args))
    judged = args.bounds or BOUNDS_FOR[args.alg]
    ok = True
    lines = []
    for name, entries in report.items():
        lhs_desc, rhs_desc = BOUNDS[name]
        tag = "judged" if name in judged else "info"
        lines.append(f"[{tag}] {name}: {lhs_desc} <= C {rhs_desc}")
        for H, h, chk in entries:
            c = "exact" if chk.exact else f"C={chk.constant:.4e}"
            lines.append(f"  H={_frac(H):>5} h={_frac(h):>5}  lhs={chk.lhs:.4e}  rhs={chk.rhs:.4e}  {c}")
        bounded = constants_bounded([chk.constant for _, _, chk in entries])
        lines.append(f"  bounded (max/min < 5): {'yes' if bounded else 'no'}")
        if name in judged:
            ok &= bounded
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if ok else 2


# --------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--alg", choices=ALG_CHOICES, default="fem-gummel")
    p.add_argument("--tol", type=float, default=1e-5, help="Gummel stopping tolerance")
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--damping", type=float, default=1.0)
    p.add_argument("--norm-kind", choices=("fe-l2", "coefficient-l2"), default="fe-l2")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pnp-twogrid", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run one solver and report errors")
    _common(p)
    p.add_argument("--coarse-level", type=int, default=1)
    p.add_argument("--fine-level", type=int, default=2)
    p.add_argument("--format", choices=("table", "csv", "vtk"), default="table")
    p.add_argument("--config", default=None, help="key=value coefficient overrides")
    p.add_argument("--parallel-step2", action="store_true",
                   help="run the independent fine solves of tg2 concurrently")
    p.add_argument("--dump-matrices", default=None, metavar="DIR",
                   help="write final fine-grid systems as MatrixMarket files")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("convergence", help="error and observed-order study")
    _common(p)
    p.add_argument("--levels", type=int, nargs="+", required=True)
    p.add_argument("--pairing", choices=("square", "equal", "fixed"), default="square",
                   help="square: h = H^2, equal: h = H, fixed: one coarse level")
    p.add_argument("--coarse-level", type=int, default=None)
    p.add_argument("--format", choices=("table", "csv"), default="csv")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("verify", help="check the two-grid error bounds")
    _common(p)
    p.add_argument("--pairs", type=parse_pair, nargs="+", required=True, metavar="COARSE:FINE")
    p.add_argument("--bounds", nargs="+", choices=tuple(BOUNDS), default=None,
                   help="bounds that decide the exit status")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"pnp-twogrid: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
