"""Batch command-line front end.

Every subcommand parses its flags, dispatches to a library call, and
writes CSV or JSON; no numerics live here.  Output files start with
comment lines echoing the full configuration so each run is reproducible
from its artifact alone.  Floats are printed with 17 significant digits
so the CSV round-trips 64-bit values losslessly.
"""

from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import approx as approx_mod
from . import cylinder as cyl
from . import minimize as min_mod
from .errors import ConvergenceFailure, FracPerimError
from .functional import (
    coarea_check,
    decomposition_check,
    divergence_probe_1d,
    log_square_beta,
    perimeter,
)
from .functional import PairEngine, interaction
from .grid import (
    AnalyticTail,
    CellSet,
    DomainWindow,
    GridSpec,
    ScalarField,
    TruncateAtRadius,
    cellset_from_shape,
    full_window,
    read_grid_file,
    sublevel_window,
    window_from_shape,
    write_grid_file,
)
from .kernel import KernelParams, build_table, unit_ball_volume

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PROPERTY = 2
EXIT_NUMERICAL = 3


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _threads(requested: int | None) -> int:
    env = os.environ.get("FRACPERIM_THREADS")
    if requested is not None:
        return max(1, requested)
    if env:
        return max(1, int(env))
    return 1


def _parallel_map(fn, items, threads: int):
    """Order-preserving map; the reduction order is fixed regardless of
    pool size, so outputs are byte-identical across thread counts."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _config_lines(**kv) -> list[str]:
    return [f"# {k}={v}" for k, v in sorted(kv.items())]


def _emit(output: str | None, lines: list[str]) -> None:
    text = "\n".join(lines) + "\n"
    if output:
        with open(output, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


def _fail_config(message: str, **extra) -> "NoReturn":
    diag = {"error": "config", "message": message, **extra}
    click.echo(json.dumps(diag, sort_keys=True), err=True)
    sys.exit(EXIT_CONFIG)


def _guard(fn):
    """Map library errors onto the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConvergenceFailure as err:
            click.echo(
                json.dumps({"error": type(err).__name__, "message": str(err)}),
                err=True,
            )
            sys.exit(EXIT_NUMERICAL)
        except (FracPerimError, ValueError, OSError, json.JSONDecodeError) as err:
            _fail_config(str(err), kind=type(err).__name__)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _policy_from(policy: str):
    if policy == "analytic":
        return AnalyticTail()
    if policy.startswith("truncate:"):
        return TruncateAtRadius(float(policy.split(":", 1)[1]))
    raise ValueError(f"policy must be 'analytic' or 'truncate:<radius>', got {policy!r}")


def _auto_table(spec: GridSpec, s: float, policy) -> "InteractionTable":
    eng = PairEngine(spec, policy, build_table(spec, KernelParams(s, spec.dim), 1))
    k = max(eng.padded_spec.extent) - 1
    return build_table(spec, KernelParams(s, spec.dim), max_offset=k)


def _load_set(grid: str | None, shape: str | None, extent, h, origin) -> CellSet:
    if grid:
        return read_grid_file(grid)
    if shape is None:
        raise ValueError("either --grid or --shape is required")
    ext = tuple(int(v) for v in extent.split(","))
    org = tuple(float(v) for v in origin.split(",")) if origin else (0.0,) * len(ext)
    spec = GridSpec(len(ext), org, ext, float(h))
    return cellset_from_shape(spec, json.loads(shape))


@click.group()
def main():
    """Fractional s-perimeter toolkit."""


# ---------------------------------------------------------------------------
# compute
# ---------------------------------------------------------------------------


@main.command()
@click.option("--s", "s", type=float, required=True)
@click.option("--grid", type=click.Path(exists=True), default=None)
@click.option("--shape", default=None, help="shape DSL JSON instead of a grid file")
@click.option("--extent", default=None, help="comma list of cell counts (with --shape)")
@click.option("--h", "h", type=float, default=1.0)
@click.option("--origin", default=None, help="comma list of origin coordinates")
@click.option("--omega", default=None, help="window shape DSL JSON (default: full box)")
@click.option("--policy", default="analytic", show_default=True)
@click.option("--output", default=None)
@_guard
def compute(s, grid, shape, extent, h, origin, omega, policy, output):
    """s-perimeter of a set in a window, as JSON."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0,1), got {s}")
    E = _load_set(grid, shape, extent, h, origin)
    pol = _policy_from(policy)
    win = (
        window_from_shape(E.spec, json.loads(omega), pol)
        if omega
        else full_window(E.spec, pol)
    )
    table = _auto_table(E.spec, s, pol)
    bd = perimeter(E, win, table)
    result = {
        "s": s,
        "local": bd.local,
        "nonlocal": bd.nonlocal_,
        "total": bd.total,
        "truncation_error_bound": bd.truncation_error_bound,
        "degenerate": bd.degenerate,
    }
    _emit(output, [json.dumps(result, sort_keys=True)])


# ---------------------------------------------------------------------------
# approx
# ---------------------------------------------------------------------------


@main.command("approx")
@click.option("--s", "s", type=float, required=True)
@click.option("--grid", type=click.Path(exists=True), required=True)
@click.option("--eps", "eps_list", required=True, help="comma list, non-increasing")
@click.option("--omega", default=None)
@click.option("--policy", default="truncate:2.0", show_default=True)
@click.option("--lipschitz", is_flag=True)
@click.option("--output", default=None)
@_guard
def approx_cmd(s, grid, eps_list, omega, policy, lipschitz, output):
    """Mollify-threshold ladder; one CSV row per radius."""
    E = read_grid_file(grid)
    pol = _policy_from(policy)
    win = (
        window_from_shape(E.spec, json.loads(omega), pol)
        if omega
        else full_window(E.spec, pol)
    )
    schedule = [float(v) for v in eps_list.split(",")]
    table = _auto_table(E.spec, s, pol)
    run = approx_mod.approximate_set_lipschitz if lipschitz else approx_mod.approximate_set
    steps = run(E, win, schedule, table)
    lines = _config_lines(
        command="approx", s=s, grid=grid, eps=eps_list, lipschitz=lipschitz,
        policy=policy,
    )
    lines.append("eps,threshold,perimeter,boundary_in_neighborhood")
    for st in steps:
        lines.append(
            f"{_fmt(st.eps)},{_fmt(st.threshold)},{_fmt(st.breakdown.total)},"
            f"{int(st.boundary_in_neighborhood)}"
        )
    _emit(output, lines)


# ---------------------------------------------------------------------------
# minimize
# ---------------------------------------------------------------------------


@main.command("minimize")
@click.option("--s", "s", type=float, required=True)
@click.option("--grid", type=click.Path(exists=True), default=None,
              help="exterior data bitmask (fracgrid)")
@click.option("--exterior", default=None, help="exterior data shape DSL JSON")
@click.option("--extent", default=None)
@click.option("--h", "h", type=float, default=1.0)
@click.option("--origin", default=None)
@click.option("--omega", required=True, help="window shape DSL JSON")
@click.option("--policy", default="analytic", show_default=True)
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.option("--max-iter", type=int, default=2000, show_default=True)
@click.option("--oracle", is_flag=True, help="verify against exhaustive search")
@click.option("--out-grid", default=None, help="write the minimizer as a grid file")
@click.option("--output", default=None)
@_guard
def minimize_cmd(s, grid, exterior, extent, h, origin, omega, policy, tol,
                 max_iter, oracle, out_grid, output):
    """Relaxation + thresholding; solver report as JSON."""
    E0 = _load_set(grid, exterior, extent, h, origin)
    if grid and exterior:
        # bitmask from the file, exterior model from the DSL
        model = cellset_from_shape(E0.spec, json.loads(exterior)).exterior
        E0 = CellSet(E0.spec, E0.inside, model)
    pol = _policy_from(policy)
    win = window_from_shape(E0.spec, json.loads(omega), pol)
    table = _auto_table(E0.spec, s, pol)
    prob = min_mod.MinimizationProblem(win, E0, table)
    rep = min_mod.solve_and_threshold(prob, tol=tol, max_iter=max_iter)
    result = {
        "s": s,
        "relaxed_energy": rep.relaxed_energy,
        "threshold": rep.threshold,
        "energy": rep.energy,
        "iterations": rep.iterations,
        "kkt_residual": rep.kkt_residual,
    }
    status = EXIT_OK
    if oracle:
        _, best = min_mod.brute_force_minimum(prob)
        result["oracle_energy"] = best
        result["oracle_ok"] = bool(rep.energy <= best + 1e-9 * (1.0 + abs(best)))
        if not result["oracle_ok"]:
            status = EXIT_PROPERTY
    if out_grid:
        write_grid_file(out_grid, rep.minimizer)
    _emit(output, [json.dumps(result, sort_keys=True)])
    sys.exit(status)


# ---------------------------------------------------------------------------
# identity checks
# ---------------------------------------------------------------------------


@main.command("coarea-check")
@click.option("--s", "s", type=float, required=True)
@click.option("--extent", required=True)
@click.option("--h", "h", type=float, default=1.0)
@click.option("--levels", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--policy", default="truncate:2.0", show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--output", default=None)
@_guard
def coarea_cmd(s, extent, h, levels, seed, policy, tol, output):
    """Discrete coarea identity on a seeded random piecewise-constant field."""
    ext = tuple(int(v) for v in extent.split(","))
    spec = GridSpec(len(ext), (0.0,) * len(ext), ext, h)
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, levels, size=ext) / max(levels - 1, 1)
    u = ScalarField(spec, vals.astype(float), 0.0)
    pol = _policy_from(policy)
    win = full_window(spec, pol)
    table = _auto_table(spec, s, pol)
    lhs, rhs = coarea_check(u, win, table)
    residual = abs(lhs - rhs) / (1.0 + abs(lhs))
    result = {"s": s, "lhs": lhs, "rhs": rhs, "residual": residual, "seed": seed}
    _emit(output, [json.dumps(result, sort_keys=True)])
    sys.exit(EXIT_OK if residual <= tol else EXIT_PROPERTY)


@main.command("decomposition-check")
@click.option("--s", "s", type=float, required=True)
@click.option("--grid", type=click.Path(exists=True), required=True)
@click.option("--inner", required=True, help="inner window shape DSL JSON")
@click.option("--outer", required=True, help="outer window shape DSL JSON")
@click.option("--policy", default="truncate:2.0", show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--output", default=None)
@_guard
def decomposition_cmd(s, grid, inner, outer, policy, tol, output):
    """Window-decomposition identity residual for a set from a grid file."""
    E = read_grid_file(grid)
    pol = _policy_from(policy)
    wi = window_from_shape(E.spec, json.loads(inner), pol)
    wo = window_from_shape(E.spec, json.loads(outer), pol)
    table = _auto_table(E.spec, s, pol)
    res = decomposition_check(E, wi, wo, table)
    po = perimeter(E, wo, table).total
    rel = res / (1.0 + abs(po))
    _emit(output, [json.dumps({"s": s, "residual": res, "relative": rel},
                              sort_keys=True)])
    sys.exit(EXIT_OK if rel <= tol else EXIT_PROPERTY)


# ---------------------------------------------------------------------------
# strip scan
# ---------------------------------------------------------------------------


@main.command("strip-scan")
@click.option("--s", "s_list", default="0.3,0.5,0.7", show_default=True)
@click.option("--strip-cells", type=int, default=8, show_default=True,
              help="grid cells across the strip width (resolution per delta)")
@click.option("--deltas", default="0.25,0.125,0.0625,0.03125,0.015625",
              show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--output", default=None)
@_guard
def strip_scan(s_list, strip_cells, deltas, threads, output):
    """Inner-strip interaction on the unit square with the lemma bound line.

    Both sets live inside the square, so no exterior data enters; each
    delta gets its own grid with the strip resolved by --strip-cells
    cells so the relative discretization error is uniform across rows.
    """
    svals = [float(v) for v in s_list.split(",")]
    dvals = [float(v) for v in deltas.split(",")]
    nthreads = _threads(threads)

    geo = {}
    for d in dvals:
        n = max(4, int(round(strip_cells / d)))
        spec = GridSpec(2, (0.0, 0.0), (n, n), 1.0 / n)
        win = full_window(spec)
        shrunk = sublevel_window(win, -d)
        geo[d] = (spec, shrunk.omega, win.omega & ~shrunk.omega)

    def one(args):
        s, delta = args
        spec, core, strip = geo[delta]
        table = build_table(spec, KernelParams(s, 2),
                            max_offset=max(spec.extent) - 1)
        val = interaction(core, strip, table)
        # slices of the square at inner offsets have perimeter at most 4
        c_const = 2.0 * unit_ball_volume(2) / (s * (1.0 - s)) * 4.0
        return s, delta, val, c_const * delta ** (1.0 - s)

    jobs = [(s, d) for s in svals for d in dvals]
    rows = _parallel_map(one, jobs, nthreads)
    lines = _config_lines(command="strip-scan", s=s_list,
                          strip_cells=strip_cells, deltas=deltas)
    lines.append("s,delta,measured,bound")
    ok = True
    for s, d, v, b in rows:
        lines.append(f"{_fmt(s)},{_fmt(d)},{_fmt(v)},{_fmt(b)}")
        ok = ok and v <= b
    for s in svals:
        pts = [(math.log(d), math.log(v)) for ss, d, v, _ in rows if ss == s]
        slope = float(np.polyfit([p[0] for p in pts], [p[1] for p in pts], 1)[0])
        lines.append(f"# fitted_exponent s={_fmt(s)}: {_fmt(slope)}")
        ok = ok and abs(slope - (1.0 - s)) <= 0.1
    _emit(output, lines)
    sys.exit(EXIT_OK if ok else EXIT_PROPERTY)


# ---------------------------------------------------------------------------
# cylinder family
# ---------------------------------------------------------------------------


def _base_setup(n_cells: int, h: float, v0: float):
    base = GridSpec(1, (0.0,), (n_cells,), h)
    v = ScalarField(base, np.full(n_cells, v0), v0)
    return base, v


@main.command("cylinder-scan")
@click.option("--s", "s", type=float, required=True)
@click.option("--n", "n_cells", type=int, default=8, show_default=True)
@click.option("--h", "h", type=float, default=0.125, show_default=True)
@click.option("--v0", type=float, default=0.0, show_default=True)
@click.option("--t-schedule", "tsched", required=True, help="comma list, increasing")
@click.option("--threads", type=int, default=None)
@click.option("--output", default=None)
@_guard
def cylinder_scan(s, n_cells, h, v0, tsched, threads, output):
    """Nonlocal tail divergence rows (T, lower bound, value) plus slope."""
    base, v = _base_setup(n_cells, h, v0)
    ob = full_window(base)
    amb = GridSpec(2, base.origin + (-2.0,), base.extent + (int(4.0 / h),), h)
    table = build_table(amb, KernelParams(s, 2), max_offset=max(amb.extent) - 1)
    Ts = [float(t) for t in tsched.split(",")]
    rows = cyl.nonlocal_divergence_scan(v, ob, Ts, table)
    slope = cyl.fit_tail_slope(rows)
    lines = _config_lines(command="cylinder-scan", s=s, n=n_cells, h=h,
                          v0=v0, t_schedule=tsched)
    lines.append("T,lower_bound,value")
    for r in rows:
        lines.append(f"{_fmt(r.T)},{_fmt(r.lower_bound)},{_fmt(r.value)}")
    lines.append(f"# fitted_slope: {_fmt(slope)}")
    ok = abs(slope - (1.0 - s)) <= 0.1 and all(
        r.lower_bound <= r.value for r in rows
    )
    _emit(output, lines)
    sys.exit(EXIT_OK if ok else EXIT_PROPERTY)


@main.command("sector-scan")
@click.option("--s", "s", type=float, required=True)
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--m-bound", "m_bound", type=float, default=1.0, show_default=True)
@click.option("--n", "n_cells", type=int, default=8, show_default=True)
@click.option("--h", "h", type=float, default=0.125, show_default=True)
@click.option("--v0", type=float, default=0.0, show_default=True)
@click.option("--t-schedule", "tsched", required=True)
@click.option("--output", default=None)
@_guard
def sector_scan(s, sigma, m_bound, n_cells, h, v0, tsched, output):
    """Sector-restricted divergence rows and slope."""
    base, v = _base_setup(n_cells, h, v0)
    ob = full_window(base)
    amb = GridSpec(2, base.origin + (-2.0,), base.extent + (int(4.0 / h),), h)
    table = build_table(amb, KernelParams(s, 2), max_offset=max(amb.extent) - 1)
    Ts = [float(t) for t in tsched.split(",")]
    rows = cyl.sector_divergence_scan(v, sigma, m_bound, ob, Ts, table)
    slope = cyl.fit_tail_slope(rows)
    lines = _config_lines(command="sector-scan", s=s, sigma=sigma, n=n_cells,
                          h=h, t_schedule=tsched)
    lines.append("T,lower_bound,value")
    for r in rows:
        lines.append(f"{_fmt(r.T)},{_fmt(r.lower_bound)},{_fmt(r.value)}")
    lines.append(f"# fitted_slope: {_fmt(slope)}")
    _emit(output, lines)
    sys.exit(EXIT_OK if abs(slope - (1.0 - s)) <= 0.1 else EXIT_PROPERTY)


@main.command("confinement")
@click.option("--grid", type=click.Path(exists=True), required=True,
              help="ambient (n+1)-dim set as a fracgrid file")
@click.option("--base-extent", required=True, help="comma list of base cell counts")
@click.option("--output", default=None)
@_guard
def confinement(grid, base_extent, output):
    """Measured vertical confinement bound M of a computed set."""
    E = read_grid_file(grid)
    ext = tuple(int(v) for v in base_extent.split(","))
    base = GridSpec(E.spec.dim - 1, E.spec.origin[:-1], ext, E.spec.h)
    ob = full_window(base)
    m = cyl.vertical_confinement_check(E, ob)
    _emit(output, [json.dumps({"measured_M": m}, sort_keys=True)])


@main.command("davila-scan")
@click.option("--s-schedule", "ssched", default="0.6,0.7,0.8,0.9", show_default=True)
@click.option("--n-schedule", "nsched", default="8,16", show_default=True,
              help="base cells per refinement level on the unit interval")
@click.option("--k", "k", type=float, default=1.0, show_default=True)
@click.option("--output", default=None)
@_guard
def davila_scan(ssched, nsched, k, output):
    """Scaled local energy vs classical graph area across (s, h) pairs."""
    svals = [float(v) for v in ssched.split(",")]
    nvals = [int(v) for v in nsched.split(",")]
    specs = [GridSpec(1, (0.0,), (n,), 1.0 / n) for n in nvals]
    rows = cyl.graph_area_asymptotics(
        lambda sp: ScalarField(sp, np.zeros(sp.extent), 0.0),
        lambda sp: full_window(sp),
        k, svals, specs,
    )
    lines = _config_lines(command="davila-scan", s_schedule=ssched,
                          n_schedule=nsched, k=k)
    lines.append("s,h,scaled_local,classical,ratio")
    for r in rows:
        lines.append(
            f"{_fmt(r.s)},{_fmt(r.h)},{_fmt(r.scaled_local)},"
            f"{_fmt(r.classical)},{_fmt(r.ratio)}"
        )
    _emit(output, lines)


@main.command("diverge-1d")
@click.option("--s", "s", type=float, default=0.5, show_default=True)
@click.option("--m-schedule", "msched", default="8,16,32,64", show_default=True)
@click.option("--output", default=None)
@_guard
def diverge_1d(s, msched, output):
    """Partial perimeters of the canonical interval-union probe."""
    ms = [int(v) for v in msched.split(",")]
    lines = _config_lines(command="diverge-1d", s=s, m_schedule=msched)
    lines.append("m,value")
    for m in ms:
        val = divergence_probe_1d(log_square_beta, m, s)
        lines.append(f"{m},{_fmt(val)}")
    _emit(output, lines)


if __name__ == "__main__":
    main()
