"""Subgraphs over a base grid inside an infinite vertical cylinder.

The vertical axis is only gridded inside a finite window; below and above
it every column is analytically full (respectively empty), so the
infinite tails enter through closed-form or one-dimensional quadrature
masses rather than through truncation.  This is what makes divergence
rates and finiteness bounds testable: the tails are the whole story.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import (
    ConfinementUndetermined,
    HypothesisViolated,
    InvalidSequence,
    SpecMismatch,
    WindowTooShort,
)
from .functional import PerimeterBreakdown, _pair_sum
from .grid import CellSet, DomainWindow, GridSpec, ScalarField, SubgraphExterior
from .kernel import InteractionTable, KernelParams, build_table, tail_mass, unit_ball_volume

__all__ = [
    "SubgraphSet",
    "ScanRow",
    "DavilaRow",
    "truncated_cylinder_perimeter",
    "local_part_bound",
    "nonlocal_divergence_scan",
    "sector_divergence_scan",
    "vertical_confinement_check",
    "graph_area_asymptotics",
    "fit_tail_slope",
    "classical_graph_area",
]


@dataclass(frozen=True)
class SubgraphSet:
    """Region below the graph of v, gridded inside a vertical window.

    ``heights`` lives on the base grid and equals ``farfield`` outside
    the base box; the ambient set is {(x, t): t < v(x)}.  Columns beyond
    the vertical window (-T, T) are uniformly full below and empty above,
    which requires |v| < T everywhere.
    """

    base_spec: GridSpec
    heights: ScalarField
    vertical_extent: float  # T; window is (-T, T)
    farfield: float = 0.0

    def __post_init__(self):
        if self.heights.spec != self.base_spec:
            raise SpecMismatch("heights field not on the base grid")
        T = self.vertical_extent
        if not T > 0:
            raise ValueError("vertical_extent must be positive")
        vmax = max(float(np.max(np.abs(self.heights.values))), abs(self.farfield))
        if vmax >= T:
            raise WindowTooShort(
                f"vertical window (-{T}, {T}) does not contain the graph "
                f"(max |v| = {vmax})"
            )

    def ambient_spec(self) -> GridSpec:
        base = self.base_spec
        h = base.h
        nz = int(round(2.0 * self.vertical_extent / h))
        return GridSpec(
            base.dim + 1,
            base.origin + (-self.vertical_extent,),
            base.extent + (nz,),
            h,
        )

    def exterior(self) -> SubgraphExterior:
        return SubgraphExterior(
            self.base_spec,
            tuple(self.heights.values.ravel()),
            self.farfield,
        )

    def cellset(self) -> CellSet:
        spec = self.ambient_spec()
        ext = self.exterior()
        inside = ext.contains(spec.centers()).reshape(spec.extent)
        return CellSet(spec, inside, ext)


# ---------------------------------------------------------------------------
# Vertical ray masses.
# ---------------------------------------------------------------------------


def _interval_ray_pow(a: float, b: float, c: float, p: float) -> float:
    """Integral of (tau - t)^(-p) over t in (a,b), tau in (c,inf), c >= b."""
    q = 2.0 - p
    return ((c - a) ** q - (c - b) ** q) / ((p - 1.0) * (p - 2.0))


@lru_cache(maxsize=None)
def _ray_mass(d: float, gap: float, h: float, p: float) -> float:
    """Kernel mass between a vertical cell of height h and a vertical ray.

    The cell spans t in (0, h), the ray tau in (h + gap, inf), at
    horizontal distance d.  Reduces to a single integral in the vertical
    separation u = tau - t:
    int_g^{g+h} (u - g) (d^2+u^2)^(-p/2) du + h int_{g+h}^inf (...) du.
    """
    g = gap + 1e-300  # guard the d = 0, gap = 0 corner of the power law
    if d == 0.0:
        return _interval_ray_pow(0.0, h, h + gap, p)
    body, _ = integrate.quad(
        lambda u: (u - g) * (d * d + u * u) ** (-p / 2.0),
        g, g + h, epsabs=1e-13, epsrel=1e-12,
    )
    y = g + h
    theta0 = math.asinh(y / d)
    tail, _ = integrate.quad(
        lambda th: math.cosh(th) ** (1.0 - p),
        theta0, theta0 + 60.0, epsabs=1e-13, epsrel=1e-12,
    )
    return body + h * d ** (1.0 - p) * tail


def _column_ray_masses(spec: GridSpec, base_positions: np.ndarray,
                       p: float, z_rows: np.ndarray) -> np.ndarray:
    """mass[r, i]: ray mass of the cell at vertical index z_rows[r] in
    column i against the top rays of every listed column.

    ``base_positions`` holds the base-plane centers of all columns in the
    (padded) universe.  By vertical mirror symmetry the same table read
    with reversed row indices gives the bottom-ray masses.  In-plane
    extent enters through the center distance only, which is accurate
    because the rays start at least one unit above the evaluated rows.
    """
    h = spec.h
    nz = spec.extent[-1]
    dists = np.linalg.norm(
        base_positions[:, None, :] - base_positions[None, :, :], axis=2
    )
    dist_round = np.round(dists / h * 1e9) / 1e9 * h
    uniq = np.unique(dist_round)
    per_dist = np.zeros((len(z_rows), len(uniq)))
    for j, d in enumerate(uniq):
        for r, z in enumerate(z_rows):
            gap = (nz - 1 - int(z)) * h  # cells above this one in the window
            per_dist[r, j] = _ray_mass(float(d), float(gap), float(h), p)
    counts = np.stack(
        [np.sum(dist_round == d, axis=1) for d in uniq], axis=1
    )  # [col, dist]
    return per_dist @ counts.T


# ---------------------------------------------------------------------------
# Truncated-cylinder perimeter.
# ---------------------------------------------------------------------------


def _ambient_of(E) -> tuple[CellSet, GridSpec]:
    if isinstance(E, SubgraphSet):
        cs = E.cellset()
        return cs, cs.spec
    return E, E.spec


def truncated_cylinder_perimeter(E, omega_base: DomainWindow, k: float,
                                 table: InteractionTable,
                                 pad_radius: float | None = None) -> PerimeterBreakdown:
    """P_s(E, Omega x (-k, k)) with analytic vertical tails.

    The base plane is padded out to ``pad_radius`` and the neglected
    horizontal far field reported as a truncation bound; every vertical
    column's infinite rays (full below the window, empty above) are
    integrated by quadrature masses, so the vertical direction carries no
    truncation error at all.
    """
    cell, spec = _ambient_of(E)
    n_amb = spec.dim
    h = spec.h
    t_lo = spec.box_lo[-1]
    t_hi = spec.box_hi[-1]
    if t_lo > -k - 1.0 + 1e-12 or t_hi < k + 1.0 - 1e-12:
        raise WindowTooShort(
            f"vertical box ({t_lo}, {t_hi}) must cover (-{k + 1}, {k + 1})"
        )
    if omega_base.spec.dim != n_amb - 1:
        raise SpecMismatch("omega_base dimension must be ambient dim - 1")

    if pad_radius is None:
        pad_radius = 2.0 * max(omega_base.spec.extent) * h
    pad = int(math.ceil(pad_radius / h))

    # pad the base axes only; the vertical axis is covered by ray masses
    uni = GridSpec(
        n_amb,
        tuple(o - pad * h for o in spec.origin[:-1]) + (spec.origin[-1],),
        tuple(n + 2 * pad for n in spec.extent[:-1]) + (spec.extent[-1],),
        h,
    )
    occ = cell.occupancy_on(uni)
    centers_z = uni.origin[-1] + (np.arange(uni.extent[-1]) + 0.5) * h
    z_in = np.abs(centers_z) < k
    base_slice = (
        (slice(pad, -pad),) * (n_amb - 1) if pad else (slice(None),) * (n_amb - 1)
    )
    base_mask = np.zeros(uni.extent[:-1], dtype=bool)
    base_mask[base_slice] = omega_base.omega
    om = base_mask[..., None] & z_in

    e_in = occ & om
    c_in = ~occ & om
    e_out = occ & ~om
    c_out = ~occ & ~om
    local = _pair_sum(e_in, c_in, table)
    nl = [_pair_sum(e_in, c_out, table), _pair_sum(e_out, c_in, table)]

    # vertical rays: top rays are complement everywhere, bottom rays are E
    p = table.params.dim + table.params.s
    base_axes = [
        uni.origin[a] + (np.arange(uni.extent[a]) + 0.5) * h
        for a in range(n_amb - 1)
    ]
    grids = np.meshgrid(*base_axes, indexing="ij")
    base_positions = np.stack([g.ravel() for g in grids], axis=-1)
    nz = uni.extent[-1]
    z_rows = np.nonzero(z_in)[0]
    top = _column_ray_masses(uni, base_positions, p, z_rows)  # [row, col]
    bot = _column_ray_masses(uni, base_positions, p, nz - 1 - z_rows)
    ncols = len(base_positions)
    e_cols = e_in.reshape(ncols, nz).T[z_rows]  # [row, col]
    c_cols = c_in.reshape(ncols, nz).T[z_rows]
    nl.append(math.fsum((top * e_cols).ravel()))  # E cells vs empty top rays
    nl.append(math.fsum((bot * c_cols).ravel()))  # complement cells vs full bottom
    nonlocal_ = math.fsum(nl)

    # horizontal truncation bound for the omitted far field
    params = table.params
    pts = uni.centers().reshape(uni.extent + (n_amb,))[om]
    lo = uni.box_lo[:-1]
    hi = uni.box_hi[:-1]
    r = np.minimum(
        (pts[:, :-1] - lo).min(axis=1), (hi - pts[:, :-1]).min(axis=1)
    )
    r = np.maximum(r, h * 0.5)
    bound = float(sum(h**n_amb * tail_mass(float(ri), params) for ri in np.sort(r)))

    return PerimeterBreakdown(
        local=local,
        nonlocal_=nonlocal_,
        total=local + nonlocal_,
        truncation_error_bound=bound,
        degenerate=not om.any(),
    )


def local_part_bound(omega_base: DomainWindow, k: float,
                     local_truncated: float, s: float) -> float:
    """Explicit finite upper bound on the local part over the full cylinder.

    Assembled from three pieces: the computed local part on the truncated
    cylinder, twice the near-tail interaction bounded by the kernel tail
    mass, and the closed-form far-tail pair integral:

        P^L <= P^L(E, Omega^{k+1}) + 2 (n+1) omega_{n+1} / s (2k+1) |Omega|
             + |Omega|^2 / ((n+s)(n-1+s) (2k+2)^{n-1+s}).
    """
    n = omega_base.spec.dim
    vol = omega_base.n_omega * omega_base.spec.h**n
    term2 = 2.0 * (n + 1) * unit_ball_volume(n + 1) / s * (2.0 * k + 1.0) * vol
    term3 = vol**2 / ((n + s) * (n - 1.0 + s) * (2.0 * k + 2.0) ** (n - 1.0 + s))
    return local_truncated + term2 + term3


# ---------------------------------------------------------------------------
# Divergence scans.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    T: float
    lower_bound: float
    value: float


def _omega_intervals(omega_base: DomainWindow) -> list[tuple[float, float]]:
    """Maximal runs of omega cells as real intervals (1D base only)."""
    spec = omega_base.spec
    if spec.dim != 1:
        raise SpecMismatch("divergence scans support 1D bases only")
    mask = omega_base.omega
    runs = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        if not v and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    o = spec.origin[0]
    h = spec.h
    return [(o + a * h, o + b * h) for a, b in runs]


def _tail_kernel(d: float, T: float, p: float) -> float:
    """int_{2T}^inf (g - 2T) (d^2 + g^2)^(-p/2) dg, exact in the vertical."""
    val, _ = integrate.quad(
        lambda g: (g - 2.0 * T) * (d * d + g * g) ** (-p / 2.0),
        2.0 * T, np.inf, epsabs=1e-13, epsrel=1e-12,
    )
    return val


def _cross_tail_interaction(intervals_a, intervals_b, T: float, p: float) -> float:
    """L_s(A x (-inf,-T), B x (T,inf)) for unions of base intervals.

    The base double integral collapses onto the horizontal separation d:
    int lam(d) K(d) dd with lam the overlap density of the two interval
    unions (piecewise linear, trapezoid per interval pair).
    """
    total = 0.0
    for a0, a1 in intervals_a:
        for b0, b1 in intervals_b:
            # signed separations y - x for x in (a0,a1), y in (b0,b1)
            lo = b0 - a1
            hi = b1 - a0
            m1 = min(b0 - a0, b1 - a1)
            m2 = max(b0 - a0, b1 - a1)
            plateau = min(a1 - a0, b1 - b0)

            def lam(d):
                if d <= lo or d >= hi:
                    return 0.0
                if d <= m1:
                    return d - lo
                if d <= m2:
                    return plateau
                return hi - d

            pts = sorted({lo, m1, m2, hi})
            for c0, c1 in zip(pts[:-1], pts[1:]):
                if c1 <= c0:
                    continue
                val, _ = integrate.quad(
                    lambda d: lam(d) * _tail_kernel(abs(d), T, p),
                    c0, c1, epsabs=1e-11, epsrel=1e-10, limit=200,
                )
                total += val
    return total


def _scan_common(omega_base: DomainWindow, k: float, T_schedule,
                 table: InteractionTable, directions: tuple[int, ...]):
    Ts = [float(T) for T in T_schedule]
    if any(b <= a for a, b in zip(Ts, Ts[1:])):
        raise InvalidSequence("T schedule must be strictly increasing")
    n = omega_base.spec.dim
    p = n + 1 + table.params.s
    s = table.params.s
    omega = _omega_intervals(omega_base)
    if not omega:
        raise HypothesisViolated("empty base window")
    R = max(abs(omega[0][0]), abs(omega[-1][1]))
    T0 = max(k, R)
    if Ts[0] <= T0:
        raise InvalidSequence(
            f"T schedule must start above T0 = max(k, R) = {T0}"
        )
    vol = sum(b - a for a, b in omega)
    rows = []
    for T in Ts:
        region = []
        if 1 in directions:
            region.append((R, T))
        if -1 in directions:
            region.append((-T, -R))
        measure = sum(b - a for a, b in region)
        value = _cross_tail_interaction(omega, region, T, p)
        frac = len(directions) / 2.0
        lower = (
            vol
            / (2.0 ** ((n + 1 + s) / 2.0) * (n + s) * (n - 1.0 + s))
            * (frac * 2.0 * (T - R))
            / (2.0 * T) ** (n - 1.0 + s)
        )
        rows.append(ScanRow(T=T, lower_bound=lower, value=value))
    return rows


def nonlocal_divergence_scan(v: ScalarField, omega_base: DomainWindow,
                             T_schedule, table: InteractionTable) -> list[ScanRow]:
    """Tail interaction L_s(Omega x (-inf,-T), (B_T \\ B_R) x (T, inf)).

    Each row carries the closed-form lower bound; the values grow like
    T^(1-s), which the tail slope fit recovers.
    """
    if not np.all(np.isfinite(v.values)):
        raise HypothesisViolated("graph heights must be bounded")
    k = float(np.max(np.abs(v.values)))
    if isinstance(v.exterior, (int, float)):
        k = max(k, abs(float(v.exterior)))
    return _scan_common(omega_base, k, T_schedule, table, directions=(-1, 1))


def sector_divergence_scan(u: ScalarField, sector_fraction: float, M: float,
                           omega_base: DomainWindow, T_schedule,
                           table: InteractionTable) -> list[ScanRow]:
    """Divergence scan restricted to a fraction of the directions.

    On a 1D base the direction sphere has two points, so the admissible
    fractions are 1 (both rays) and 1/2 (the positive ray).
    """
    if not np.all(np.isfinite(u.values)) or float(np.max(np.abs(u.values))) > M:
        raise HypothesisViolated(f"graph heights must stay within |u| <= {M}")
    if abs(sector_fraction - 1.0) < 1e-12:
        dirs: tuple[int, ...] = (-1, 1)
    elif abs(sector_fraction - 0.5) < 1e-12:
        dirs = (1,)
    else:
        raise HypothesisViolated(
            "1D direction sphere admits sector fractions 1/2 and 1 only"
        )
    return _scan_common(omega_base, float(M), T_schedule, table, directions=dirs)


def fit_tail_slope(rows: list[ScanRow]) -> float:
    """Least-squares log-log slope over the last half of the scan."""
    if len(rows) < 2:
        raise InvalidSequence("need at least two rows to fit a slope")
    tail = rows[len(rows) // 2 :]
    if len(tail) < 2:
        tail = rows[-2:]
    x = np.log([r.T for r in tail])
    y = np.log([r.value for r in tail])
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# Vertical confinement.
# ---------------------------------------------------------------------------


def vertical_confinement_check(E: CellSet, omega_base: DomainWindow) -> float:
    """Smallest M with Omega x (bottom, -M] inside E and E empty above M.

    Undetermined (window too short) when some column over the base window
    is occupied in its top cell or vacant in its bottom cell.
    """
    spec = E.spec
    if omega_base.spec.dim != spec.dim - 1:
        raise SpecMismatch("omega_base dimension must be ambient dim - 1")
    h = spec.h
    nz = spec.extent[-1]
    cols = E.inside.reshape(-1, nz)
    base_mask = omega_base.omega.ravel()
    sel = cols[base_mask]
    if sel.size == 0:
        return 0.0
    if np.any(sel[:, -1]) or np.any(~sel[:, 0]):
        raise ConfinementUndetermined(
            "sandwich violated at the vertical extremes; enlarge the window"
        )
    z_centers = spec.origin[-1] + (np.arange(nz) + 0.5) * h
    m_vals = []
    for col in sel:
        top_e = z_centers[col].max() + 0.5 * h  # highest occupied cell
        bot_c = z_centers[~col].min() - 0.5 * h  # lowest vacancy
        m_vals.append(max(top_e, -bot_c, 0.0))
    return float(max(m_vals))


# ---------------------------------------------------------------------------
# Area asymptotics as s -> 1.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DavilaRow:
    s: float
    h: float
    scaled_local: float  # (1 - s) * P_s^L(Sg(u), Omega^{k+1})
    classical: float  # omega_n * A(u, Omega)

    @property
    def ratio(self) -> float:
        return self.scaled_local / self.classical


def classical_graph_area(u: ScalarField, omega_base: DomainWindow) -> float:
    """Discrete graph area: sum over the window of sqrt(1 + |grad u|^2) h^n."""
    spec = u.spec
    g2 = np.zeros(spec.extent)
    for a in range(spec.dim):
        grad = np.gradient(u.values, spec.h, axis=a)
        g2 += grad * grad
    h_n = spec.h**spec.dim
    return float(np.sum(np.sqrt(1.0 + g2)[omega_base.omega]) * h_n)


def graph_area_asymptotics(u_of_spec, omega_of_spec, k: float, s_schedule,
                           refinement_schedule) -> list[DavilaRow]:
    """Scaled local energy against the classical area across (s, h) pairs.

    ``u_of_spec`` and ``omega_of_spec`` build the graph field and base
    window on each refined base grid, so the same geometry is sampled at
    every resolution; the vertical window is (-k-1, k+1).
    """
    rows = []
    for h_spec in refinement_schedule:
        base_spec = h_spec if isinstance(h_spec, GridSpec) else None
        if base_spec is None:
            raise SpecMismatch("refinement schedule must contain GridSpec entries")
        u = u_of_spec(base_spec)
        omega_base = omega_of_spec(base_spec)
        n = base_spec.dim
        area = unit_ball_volume(n) * classical_graph_area(u, omega_base)
        sg = SubgraphSet(base_spec, u, k + 1.0)
        cell = sg.cellset()
        amb = cell.spec
        om = np.zeros(amb.extent, dtype=bool)
        z_centers = amb.origin[-1] + (np.arange(amb.extent[-1]) + 0.5) * amb.h
        om[...] = omega_base.omega[..., None] & (np.abs(z_centers) < k + 1.0)
        for s in s_schedule:
            params = KernelParams(float(s), n + 1)
            table = build_table(amb, params, max_offset=max(amb.extent) - 1)
            local = _pair_sum(cell.inside & om, ~cell.inside & om, table)
            rows.append(
                DavilaRow(float(s), amb.h, (1.0 - float(s)) * local, area)
            )
    return rows
