"""Interaction functionals: L_s(A,B), the s-perimeter and its local /
nonlocal split, the relaxed energy F(u, Omega) and the discrete coarea
identity, plus the 1D interval-union divergence probe.

All energies are finite sums of table weights over cell pairs.  The
universe of cells is the grid box plus an explicit padded margin carrying
the exterior model; with a fixed universe every set-algebra identity
(complement invariance, decomposition, coarea) is exact in real
arithmetic, so residuals are pure floating-point accumulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import InvalidSequence, NotDisjoint, NotNested, SpecMismatch
from .grid import (
    AnalyticTail,
    CellSet,
    DomainWindow,
    EmptyExterior,
    FullExterior,
    GridSpec,
    HalfSpaceExterior,
    ScalarField,
    TruncateAtRadius,
)
from .kernel import (
    InteractionTable,
    interval_pair_exact,
    interval_ray_exact,
    tail_mass,
)

__all__ = [
    "PerimeterBreakdown",
    "PairEngine",
    "interaction",
    "perimeter",
    "decomposition_check",
    "relaxed_energy",
    "coarea_check",
    "divergence_probe_1d",
]

_DIRECT_LIMIT = 256  # cells; beyond this correlation switches to FFT


@dataclass(frozen=True)
class PerimeterBreakdown:
    """Local / nonlocal split of the s-perimeter plus far-field bookkeeping."""

    local: float
    nonlocal_: float
    total: float
    truncation_error_bound: float
    degenerate: bool = False


def _corr_counts(A: np.ndarray, B: np.ndarray, exact: bool) -> np.ndarray:
    """Pair counts per offset: out[delta + (S-1)] = sum_i A[i] B[i+delta]."""
    method = "direct" if exact else "fft"
    c = signal.correlate(A.astype(float), B.astype(float), mode="full", method=method)
    rev = tuple(slice(None, None, -1) for _ in range(A.ndim))
    return c[rev]


def _weight_block(table: InteractionTable, reaches: tuple[int, ...]) -> np.ndarray:
    k = table.max_offset
    if max(reaches) > k:
        raise ValueError(
            f"table max_offset {k} too small for required reach {reaches}"
        )
    sl = tuple(slice(k - r, k + r + 1) for r in reaches)
    return table.weights[sl]


def _pair_sum(A: np.ndarray, B: np.ndarray, table: InteractionTable,
              exact: bool | None = None) -> float:
    """Sum of w(j - i) over i in A, j in B (A, B boolean, same shape)."""
    if not A.any() or not B.any():
        return 0.0
    if exact is None:
        exact = A.size <= _DIRECT_LIMIT
    counts = _corr_counts(A, B, exact)
    reaches = tuple(s - 1 for s in A.shape)
    w = _weight_block(table, reaches)
    return math.fsum((w * counts).ravel())


def interaction(A: np.ndarray, B: np.ndarray, table: InteractionTable,
                exact: bool | None = None) -> float:
    """L_s between two disjoint cell bitmasks on the same grid."""
    A = np.asarray(A, dtype=bool)
    B = np.asarray(B, dtype=bool)
    if A.shape != B.shape:
        raise SpecMismatch(f"mask shapes differ: {A.shape} vs {B.shape}")
    if np.any(A & B):
        raise NotDisjoint("interaction requires disjoint masks")
    return _pair_sum(A, B, table, exact)


# ---------------------------------------------------------------------------
# 1D analytic ray masses.
# ---------------------------------------------------------------------------


def _ray_segments_1d(spec: GridSpec, exterior) -> list[tuple[float, float, bool]]:
    """Exterior rays as (lo, hi, in_E) segments; lo may be -inf, hi +inf."""
    x_lo = float(spec.box_lo[0])
    x_hi = float(spec.box_hi[0])
    if isinstance(exterior, EmptyExterior):
        return [(-math.inf, x_lo, False), (x_hi, math.inf, False)]
    if isinstance(exterior, FullExterior):
        return [(-math.inf, x_lo, True), (x_hi, math.inf, True)]
    if isinstance(exterior, HalfSpaceExterior):
        lv = exterior.level
        below = exterior.below
        segs = []
        if lv >= x_lo:
            segs.append((-math.inf, x_lo, below))
        else:
            segs.append((-math.inf, lv, below))
            segs.append((lv, x_lo, not below))
        if lv <= x_hi:
            segs.append((x_hi, math.inf, not below))
        else:
            segs.append((x_hi, lv, below))
            segs.append((lv, math.inf, not below))
        return segs
    raise SpecMismatch(f"unsupported 1D exterior model: {exterior!r}")


def _cell_segment_mass(a: float, b: float, lo: float, hi: float, s: float) -> float:
    """Closed-form interaction of cell (a,b) with segment (lo,hi) outside it."""
    if hi <= a:  # segment left of the cell: reflect
        if lo == -math.inf:
            return interval_ray_exact(-b, -a, -hi, s)
        return interval_pair_exact(lo, hi, a, b, s)
    if lo >= b:  # right of the cell
        if hi == math.inf:
            return interval_ray_exact(a, b, lo, s)
        return interval_pair_exact(a, b, lo, hi, s)
    raise ValueError("segment overlaps cell")


def _ray_masses_1d(spec: GridSpec, exterior, s: float):
    """Per-cell interaction mass with the E / complement-E exterior rays."""
    segs = _ray_segments_1d(spec, exterior)
    n = spec.extent[0]
    mass_e = np.zeros(n)
    mass_c = np.zeros(n)
    for i in range(n):
        a = spec.origin[0] + i * spec.h
        b = a + spec.h
        for lo, hi, in_e in segs:
            if hi <= lo:
                continue
            m = _cell_segment_mass(a, b, lo, hi, s)
            if in_e:
                mass_e[i] += m
            else:
                mass_c[i] += m
    return mass_e, mass_c


# ---------------------------------------------------------------------------
# Padded-universe engine.
# ---------------------------------------------------------------------------


class PairEngine:
    """Shared machinery for evaluating interactions on a padded universe.

    The policy decides how exterior mass is handled: TruncateAtRadius pads
    the box by ceil(R/h) cells and reports the neglected tail mass;
    AnalyticTail is exact in 1D (ray closed forms, zero pad) and falls back
    to a generous pad otherwise.
    """

    def __init__(self, spec: GridSpec, policy, table: InteractionTable):
        if table.spec.h != spec.h or table.spec.dim != spec.dim:
            raise SpecMismatch("table spec does not match grid spec")
        self.spec = spec
        self.policy = policy
        self.table = table
        self.analytic_rays = False
        if isinstance(policy, AnalyticTail):
            if spec.dim == 1:
                self.pad = 0
                self.analytic_rays = True
            else:
                radius = policy.fallback_radius
                if radius is None:
                    radius = 2.0 * max(spec.extent) * spec.h
                self.pad = int(math.ceil(radius / spec.h))
        elif isinstance(policy, TruncateAtRadius):
            self.pad = int(math.ceil(policy.radius / spec.h))
        else:
            raise SpecMismatch(f"unknown complement policy {policy!r}")
        self.padded_spec = spec.padded(self.pad) if self.pad else spec

    def occupancy(self, cellset: CellSet) -> np.ndarray:
        if cellset.spec != self.spec:
            raise SpecMismatch("cell set built on a different grid spec")
        if self.pad == 0:
            return cellset.inside.copy()
        return cellset.occupancy_on(self.padded_spec)

    def embed(self, box_mask: np.ndarray) -> np.ndarray:
        """Box-level bitmask placed in the padded universe (pad cells False)."""
        if self.pad == 0:
            return np.asarray(box_mask, dtype=bool).copy()
        out = np.zeros(self.padded_spec.extent, dtype=bool)
        out[(slice(self.pad, -self.pad),) * self.spec.dim] = box_mask
        return out

    def ls(self, A: np.ndarray, B: np.ndarray, exact: bool | None = None) -> float:
        return _pair_sum(A, B, self.table, exact)

    def ray_masses(self, exterior):
        """(mass to E rays, mass to complement rays) per box cell; 1D only."""
        if not self.analytic_rays:
            z = np.zeros(self.spec.extent)
            return z, z
        return _ray_masses_1d(self.spec, exterior, self.table.params.s)

    def truncation_bound(self, omega_box: np.ndarray) -> float:
        """Neglected-mass bound: per-cell volume times the point tail mass."""
        if self.analytic_rays:
            return 0.0
        spec = self.spec
        pts = spec.centers()[np.asarray(omega_box, dtype=bool).ravel()]
        if len(pts) == 0:
            return 0.0
        lo = self.padded_spec.box_lo
        hi = self.padded_spec.box_hi
        r = np.minimum((pts - lo).min(axis=1), (hi - pts).min(axis=1))
        r = np.maximum(r, spec.h * 0.5)
        vols = spec.h**spec.dim
        params = self.table.params
        return float(
            sum(vols * tail_mass(float(ri), params) for ri in np.sort(r))
        )


def _engine_for(window: DomainWindow, table: InteractionTable) -> PairEngine:
    return PairEngine(window.spec, window.complement_policy, table)


# ---------------------------------------------------------------------------
# Perimeter and identities.
# ---------------------------------------------------------------------------


def perimeter(E: CellSet, window: DomainWindow, table: InteractionTable,
              engine: PairEngine | None = None) -> PerimeterBreakdown:
    """s-perimeter of E in the window: local + nonlocal three-term sum."""
    if E.spec != window.spec:
        raise SpecMismatch("cell set and window specs differ")
    eng = engine if engine is not None else _engine_for(window, table)
    occ = eng.occupancy(E)
    om = eng.embed(window.omega)
    e_in = occ & om
    c_in = ~occ & om
    e_out = occ & ~om
    c_out = ~occ & ~om
    local = eng.ls(e_in, c_in)
    nl_parts = [eng.ls(e_in, c_out), eng.ls(e_out, c_in)]
    if eng.analytic_rays:
        mass_e, mass_c = eng.ray_masses(E.exterior)
        nl_parts.append(math.fsum(mass_c[e_in.ravel()]))
        nl_parts.append(math.fsum(mass_e[c_in.ravel()]))
    nonlocal_ = math.fsum(nl_parts)
    total = local + nonlocal_
    degenerate = not om.any()
    return PerimeterBreakdown(
        local=local,
        nonlocal_=nonlocal_,
        total=total,
        truncation_error_bound=eng.truncation_bound(window.omega),
        degenerate=degenerate,
    )


def decomposition_check(E: CellSet, inner: DomainWindow, outer: DomainWindow,
                        table: InteractionTable) -> float:
    """Residual of the window-decomposition identity; exactly zero up to
    floating-point accumulation.

    P(E, outer) = P(E, inner) + L(E n strip, cE \\ inner)
                + L(E \\ outer, cE n strip) with strip = outer \\ inner;
    the second cross term excludes the strip itself so that strip-strip
    pairs are not counted twice.
    """
    if E.spec != inner.spec or E.spec != outer.spec:
        raise SpecMismatch("specs differ")
    if np.any(inner.omega & ~outer.omega):
        raise NotNested("inner window must be contained in the outer window")
    eng = _engine_for(outer, table)
    inner_same = DomainWindow(inner.spec, inner.omega, outer.complement_policy)
    p_outer = perimeter(E, outer, table, engine=eng).total
    p_inner = perimeter(E, inner_same, table, engine=eng).total

    occ = eng.occupancy(E)
    om_in = eng.embed(inner.omega)
    strip = eng.embed(outer.omega & ~inner.omega)
    om_out = eng.embed(outer.omega)
    cross1 = eng.ls(occ & strip, ~occ & ~om_in)
    cross2 = eng.ls(occ & ~om_out, ~occ & strip)
    ray_terms = []
    if eng.analytic_rays:
        mass_e, mass_c = eng.ray_masses(E.exterior)
        ray_terms.append(math.fsum(mass_c[(occ & strip).ravel()]))
        ray_terms.append(math.fsum(mass_e[(~occ & strip).ravel()]))
    rhs = math.fsum([p_inner, cross1, cross2, *ray_terms])
    return abs(p_outer - rhs)


def relaxed_energy(u: ScalarField, window: DomainWindow, table: InteractionTable,
                   engine: PairEngine | None = None) -> float:
    """F(u, Omega): half the within-window seminorm plus the cross term.

    For an indicator field this reproduces perimeter(...).total exactly.
    """
    if u.spec != window.spec:
        raise SpecMismatch("field and window specs differ")
    eng = engine if engine is not None else _engine_for(window, table)
    vals = u.values_on(eng.padded_spec) if eng.pad else u.values.copy()
    om = eng.embed(window.omega)
    shape = vals.shape
    reaches = tuple(s - 1 for s in shape)
    k = eng.table.max_offset
    if max(reaches) > k:
        raise ValueError("table max_offset too small for universe")
    partials = []
    dim = vals.ndim
    for delta in np.ndindex(*(2 * r + 1 for r in reaches)):
        off = tuple(d - r for d, r in zip(delta, reaches))
        if all(o == 0 for o in off):
            continue
        w = eng.table.weight(off)
        if w == 0.0:
            continue
        src = tuple(
            slice(max(0, -o), min(shape[a], shape[a] - o)) for a, o in enumerate(off)
        )
        dst = tuple(
            slice(max(0, o), min(shape[a], shape[a] + o)) for a, o in enumerate(off)
        )
        vi = vals[src]
        vj = vals[dst]
        oi = om[src]
        oj = om[dst]
        if not oi.any():
            continue
        fac = np.where(oj, 0.5, 1.0)
        contrib = w * float(np.sum(np.abs(vi - vj) * fac * oi))
        partials.append(contrib)
    total = math.fsum(partials)
    if eng.analytic_rays:
        mass_e, mass_c = eng.ray_masses(_field_exterior_model(u))
        vflat = vals.ravel()
        oflat = om.ravel()
        total += math.fsum(
            np.abs(vflat - 1.0)[oflat] * mass_e[oflat]
        ) + math.fsum(np.abs(vflat)[oflat] * mass_c[oflat])
    return total


def _field_exterior_model(u: ScalarField):
    """Exterior of a field as an occupancy model (constants must be 0/1)."""
    ext = u.exterior
    if isinstance(ext, (int, float)):
        if float(ext) == 0.0:
            return EmptyExterior()
        if float(ext) == 1.0:
            return FullExterior()
        raise SpecMismatch(
            "analytic rays require a binary exterior constant or a set model"
        )
    return ext


def coarea_check(u: ScalarField, window: DomainWindow,
                 table: InteractionTable) -> tuple[float, float]:
    """Discrete coarea: F(u, Omega) vs the level-weighted perimeter sum."""
    eng = _engine_for(window, table)
    lhs = relaxed_energy(u, window, table, engine=eng)

    vals = u.values_on(eng.padded_spec) if eng.pad else u.values
    level_values = set(np.unique(vals).tolist())
    if eng.analytic_rays:
        ext = _field_exterior_model(u)
        if isinstance(ext, EmptyExterior):
            level_values.add(0.0)
        elif isinstance(ext, FullExterior):
            level_values.add(1.0)
        else:
            level_values.update((0.0, 1.0))
    levels = sorted(level_values)
    parts = []
    for t_low, t_high in zip(levels[:-1], levels[1:]):
        sup = _superlevel_set(u, t_low)
        p = perimeter(sup, window, table, engine=eng).total
        parts.append((t_high - t_low) * p)
    return lhs, math.fsum(parts)


def _superlevel_set(u: ScalarField, t: float) -> CellSet:
    """Superlevel set {u > t} with the matching exterior model."""
    ext = u.exterior
    if isinstance(ext, (int, float)):
        model = FullExterior() if float(ext) > t else EmptyExterior()
    else:
        # occupancy-model exterior: values are 0/1 out there
        model = ext if 0.0 <= t < 1.0 else (
            FullExterior() if t < 0.0 else EmptyExterior()
        )
    return CellSet(u.spec, u.values > t, model)


# ---------------------------------------------------------------------------
# 1D divergence probe (interval-union set with locally finite s-perimeter).
# ---------------------------------------------------------------------------


def divergence_probe_1d(beta, m: int, s: float, total_length: float | None = None) -> float:
    """Partial s-perimeter of the union of even-indexed gap intervals.

    ``beta`` maps k >= 1 to the k-th interval length (decreasing, positive,
    summable).  The set is the union of intervals I_{2j}, j <= m, inside
    Omega = (0, M); M defaults to the sum of the lengths actually used plus
    a margin so all intervals are strictly inside Omega.
    """
    if m < 1:
        raise InvalidSequence("m must be >= 1")
    n_terms = 2 * m + 2
    b = np.array([float(beta(k)) for k in range(1, n_terms + 1)])
    if np.any(b <= 0) or np.any(np.diff(b) > 0):
        raise InvalidSequence("beta must be positive and non-increasing")
    sigma = np.concatenate([[0.0], np.cumsum(b)])  # sigma[k] = sum_{i<=k}
    intervals_e = [(sigma[2 * j], sigma[2 * j + 1]) for j in range(1, m + 1)]
    last_end = sigma[2 * m + 1]
    M = total_length if total_length is not None else float(last_end + b[-1])
    if M <= last_end:
        raise InvalidSequence("total_length must exceed the last interval end")
    # complement pieces inside (0, M)
    comp = [(0.0, sigma[2])]
    comp += [(sigma[2 * j + 1], sigma[2 * j + 2]) for j in range(1, m)]
    comp.append((sigma[2 * m + 1], M))
    parts = []
    for a, bb in intervals_e:
        for c, d in comp:
            if d <= a:
                parts.append(interval_pair_exact(c, d, a, bb, s))
            elif c >= bb:
                parts.append(interval_pair_exact(a, bb, c, d, s))
            else:
                raise InvalidSequence("overlapping intervals; beta inconsistent")
        # exterior rays (complement of Omega is complement of E as well)
        parts.append(interval_ray_exact(-bb, -a, 0.0, s))  # (-inf, 0]
        parts.append(interval_ray_exact(a, bb, M, s))  # [M, inf)
    return math.fsum(parts)


def log_square_beta(k: int) -> float:
    """Canonical probe family: summable but with divergent (1-s)-sums."""
    return 1.0 / (k * math.log(k + 1.0) ** 2)


@lru_cache(maxsize=1)
def log_square_total(n_terms: int = 1_000_000) -> float:
    """Approximate total length of the canonical family, with integral tail."""
    k = np.arange(1, n_terms + 1, dtype=float)
    partial = float(np.sum(1.0 / (k * np.log(k + 1.0) ** 2)))
    return partial + 1.0 / math.log(n_terms + 1.0)
