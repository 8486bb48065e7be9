"""Uniform-grid geometry: cell sets, scalar fields, windows, signed distance.

Cell-center semantics throughout: a cell belongs to a set iff its center
does, and every integral becomes a sum over cells.  Mass outside the grid
box is described by an explicit exterior model, never silently truncated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDomain, InvalidShape, SpecMismatch

__all__ = [
    "GridSpec",
    "EmptyExterior",
    "FullExterior",
    "HalfSpaceExterior",
    "SubgraphExterior",
    "CellSet",
    "ScalarField",
    "TruncateAtRadius",
    "AnalyticTail",
    "DomainWindow",
    "full_window",
    "window_from_shape",
    "signed_distance",
    "sublevel_window",
    "tubular_neighborhood",
    "read_grid_file",
    "write_grid_file",
    "cellset_from_shape",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform Cartesian grid: dimension, origin, cell counts and cell size."""

    dim: int
    origin: tuple[float, ...]
    extent: tuple[int, ...]
    h: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if len(self.origin) != self.dim or len(self.extent) != self.dim:
            raise ValueError("origin/extent length must match dim")
        if any(n < 1 for n in self.extent):
            raise ValueError("all extents must be >= 1")
        if not self.h > 0:
            raise ValueError("h must be positive")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(int(n) for n in self.extent))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.extent))

    @property
    def box_lo(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def box_hi(self) -> np.ndarray:
        return np.asarray(self.origin) + self.h * np.asarray(self.extent)

    def centers(self) -> np.ndarray:
        """Cell centers as an (n_cells, dim) array in C order."""
        axes = [
            self.origin[a] + (np.arange(self.extent[a]) + 0.5) * self.h
            for a in range(self.dim)
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def padded(self, pad_cells: int) -> "GridSpec":
        """Spec enlarged by ``pad_cells`` cells on every side."""
        return GridSpec(
            self.dim,
            tuple(o - pad_cells * self.h for o in self.origin),
            tuple(n + 2 * pad_cells for n in self.extent),
            self.h,
        )


# ---------------------------------------------------------------------------
# Exterior models: occupancy of E outside the grid box.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmptyExterior:
    """E contains nothing outside the box."""

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(len(points), dtype=bool)

    def complement(self):
        return FullExterior()


@dataclass(frozen=True)
class FullExterior:
    """E contains everything outside the box."""

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.ones(len(points), dtype=bool)

    def complement(self):
        return EmptyExterior()


@dataclass(frozen=True)
class HalfSpaceExterior:
    """E = {x_axis < level} outside the box (or its complement if flipped)."""

    axis: int
    level: float
    below: bool = True  # True: E is the side x_axis < level

    def contains(self, points: np.ndarray) -> np.ndarray:
        side = points[:, self.axis] < self.level
        return side if self.below else ~side

    def complement(self):
        return HalfSpaceExterior(self.axis, self.level, not self.below)


@dataclass(frozen=True)
class SubgraphExterior:
    """E = {(x, t): t < v(x)} outside the box.

    ``v`` is tabulated per cell on the base grid (the first dim-1 axes of
    the ambient spec) and equals ``farfield`` outside the base box.
    """

    base_spec: GridSpec
    heights: tuple  # flattened, C order over base_spec
    farfield: float
    above: bool = False  # True means the complementary region

    def _v(self, x: np.ndarray) -> np.ndarray:
        hv = np.asarray(self.heights, dtype=float).reshape(self.base_spec.extent)
        idx = np.floor((x - self.base_spec.box_lo) / self.base_spec.h).astype(int)
        inside = np.all(idx >= 0, axis=1) & np.all(
            idx < np.asarray(self.base_spec.extent), axis=1
        )
        out = np.full(len(x), float(self.farfield))
        if inside.any():
            out[inside] = hv[tuple(idx[inside].T)]
        return out

    def contains(self, points: np.ndarray) -> np.ndarray:
        t = points[:, -1]
        v = self._v(points[:, :-1])
        below = t < v
        return ~below if self.above else below

    def complement(self):
        return SubgraphExterior(self.base_spec, self.heights, self.farfield, not self.above)


# ---------------------------------------------------------------------------
# Core data types.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellSet:
    """Binary occupancy over grid cells plus an exterior model."""

    spec: GridSpec
    inside: np.ndarray  # bool, shape spec.extent
    exterior: object = field(default_factory=EmptyExterior)

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.inside, dtype=bool))
        if arr.shape != tuple(self.spec.extent):
            raise SpecMismatch(
                f"inside shape {arr.shape} does not match extent {self.spec.extent}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "inside", arr)

    def complement(self) -> "CellSet":
        return CellSet(self.spec, ~self.inside, self.exterior.complement())

    def occupancy_on(self, spec: GridSpec) -> np.ndarray:
        """Occupancy sampled on another (usually padded) grid of the same h."""
        if spec is self.spec or spec == self.spec:
            return self.inside.copy()
        pts = spec.centers()
        out = self.exterior.contains(pts)
        lo = self.spec.box_lo
        idx = np.floor((pts - lo) / self.spec.h + 1e-9).astype(int)
        inbox = np.all(idx >= 0, axis=1) & np.all(
            idx < np.asarray(self.spec.extent), axis=1
        )
        if inbox.any():
            out[inbox] = self.inside[tuple(idx[inbox].T)]
        return out.reshape(spec.extent)


@dataclass(frozen=True)
class ScalarField:
    """Per-cell real values, optionally with an exterior continuation.

    ``exterior`` is either a constant float or an exterior-model object
    (occupancy interpreted as the {0, 1} extension of the field).
    """

    spec: GridSpec
    values: np.ndarray
    exterior: object = 0.0

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if arr.shape != tuple(self.spec.extent):
            raise SpecMismatch(
                f"values shape {arr.shape} does not match extent {self.spec.extent}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def values_on(self, spec: GridSpec) -> np.ndarray:
        """Field values sampled on a padded grid of the same h."""
        if spec == self.spec:
            return self.values.copy()
        pts = spec.centers()
        if isinstance(self.exterior, (int, float)):
            out = np.full(len(pts), float(self.exterior))
        else:
            out = self.exterior.contains(pts).astype(float)
        idx = np.floor((pts - self.spec.box_lo) / self.spec.h + 1e-9).astype(int)
        inbox = np.all(idx >= 0, axis=1) & np.all(
            idx < np.asarray(self.spec.extent), axis=1
        )
        if inbox.any():
            out[inbox] = self.values[tuple(idx[inbox].T)]
        return out.reshape(spec.extent)


@dataclass(frozen=True)
class TruncateAtRadius:
    """Resolve exterior mass on a padded grid out to the given radius."""

    radius: float


@dataclass(frozen=True)
class AnalyticTail:
    """Resolve exterior mass analytically where closed forms exist.

    Exact for dim 1 (ray integrals).  In higher dimensions this falls back
    to a generous padded truncation with the remainder reported in
    ``truncation_error_bound``.
    """

    fallback_radius: float | None = None


@dataclass(frozen=True)
class DomainWindow:
    """Subset of cells marking the open set in which energy is measured."""

    spec: GridSpec
    omega: np.ndarray  # bool, shape spec.extent
    complement_policy: object = field(default_factory=lambda: AnalyticTail())

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.omega, dtype=bool))
        if arr.shape != tuple(self.spec.extent):
            raise SpecMismatch(
                f"omega shape {arr.shape} does not match extent {self.spec.extent}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "omega", arr)

    @property
    def n_omega(self) -> int:
        return int(self.omega.sum())


def full_window(spec: GridSpec, policy=None) -> DomainWindow:
    """Window covering the whole box."""
    pol = policy if policy is not None else AnalyticTail()
    return DomainWindow(spec, np.ones(spec.extent, dtype=bool), pol)


# ---------------------------------------------------------------------------
# Signed distance and derived windows.
# ---------------------------------------------------------------------------


def _boundary_faces(spec: GridSpec, inside: np.ndarray):
    """Axis-aligned faces separating in-cells from out-cells.

    Cells outside the box count as out, so omega touching the box edge
    produces boundary faces on the box surface.  Returns per-face (lo, hi)
    corner arrays; the face is degenerate (lo == hi) along its normal axis.
    """
    lo_list, hi_list = [], []
    ext = np.asarray(spec.extent)
    origin = spec.box_lo
    h = spec.h
    padded = np.zeros(ext + 2, dtype=bool)
    padded[(slice(1, -1),) * spec.dim] = inside
    for a in range(spec.dim):
        shifted = np.roll(padded, -1, axis=a)
        diff = padded != shifted
        # face between cell k and k+1 along axis a exists where diff is True
        idx = np.argwhere(diff)
        # drop faces entirely outside the closed box
        keep = np.ones(len(idx), dtype=bool)
        for b in range(spec.dim):
            if b == a:
                keep &= (idx[:, b] >= 0) & (idx[:, b] <= ext[b])
            else:
                keep &= (idx[:, b] >= 1) & (idx[:, b] <= ext[b])
        idx = idx[keep]
        if len(idx) == 0:
            continue
        lo = np.empty((len(idx), spec.dim))
        hi = np.empty((len(idx), spec.dim))
        for b in range(spec.dim):
            if b == a:
                lo[:, b] = origin[b] + idx[:, b] * h
                hi[:, b] = lo[:, b]
            else:
                lo[:, b] = origin[b] + (idx[:, b] - 1) * h
                hi[:, b] = lo[:, b] + h
        lo_list.append(lo)
        hi_list.append(hi)
    if not lo_list:
        return None
    return np.concatenate(lo_list), np.concatenate(hi_list)


def signed_distance(window: DomainWindow) -> ScalarField:
    """Signed distance from the in/out interface, negative inside omega.

    Distances are measured from cell centers to the polygonal boundary
    made of the faces between in- and out-cells (box faces included where
    omega touches the box edge).
    """
    omega = window.omega
    if not omega.any():
        raise DegenerateDomain("omega must be nonempty")
    faces = _boundary_faces(window.spec, omega)
    lo, hi = faces
    pts = window.spec.centers()  # (N, dim)
    # distance from each center to each face rectangle, in manageable chunks
    n = len(pts)
    dmin = np.full(n, np.inf)
    chunk = max(1, int(4e6 // max(len(lo), 1)))
    for start in range(0, n, chunk):
        p = pts[start : start + chunk][:, None, :]  # (c,1,dim)
        d = np.maximum(lo[None, :, :] - p, 0.0)
        d = np.maximum(d, p - hi[None, :, :])
        dist = np.sqrt((d * d).sum(axis=2)).min(axis=1)
        dmin[start : start + chunk] = dist
    sign = np.where(omega.ravel(), -1.0, 1.0)
    return ScalarField(window.spec, (sign * dmin).reshape(window.spec.extent))


def sublevel_window(window: DomainWindow, r: float) -> DomainWindow:
    """Sublevel set of the signed distance: cells with d < r."""
    sd = signed_distance(window)
    return DomainWindow(window.spec, sd.values < r, window.complement_policy)


def tubular_neighborhood(window: DomainWindow, rho: float) -> np.ndarray:
    """Cells within distance rho of the boundary, as a bitmask."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    sd = signed_distance(window)
    return np.abs(sd.values) < rho


# ---------------------------------------------------------------------------
# Grid file format.
# ---------------------------------------------------------------------------


def write_grid_file(path, cellset: CellSet) -> None:
    """Write the ASCII grid format: header line, then row-major 0/1 chars."""
    spec = cellset.spec
    parts = ["fracgrid", str(spec.dim)]
    parts += [str(n) for n in spec.extent]
    parts.append(repr(spec.h))
    parts += [repr(o) for o in spec.origin]
    bits = "".join("1" if v else "0" for v in cellset.inside.ravel())
    lines = [" ".join(parts)]
    row = spec.extent[-1]
    for start in range(0, len(bits), row):
        lines.append(bits[start : start + row])
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_grid_file(path) -> CellSet:
    """Parse the ASCII grid format back into a CellSet (Empty exterior)."""
    with open(path) as f:
        header = f.readline().split()
        body = f.read()
    if not header or header[0] != "fracgrid":
        raise InvalidShape("not a fracgrid file")
    dim = int(header[1])
    extent = tuple(int(v) for v in header[2 : 2 + dim])
    h = float(header[2 + dim])
    origin = tuple(float(v) for v in header[3 + dim : 3 + 2 * dim])
    bits = [c for c in body if c in "01"]
    spec = GridSpec(dim, origin, extent, h)
    if len(bits) != spec.n_cells:
        raise InvalidShape(
            f"expected {spec.n_cells} occupancy chars, found {len(bits)}"
        )
    inside = np.array([c == "1" for c in bits], dtype=bool).reshape(extent)
    return CellSet(spec, inside)


# ---------------------------------------------------------------------------
# Shape DSL.
# ---------------------------------------------------------------------------


def _shape_occupancy(doc, pts: np.ndarray):
    """Occupancy at the given points plus the matching exterior model."""
    if not isinstance(doc, dict):
        raise InvalidShape(f"shape document must be an object, got {type(doc)}")
    if "union" in doc:
        occ = np.zeros(len(pts), dtype=bool)
        exts = []
        for sub in doc["union"]:
            o, e = _shape_occupancy(sub, pts)
            occ |= o
            exts.append(e)
        ext = EmptyExterior()
        for e in exts:
            if isinstance(e, FullExterior):
                ext = FullExterior()
                break
            if not isinstance(e, EmptyExterior):
                if isinstance(ext, EmptyExterior):
                    ext = e
                else:
                    raise InvalidShape("union of two unbounded shapes is unsupported")
        return occ, ext
    if "complement" in doc:
        o, e = _shape_occupancy(doc["complement"], pts)
        return ~o, e.complement()
    kind = doc.get("shape")
    if kind == "ball":
        c = np.asarray(doc["center"], dtype=float)
        r = float(doc["radius"])
        occ = ((pts - c) ** 2).sum(axis=1) < r * r
        return occ, EmptyExterior()
    if kind == "halfspace":
        axis = int(doc.get("axis", 0))
        level = float(doc.get("level", 0.0))
        occ = pts[:, axis] < level
        return occ, HalfSpaceExterior(axis, level)
    if kind == "empty":
        return np.zeros(len(pts), dtype=bool), EmptyExterior()
    if kind == "full":
        return np.ones(len(pts), dtype=bool), FullExterior()
    if kind == "subgraph":
        base = doc["heights"]
        far = float(doc.get("farfield", 0.0))
        base_spec = GridSpec(
            int(base["dim"]),
            tuple(base["origin"]),
            tuple(base["extent"]),
            float(base["h"]),
        )
        ext = SubgraphExterior(base_spec, tuple(base["values"]), far)
        occ = ext.contains(pts)
        return occ, ext
    raise InvalidShape(f"unknown shape kind: {doc!r}")


def cellset_from_shape(spec: GridSpec, doc) -> CellSet:
    """Evaluate a shape DSL document (dict or JSON string) on a grid."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    occ, ext = _shape_occupancy(doc, spec.centers())
    return CellSet(spec, occ.reshape(spec.extent), ext)


def window_from_shape(spec: GridSpec, doc, policy=None) -> DomainWindow:
    """Evaluate a shape DSL document as a window bitmask."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    occ, _ = _shape_occupancy(doc, spec.centers())
    pol = policy if policy is not None else AnalyticTail()
    return DomainWindow(spec, occ.reshape(spec.extent), pol)
