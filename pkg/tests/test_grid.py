"""Grid geometry: specs, sets, signed distance, shapes, file format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracperim.errors import DegenerateDomain, InvalidShape, SpecMismatch
from fracperim.grid import (
    AnalyticTail,
    CellSet,
    DomainWindow,
    GridSpec,
    cellset_from_shape,
    full_window,
    read_grid_file,
    signed_distance,
    sublevel_window,
    tubular_neighborhood,
    window_from_shape,
    write_grid_file,
)


def _spec2(n=8, h=0.25):
    return GridSpec(2, (0.0, 0.0), (n, n), h)


def _window(spec, mask):
    return DomainWindow(spec, mask, AnalyticTail())


class TestGridSpec:
    def test_centers_shape_and_values(self):
        spec = GridSpec(2, (1.0, -1.0), (3, 2), 0.5)
        pts = spec.centers()
        assert pts.shape == (6, 2)
        assert np.allclose(pts[0], [1.25, -0.75])
        assert np.allclose(pts[-1], [2.25, -0.25])

    def test_padded_preserves_alignment(self):
        spec = _spec2(4, 0.5)
        pad = spec.padded(3)
        assert pad.extent == (10, 10)
        assert np.allclose(pad.box_lo, spec.box_lo - 1.5)
        # original centers are a subset of the padded centers
        orig = spec.centers()
        padded = pad.centers().reshape(10, 10, 2)[3:-3, 3:-3].reshape(-1, 2)
        assert np.allclose(orig, padded)

    def test_box_corners(self):
        spec = GridSpec(1, (2.0,), (4,), 0.25)
        assert np.allclose(spec.box_lo, [2.0])
        assert np.allclose(spec.box_hi, [3.0])


class TestCellSet:
    def test_shape_mismatch_raises(self):
        spec = _spec2(4)
        with pytest.raises(SpecMismatch):
            CellSet(spec, np.ones((3, 4), dtype=bool))

    def test_complement_involution(self, rng):
        spec = _spec2(6)
        E = CellSet(spec, rng.random(spec.extent) < 0.5)
        F = E.complement().complement()
        assert np.array_equal(E.inside, F.inside)

    def test_occupancy_on_padded_uses_exterior(self):
        spec = GridSpec(1, (0.0,), (4,), 1.0)
        doc = {"shape": "halfspace", "axis": 0, "level": 2.0}
        E = cellset_from_shape(spec, doc)
        occ = E.occupancy_on(spec.padded(2))
        # pad cells left of the box are inside the half space, right are not
        assert occ.tolist() == [True, True, True, True, False, False, False, False]


class TestSignedDistance:
    def test_sign_convention(self):
        spec = _spec2(8, 0.25)
        mask = np.zeros(spec.extent, dtype=bool)
        mask[2:6, 2:6] = True
        sd = signed_distance(_window(spec, mask)).values
        assert np.all(sd[mask] < 0)
        assert np.all(sd[~mask] > 0)

    def test_exact_values_single_row(self):
        spec = GridSpec(1, (0.0,), (6,), 1.0)
        mask = np.array([False, False, True, True, False, False])
        sd = signed_distance(_window(spec, mask)).values
        assert np.allclose(sd, [1.5, 0.5, -0.5, -0.5, 0.5, 1.5])

    def test_antisymmetry_under_complement(self, rng):
        spec = _spec2(7, 0.5)
        mask = rng.random(spec.extent) < 0.5
        if not mask.any() or mask.all():
            mask[0, 0] = True
            mask[1, 1] = False
        sd = signed_distance(_window(spec, mask)).values
        sd_c = signed_distance(_window(spec, ~mask)).values
        # interface faces between in/out cells are shared, so wherever the
        # nearest face is interior the two fields are exact negatives
        interior = np.minimum(np.abs(sd), np.abs(sd_c))
        box_edge = np.min(
            np.stack(
                [
                    (spec.centers() - spec.box_lo).min(axis=1),
                    (spec.box_hi - spec.centers()).min(axis=1),
                ]
            ),
            axis=0,
        ).reshape(spec.extent)
        realized_inside = interior < box_edge
        assert np.allclose(sd[realized_inside], -sd_c[realized_inside])

    def test_empty_window_raises(self):
        spec = _spec2(4)
        with pytest.raises(DegenerateDomain):
            signed_distance(_window(spec, np.zeros(spec.extent, dtype=bool)))

    def test_full_window_measures_to_box_surface(self):
        spec = GridSpec(2, (0.0, 0.0), (4, 4), 0.25)
        sd = signed_distance(full_window(spec)).values
        assert np.isclose(sd[0, 0], -0.125)
        assert np.isclose(sd[1, 1], -0.375)

    @given(r1=st.floats(-0.9, 0.9), r2=st.floats(-0.9, 0.9))
    @settings(max_examples=25, deadline=None)
    def test_sublevel_monotone(self, r1, r2):
        spec = GridSpec(2, (0.0, 0.0), (6, 6), 0.25)
        mask = np.zeros(spec.extent, dtype=bool)
        mask[1:5, 2:6] = True
        win = _window(spec, mask)
        lo, hi = sorted((r1, r2))
        a = sublevel_window(win, lo).omega
        b = sublevel_window(win, hi).omega
        assert not np.any(a & ~b)

    def test_tubular_equals_sublevel_difference(self):
        spec = _spec2(8, 0.25)
        mask = np.zeros(spec.extent, dtype=bool)
        mask[2:7, 1:6] = True
        win = _window(spec, mask)
        rho = 0.3
        tube = tubular_neighborhood(win, rho)
        expect = sublevel_window(win, rho).omega & ~sublevel_window(win, -rho).omega
        assert np.array_equal(tube, expect)


class TestShapes:
    def test_ball_area(self):
        spec = GridSpec(2, (-1.0, -1.0), (64, 64), 2.0 / 64)
        E = cellset_from_shape(spec, {"shape": "ball", "center": [0, 0], "radius": 0.7})
        area = E.inside.sum() * spec.h**2
        assert abs(area - np.pi * 0.49) < 0.02

    def test_union_and_complement(self):
        spec = GridSpec(1, (0.0,), (10,), 0.1)
        doc = {
            "union": [
                {"shape": "ball", "center": [0.2], "radius": 0.1},
                {"shape": "ball", "center": [0.8], "radius": 0.1},
            ]
        }
        E = cellset_from_shape(spec, doc)
        F = cellset_from_shape(spec, {"complement": doc})
        assert np.array_equal(E.inside, ~F.inside)

    def test_window_from_shape_policy(self):
        spec = _spec2(6)
        win = window_from_shape(spec, {"shape": "full"})
        assert win.omega.all()
        assert isinstance(win.complement_policy, AnalyticTail)

    def test_unknown_shape_raises(self):
        spec = _spec2(4)
        with pytest.raises(InvalidShape):
            cellset_from_shape(spec, {"shape": "torus"})


class TestGridFile:
    def test_round_trip(self, tmp_path, rng):
        spec = GridSpec(2, (0.5, -0.25), (5, 7), 0.125)
        E = CellSet(spec, rng.random(spec.extent) < 0.4)
        path = tmp_path / "set.fracgrid"
        write_grid_file(path, E)
        back = read_grid_file(path)
        assert back.spec == spec
        assert np.array_equal(back.inside, E.inside)

    def test_bad_header_raises(self, tmp_path):
        path = tmp_path / "bad.fracgrid"
        path.write_text("nonsense 2 2 2 0.5 0 0\n0101\n")
        with pytest.raises(InvalidShape):
            read_grid_file(path)

    def test_truncated_body_raises(self, tmp_path):
        path = tmp_path / "short.fracgrid"
        path.write_text("fracgrid 2 2 2 0.5 0.0 0.0\n01\n")
        with pytest.raises(InvalidShape):
            read_grid_file(path)
