"""Perimeter functionals and their exact structural identities."""

import numpy as np
import pytest

from fracperim.errors import (
    InvalidSequence,
    NotDisjoint,
    NotNested,
    SpecMismatch,
)
from fracperim.functional import (
    coarea_check,
    decomposition_check,
    divergence_probe_1d,
    interaction,
    log_square_beta,
    log_square_total,
    perimeter,
    relaxed_energy,
)
from fracperim.grid import (
    AnalyticTail,
    CellSet,
    DomainWindow,
    GridSpec,
    ScalarField,
    TruncateAtRadius,
    full_window,
)
from tests.conftest import table_for


def _random_instance(rng, dim=2, n=8, s=0.5, policy=None):
    if policy is None:
        policy = AnalyticTail()
    spec = (
        GridSpec(1, (0.0,), (n,), 1.0 / n)
        if dim == 1
        else GridSpec(2, (0.0, 0.0), (n, n), 1.0 / n)
    )
    E = CellSet(spec, rng.random(spec.extent) < 0.5)
    table = table_for(spec, s, policy)
    win = DomainWindow(spec, np.ones(spec.extent, dtype=bool), policy)
    return E, win, table


class TestPerimeter:
    def test_breakdown_sums(self, rng):
        E, win, table = _random_instance(rng)
        bd = perimeter(E, win, table)
        assert bd.total == pytest.approx(bd.local + bd.nonlocal_, rel=1e-14)
        assert bd.local >= 0 and bd.nonlocal_ >= 0
        assert not bd.degenerate

    def test_complement_invariance(self, rng):
        for dim in (1, 2):
            E, win, table = _random_instance(rng, dim=dim)
            a = perimeter(E, win, table).total
            b = perimeter(E.complement(), win, table).total
            assert a == pytest.approx(b, rel=1e-12)

    def test_window_monotonicity(self, rng):
        E, win, table = _random_instance(rng)
        sub = np.zeros(win.spec.extent, dtype=bool)
        sub[2:6, 2:6] = True
        small = DomainWindow(win.spec, sub, win.complement_policy)
        assert perimeter(E, small, table).total <= perimeter(E, win, table).total

    def test_empty_window_degenerate(self, rng):
        E, win, table = _random_instance(rng)
        empty = DomainWindow(win.spec, np.zeros(win.spec.extent, dtype=bool),
                             win.complement_policy)
        bd = perimeter(E, empty, table)
        assert bd.degenerate
        assert bd.total == 0.0

    def test_halfline_1d_analytic_value(self):
        # E = (-inf, 0.5) on a unit box with analytic rays: the perimeter
        # in (0,1) is the kernel pair integral across the cut, which has
        # the closed form 2 / (s (1-s)) (2^(1-s) - 1) ... assembled from
        # interval terms; compare against a direct fine-grid computation
        from fracperim.kernel import interval_pair_exact, interval_ray_exact

        s = 0.5
        spec = GridSpec(1, (0.0,), (8,), 0.125)
        centers = spec.centers().ravel()
        from fracperim.grid import HalfSpaceExterior

        E = CellSet(spec, centers < 0.5, HalfSpaceExterior(0, 0.5))
        win = full_window(spec, AnalyticTail())
        table = table_for(spec, s, AnalyticTail())
        got = perimeter(E, win, table).total
        expect = (
            # inside the window across the cut
            interval_pair_exact(0.0, 0.5, 0.5, 1.0, s)
            # occupied half of the window against the vacant right ray
            + interval_ray_exact(0.0, 0.5, 1.0, s)
            # occupied left ray against the vacant half of the window,
            # mirrored through the origin
            + interval_ray_exact(-1.0, -0.5, 0.0, s)
        )
        assert got == pytest.approx(expect, rel=1e-10)
        # closed form collapses to exactly 4 at s = 1/2
        assert got == pytest.approx(4.0, rel=1e-12)

    def test_spec_mismatch_raises(self, rng):
        E, win, table = _random_instance(rng)
        other = GridSpec(2, (0.0, 0.0), (4, 4), 0.25)
        bad = DomainWindow(other, np.ones((4, 4), dtype=bool), AnalyticTail())
        with pytest.raises(SpecMismatch):
            perimeter(E, bad, table)


class TestInteraction:
    def test_disjointness_enforced(self, rng):
        E, win, table = _random_instance(rng)
        with pytest.raises(NotDisjoint):
            interaction(E.inside, E.inside, table)

    def test_symmetry(self, rng):
        E, win, table = _random_instance(rng)
        A = E.inside
        B = ~E.inside
        assert interaction(A, B, table) == pytest.approx(
            interaction(B, A, table), rel=1e-12
        )

    def test_direct_and_fft_paths_agree(self, rng):
        E, win, table = _random_instance(rng, n=10)
        A, B = E.inside, ~E.inside
        d = interaction(A, B, table, exact=True)
        f = interaction(A, B, table, exact=False)
        assert d == pytest.approx(f, rel=1e-11)


class TestDecomposition:
    @pytest.mark.parametrize("dim", [1, 2])
    @pytest.mark.parametrize("s", [0.25, 0.75])
    def test_residual_vanishes(self, rng, dim, s):
        E, win, table = _random_instance(rng, dim=dim, s=s)
        spec = win.spec
        sub = np.zeros(spec.extent, dtype=bool)
        sub[(slice(2, 6),) * dim] = True
        inner = DomainWindow(spec, sub, win.complement_policy)
        res = decomposition_check(E, inner, win, table)
        ref = perimeter(E, win, table).total
        assert res <= 1e-10 * (1.0 + ref)

    def test_equal_windows_trivial(self, rng):
        E, win, table = _random_instance(rng)
        assert decomposition_check(E, win, win, table) <= 1e-12

    def test_not_nested_raises(self, rng):
        E, win, table = _random_instance(rng)
        spec = win.spec
        sub = np.ones(spec.extent, dtype=bool)
        small = DomainWindow(spec, np.zeros(spec.extent, dtype=bool),
                             win.complement_policy)
        small2 = DomainWindow(spec, sub, win.complement_policy)
        inner_bigger = DomainWindow(
            spec, np.ones(spec.extent, dtype=bool), win.complement_policy
        )
        shrunk = np.ones(spec.extent, dtype=bool)
        shrunk[0, 0] = False
        outer = DomainWindow(spec, shrunk, win.complement_policy)
        with pytest.raises(NotNested):
            decomposition_check(E, inner_bigger, outer, table)

    def test_difference_identity(self, rng):
        # sets agreeing outside an inner window have equal perimeter gaps
        # on the inner and outer windows
        E, win, table = _random_instance(rng)
        spec = win.spec
        sub = np.zeros(spec.extent, dtype=bool)
        sub[3:6, 2:5] = True
        inner = DomainWindow(spec, sub, win.complement_policy)
        other = E.inside.copy()
        flip = sub & (rng.random(spec.extent) < 0.5)
        other[flip] = ~other[flip]
        F = CellSet(spec, other, E.exterior)
        lhs = perimeter(E, win, table).total - perimeter(F, win, table).total
        rhs = perimeter(E, inner, table).total - perimeter(F, inner, table).total
        assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(lhs)))


class TestCoarea:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_identity_random_field(self, rng, dim):
        _, win, table = _random_instance(rng, dim=dim)
        u = ScalarField(win.spec, rng.random(win.spec.extent), 0.0)
        lhs, rhs = coarea_check(u, win, table)
        assert lhs == pytest.approx(rhs, rel=1e-11)

    def test_indicator_reduces_to_perimeter(self, rng):
        E, win, table = _random_instance(rng)
        u = ScalarField(win.spec, E.inside.astype(float), 0.0)
        f = relaxed_energy(u, win, table)
        p = perimeter(E, win, table).total
        assert f == pytest.approx(p, rel=1e-11)


class TestDivergenceProbe:
    def test_partial_values_increase(self):
        v8 = divergence_probe_1d(log_square_beta, 8, 0.5)
        v16 = divergence_probe_1d(log_square_beta, 16, 0.5)
        assert 0 < v8 < v16

    def test_bad_sequences_rejected(self):
        with pytest.raises(InvalidSequence):
            divergence_probe_1d(log_square_beta, 0, 0.5)
        with pytest.raises(InvalidSequence):
            divergence_probe_1d(lambda k: -1.0, 4, 0.5)
        with pytest.raises(InvalidSequence):
            divergence_probe_1d(log_square_beta, 4, 0.5, total_length=0.1)

    def test_total_length_converges(self):
        total = log_square_total()
        partial = sum(log_square_beta(k) for k in range(1, 2000))
        assert total > partial
        assert total < partial + 0.2
