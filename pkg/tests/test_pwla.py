from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_generic
from sorpwla.core import Affine, ExpAffine, RatioTerm, SorProblem, check_assumptions, eval_sor
from sorpwla.errors import InvariantViolated, OutOfBounds
from sorpwla.pwla import (
    LevelAssignment,
    discretize,
    eval_approx,
    lemma1_gap,
    levels_from_x,
    snap,
    x_from_levels,
)


def _one(g, h=Affine(1, 0), lower=0.0, upper=1.0):
    return SorProblem(1, 1, (lower,), (upper,), [RatioTerm(0, 1, [g], [h])])


class TestSnap:
    def test_floor(self):
        assert snap(0.3, 0, 1, 4) == 0.25

    @pytest.mark.parametrize("K", [1, 3, 7, 100])
    def test_lower_identity(self, K):
        assert snap(-1.5, -1.5, 2.0, K) == -1.5

    def test_upper_endpoint(self):
        assert snap(1.0, 0, 1, 10) == 1.0

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            snap(1.5, 0, 1, 4)

    @given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(0, 1), st.integers(1, 200))
    def test_snap_properties(self, l, width, frac, K):
        u = l + width
        x = min(u, l + frac * width)
        s = snap(x, l, u, K)
        assert l <= s <= x
        assert x - s < width / K * (1 + 1e-9)


class TestDiscretize:
    def test_affine_slopes_constant(self):
        d = discretize(_one(Affine(0, 2), lower=-1.0, upper=3.0), 7)
        assert np.allclose(d.slope_g, 2.0, rtol=1e-12)

    def test_exp_k1(self):
        d = discretize(_one(ExpAffine(1, 1, 0)), 1)
        assert d.slope_g[0, 0, 0] == pytest.approx(math.e - 1, rel=1e-15)

    def test_exp_k2(self):
        d = discretize(_one(ExpAffine(1, 1, 0)), 2)
        se = math.sqrt(math.e)
        assert d.slope_g[0, 0] == pytest.approx([2 * (se - 1), 2 * (math.e - se)], rel=1e-14)
        assert d.slope_g[0, 0] == pytest.approx([1.297443, 2.139121], abs=1e-6)
        assert d.delta[0] * d.slope_g[0, 0].sum() == pytest.approx(math.e - 1, rel=1e-14)

    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("K", [1, 5, 13])
    def test_telescoping(self, seed, K):
        p = random_generic(seed)
        d = discretize(p, K)
        gl, hl = (np.array([[float(f(p.lower[i])) for i, f in enumerate(fs)] for fs in side]) for side in (
            [t.g for t in p.terms], [t.h for t in p.terms]))
        gu = np.array([[float(f(p.upper[i])) for i, f in enumerate(t.g)] for t in p.terms])
        hu = np.array([[float(f(p.upper[i])) for i, f in enumerate(t.h)] for t in p.terms])
        assert np.allclose(d.g_at_l, gl) and np.allclose(d.h_at_l, hl)
        assert np.allclose(d.g_at_l + d.delta * d.slope_g.sum(axis=2), gu, rtol=1e-9, atol=1e-12)
        assert np.allclose(d.h_at_l + d.delta * d.slope_h.sum(axis=2), hu, rtol=1e-9, atol=1e-12)

    def test_rejects_zero_k(self):
        with pytest.raises(InvariantViolated):
            discretize(_one(Affine(0, 1)), 0)


class TestEvalApprox:
    @pytest.mark.parametrize("seed", range(4))
    def test_top_and_bottom_levels(self, seed):
        p = random_generic(seed)
        d = discretize(p, 6)
        ones = (1,) * p.m
        assert eval_approx(p, d, LevelAssignment(ones, (6,) * p.m)) == pytest.approx(eval_sor(p, ones, p.hi), rel=1e-12)
        assert eval_approx(p, d, LevelAssignment(ones, (0,) * p.m)) == pytest.approx(eval_sor(p, ones, p.lo), rel=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_equals_exact_objective_at_snapped_point(self, seed):
        p = random_generic(seed)
        d = discretize(p, 9)
        rng = np.random.default_rng(seed)
        for _ in range(50):
            y = rng.integers(0, 2, p.m)
            x = p.lo + rng.random(p.m) * (p.hi - p.lo)
            lv = np.where(y == 1, levels_from_x(d, x), 0)
            snapped = [snap(x[i], p.lower[i], p.upper[i], 9) for i in range(p.m)]
            xs = np.where(y == 1, snapped, p.lo)
            assert eval_approx(p, d, LevelAssignment(y, lv)) == pytest.approx(eval_sor(p, y, xs), rel=1e-10, abs=1e-12)

    def test_unselected_level_rejected_without_residual(self):
        p = random_generic(0)
        d = discretize(p, 3)
        with pytest.raises(InvariantViolated):
            eval_approx(p, d, LevelAssignment((0, 1, 1), (2, 0, 0)))

    def test_residual_form_ignores_unselected_levels(self):
        p = random_generic(1)
        d = discretize(p, 3)
        a = eval_approx(p, d, LevelAssignment((0, 1, 1), (2, 1, 3), residual=(0.0, 0.0, 0.0)))
        b = eval_approx(p, d, LevelAssignment((0, 1, 1), (0, 1, 3)))
        assert a == pytest.approx(b, rel=1e-14)


class TestLevels:
    def test_level_of_midpoint(self):
        d = discretize(_one(Affine(0, 1)), 4)
        assert levels_from_x(d, [0.5]) == (2,)

    def test_top_level_is_upper_bound(self):
        d = discretize(_one(Affine(0, 1), lower=0.1, upper=0.7), 3)
        assert x_from_levels(d, LevelAssignment((1,), (3,)))[0] == 0.7

    @given(st.lists(st.integers(0, 17), min_size=3, max_size=3), st.integers(0, 5))
    def test_round_trip(self, levels, seed):
        p = random_generic(seed)
        d = discretize(p, 17)
        a = LevelAssignment((1, 1, 1), tuple(levels))
        assert levels_from_x(d, x_from_levels(d, a)) == tuple(levels)

    def test_out_of_bounds(self):
        d = discretize(_one(Affine(0, 1)), 4)
        with pytest.raises(OutOfBounds):
            levels_from_x(d, [1.2])


class TestSnapLoss:
    def test_arithmetic(self):
        assert lemma1_gap(2.0, 0.25) == 0.5
        assert lemma1_gap(0.0, 3.7) == 0.0

    def test_dense_sampling_exp(self):
        f = ExpAffine(1, 1, 0)
        xs = np.random.default_rng(0).uniform(0, 1, 10_000)
        sn = np.array([snap(x, 0.0, 1.0, 10) for x in xs])
        assert np.max(np.abs(f(xs) - f(sn))) <= lemma1_gap(math.e, 0.1)

    @pytest.mark.parametrize("seed", range(3))
    def test_all_registered_functions(self, seed):
        p = random_generic(seed)
        rep = check_assumptions(p)
        K = 8
        rng = np.random.default_rng(seed)
        for t, term in enumerate(p.terms):
            for i in range(p.m):
                xs = rng.uniform(p.lower[i], p.upper[i], 10_000)
                sn = np.array([snap(x, p.lower[i], p.upper[i], K) for x in xs])
                delta = (p.upper[i] - p.lower[i]) / K
                for fn, L in ((term.g[i], rep.lip_g[t, i]), (term.h[i], rep.lip_h[t, i])):
                    assert np.max(np.abs(fn(xs) - fn(sn))) <= lemma1_gap(L, delta) + 1e-12


def _grid_optimum(p, K):
    d = discretize(p, K)
    best = -math.inf
    for states in itertools.product(range(K + 2), repeat=p.m):
        best = max(best, eval_approx(p, d, LevelAssignment.from_states(states)))
    return best


@pytest.mark.parametrize("seed", range(3))
def test_refinement_is_monotone(seed):
    p = random_generic(seed, m=2, T=2, with_rows=False)
    for K in (1, 2, 4):
        assert _grid_optimum(p, 2 * K) >= _grid_optimum(p, K) - 1e-12
