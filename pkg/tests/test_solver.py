from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_generic, small_ap, small_mcp
from sorpwla.apps import ap_to_sor, mcp_to_sor
from sorpwla.core import (
    Affine,
    ConstraintSet,
    ExpAffine,
    LinearRow,
    RatioTerm,
    SorProblem,
    Zero,
    cardinality_row,
    is_feasible,
)
from sorpwla.errors import InvariantViolated, NotMcpForm
from sorpwla.oracle import brute_force_solve, fd_gradient
from sorpwla.pwla import LevelAssignment, discretize, eval_approx, x_from_levels
from sorpwla.solver import BnbConfig, bb_solve, is_mcp_form, node_bound, oa_solve, subgradient_cut
from test_oracle import FROZEN, frozen_problem


def _inverse_den(disc, b, t, y, z):
    return 1.0 / (b + disc.h_at_l[t] @ y + np.sum(disc.delta[:, None] * disc.slope_h[t] * z))


def _z(level, K):
    return (np.arange(1, K + 1)[None, :] <= np.asarray(level)[:, None]).astype(float)


class TestBranchAndBound:
    @pytest.mark.parametrize("family,seed,K,value,y,level", FROZEN)
    def test_frozen_oracle_optima(self, family, seed, K, value, y, level):
        p = frozen_problem(family, seed)
        sol = bb_solve(p, discretize(p, K))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(value, rel=1e-9)

    def test_monotone_single_item(self):
        p = SorProblem(1, 1, (0.0,), (2.0,), [RatioTerm(0, 1, [Affine(0.5, 1.0)], [Zero()])])
        sol = bb_solve(p, discretize(p, 1))
        assert sol.y == (1,) and sol.level == (1,)
        assert sol.objective == pytest.approx(2.5)

    def test_tie_break_lowest_index(self):
        g = ExpAffine(1.0, 0.3, 0.0)
        rows = ConstraintSet((cardinality_row(2, 1),))
        p = SorProblem(2, 1, (0, 0), (1, 1), [RatioTerm(0, 1, [g, g], [Zero(), Zero()])], rows)
        sol = bb_solve(p, discretize(p, 3))
        assert sol.y == (1, 0) and sol.level == (3, 0)

    def test_infeasible_status(self):
        rows = ConstraintSet((cardinality_row(2, 0), LinearRow((0.0, 0.0), (-1.0, 0.0), -1.0)))
        p = SorProblem(2, 1, (0, 0), (1, 1), [RatioTerm(0, 1, [Zero(), Zero()], [Zero(), Zero()])], rows)
        sol = bb_solve(p, discretize(p, 2))
        assert sol.status == "infeasible" and sol.y is None

    def test_incumbent_not_all_zero_when_zero_infeasible(self):
        # y_0 must be selected
        rows = ConstraintSet((LinearRow((0.0, 0.0), (-1.0, 0.0), -1.0),))
        p = SorProblem(2, 1, (0, 0), (1, 1), [RatioTerm(0, 1, [Affine(0, -1), Affine(0, 1)], [Zero(), Zero()])], rows)
        sol = bb_solve(p, discretize(p, 2))
        assert sol.y == (1, 1) and sol.level == (0, 2)
        assert sol.objective == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_oracle(self, seed):
        p = ap_to_sor(small_ap(seed)) if seed % 2 else mcp_to_sor(small_mcp(seed))
        d = discretize(p, 2 + seed % 4)
        ref = brute_force_solve(p, d)
        for order in ("canonical_index", "max_range"):
            sol = bb_solve(p, d, BnbConfig(branch_order=order))
            assert sol.objective == pytest.approx(ref.objective, rel=1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_returned_point_is_consistent(self, seed):
        p = random_generic(seed)
        d = discretize(p, 5)
        sol = bb_solve(p, d)
        assert is_feasible(p, sol.y, sol.x)
        assert sol.objective == pytest.approx(eval_approx(p, d, sol.assignment), rel=1e-12)
        assert np.allclose(sol.x, x_from_levels(d, sol.assignment))
        assert sol.objective <= sol.upper_bound + 1e-9 * max(1.0, abs(sol.objective))

    def test_deterministic(self):
        p = ap_to_sor(small_ap(7, m=6, T=3))
        d = discretize(p, 6)
        a, b = bb_solve(p, d), bb_solve(p, d)
        assert a == b and a.nodes_explored == b.nodes_explored

    @pytest.mark.parametrize("limit", [1, 3, 10])
    def test_anytime_soundness(self, limit):
        p = ap_to_sor(small_ap(8, m=6, T=2))
        d = discretize(p, 5)
        sol = bb_solve(p, d, BnbConfig(node_limit=limit))
        full = bb_solve(p, d)
        assert sol.status in ("node_limit", "optimal")
        assert is_feasible(p, sol.y, sol.x)
        assert sol.objective == pytest.approx(eval_approx(p, d, sol.assignment), rel=1e-12)
        assert sol.upper_bound >= full.objective - 1e-12
        assert sol.objective <= full.objective + 1e-12

    def test_time_limit_zero(self):
        p = mcp_to_sor(small_mcp(2))
        sol = bb_solve(p, discretize(p, 5), BnbConfig(time_limit_seconds=0.0))
        assert sol.status == "time_limit"

    def test_config_validation(self):
        with pytest.raises(InvariantViolated):
            BnbConfig(rel_gap_tol=-1.0)
        with pytest.raises(InvariantViolated):
            BnbConfig(branch_order="random")


@pytest.mark.parametrize("seed", range(6))
def test_node_bound_admissible(seed):
    p = ap_to_sor(small_ap(seed, m=4, T=2)) if seed % 2 else random_generic(seed, m=3, T=2)
    d = discretize(p, 3)
    S = d.K + 2
    for p_len in range(0, p.m):
        for prefix in itertools.product(range(S), repeat=p_len):
            best = -math.inf
            for rest in itertools.product(range(S), repeat=p.m - p_len):
                a = LevelAssignment.from_states(prefix + rest)
                if is_feasible(p, a.y, x_from_levels(d, a)):
                    best = max(best, eval_approx(p, d, a))
            if p_len == 0:
                assert node_bound(p, d, ()) >= best - 1e-12
            elif math.isfinite(best):
                assert node_bound(p, d, prefix) >= best - 1e-12


class TestSubgradientCut:
    @pytest.mark.parametrize("seed", range(4))
    def test_exact_at_expansion_point(self, seed):
        p = mcp_to_sor(small_mcp(seed, m=3))
        d = discretize(p, 4)
        rng = np.random.default_rng(seed)
        for _ in range(20):
            a = LevelAssignment.from_states(rng.integers(0, d.K + 2, p.m))
            for t in range(p.T):
                c, cy, cz = subgradient_cut(d, p.b_vec[t], t, a)
                val = c + cy @ np.asarray(a.y) + np.sum(cz * _z(a.level, d.K))
                assert val == pytest.approx(_inverse_den(d, p.b_vec[t], t, np.asarray(a.y), _z(a.level, d.K)), rel=1e-13)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_differences(self, seed):
        p = mcp_to_sor(small_mcp(seed, m=3))
        d = discretize(p, 3)
        m, K = p.m, d.K
        rng = np.random.default_rng(seed)
        for _ in range(20):
            a = LevelAssignment.from_states(rng.integers(0, K + 2, m))
            at = np.concatenate([np.asarray(a.y, float), _z(a.level, K).ravel()])
            for t in range(p.T):
                def fn(v, t=t):
                    return _inverse_den(d, p.b_vec[t], t, v[:m], v[m:].reshape(m, K))
                _, cy, cz = subgradient_cut(d, p.b_vec[t], t, a)
                num = fd_gradient(fn, at, 1e-6)
                assert np.max(np.abs(num - np.concatenate([cy, cz.ravel()]))) <= 1e-5

    @pytest.mark.parametrize("seed", range(4))
    def test_cuts_underestimate_everywhere(self, seed):
        p = mcp_to_sor(small_mcp(seed, m=2, T=2))
        d = discretize(p, 2)
        points = [LevelAssignment.from_states(s) for s in itertools.product(range(d.K + 2), repeat=2)]
        for at in points:
            for t in range(p.T):
                c, cy, cz = subgradient_cut(d, p.b_vec[t], t, at)
                for q in points:
                    y, z = np.asarray(q.y, float), _z(q.level, d.K)
                    assert c + cy @ y + np.sum(cz * z) <= _inverse_den(d, p.b_vec[t], t, y, z) + 1e-14


class TestOuterApproximation:
    def test_rejects_nonzero_numerators(self):
        p = ap_to_sor(small_ap(0))
        assert not is_mcp_form(p)
        with pytest.raises(NotMcpForm):
            oa_solve(p, discretize(p, 3))

    def test_single_location(self):
        p = mcp_to_sor(small_mcp(11, m=1, T=1, M=1))
        p = SorProblem(1, 1, p.lower, p.upper, p.terms, ConstraintSet(), p.constant)
        d = discretize(p, 1)
        sol = oa_solve(p, d)
        assert sol.status == "optimal" and sol.iterations <= 3
        assert sol.objective == pytest.approx(brute_force_solve(p, d).objective, abs=1e-12)

    def test_huge_epsilon_stops_after_one_iteration(self):
        p = mcp_to_sor(small_mcp(5))
        sol = oa_solve(p, discretize(p, 3), epsilon=1e6)
        assert sol.iterations == 1 and sol.cuts_added == 0 and sol.status == "optimal"

    @pytest.mark.parametrize("seed", range(8))
    def test_agrees_with_branch_and_bound(self, seed):
        p = mcp_to_sor(small_mcp(seed))
        d = discretize(p, 2 + seed % 5)
        oa, bb = oa_solve(p, d), bb_solve(p, d)
        assert oa.status == "optimal"
        assert abs(oa.objective - bb.objective) <= 1e-6
        assert is_feasible(p, oa.y, oa.x)

    def test_iteration_cap_reports_gap_limit(self):
        p = mcp_to_sor(small_mcp(6, m=5, T=3))
        sol = oa_solve(p, discretize(p, 4), max_iterations=1)
        assert sol.status == "gap_limit"
        assert sol.upper_bound >= bb_solve(p, discretize(p, 4)).objective - 1e-12


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_bb_never_beats_oracle(seed, K):
    p = ap_to_sor(small_ap(seed, m=3, T=2))
    d = discretize(p, K)
    assert bb_solve(p, d).objective == pytest.approx(brute_force_solve(p, d).objective, rel=1e-9, abs=1e-12)
