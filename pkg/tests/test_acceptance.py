"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import itertools
import time

import mpmath
import numpy as np
import pytest

from conftest import random_generic, small_ap, small_mcp
from sorpwla.apps import ap_to_sor, gen_ap, gen_mcp, mcp_to_sor
from sorpwla.bounds import compute_C, saa_sizes, theorem1_bound
from sorpwla.core import A2Status, check_assumptions, eval_sor, is_feasible
from sorpwla.model_ir import build_bilinear, build_milp, build_misocp1, build_misocp2, defining_values
from sorpwla.oracle import approx1_optimum, brute_force_solve, fd_gradient
from sorpwla.pwla import LevelAssignment, discretize, eval_approx, x_from_levels
from sorpwla.solver import bb_solve, oa_solve, subgradient_cut


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, started):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - started:.1f}s) {detail}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def _z(level, K):
    return (np.arange(1, K + 1)[None, :] <= np.asarray(level)[:, None]).astype(float)


def _inverse_den(disc, b, t, y, z):
    return 1.0 / (b + disc.h_at_l[t] @ y + np.sum(disc.delta[:, None] * disc.slope_h[t] * z))


def test_criterion_1_oracle_equivalence(report):
    t0 = time.perf_counter()
    worst = 0.0
    for s in range(50):
        kw = dict(m=2 + s % 5, T=1 + s % 3)
        p = mcp_to_sor(small_mcp(s, **kw)) if s < 25 else ap_to_sor(small_ap(s, **kw))
        d = discretize(p, 1 + s % 6)
        got, ref = bb_solve(p, d).objective, brute_force_solve(p, d).objective
        worst = max(worst, abs(got - ref) / max(1e-300, abs(ref)))
    report(1, worst <= 1e-9, f"max relative deviation {worst:.2e} over 50 instances", t0)


def test_criterion_2_grid_error_bound(report):
    t0 = time.perf_counter()
    violations, checks, tightest = 0, 0, 0.0
    for s in range(20):
        m = 1 + s % 3
        if s % 3 == 0:
            p = mcp_to_sor(small_mcp(s, m=m))
        elif s % 3 == 1:
            p = ap_to_sor(small_ap(s, m=m))
        else:
            p = random_generic(s, m=m, T=2, with_rows=m > 1)
        f_ref = bb_solve(p, discretize(p, 256)).objective
        rep = compute_C(p)
        for K in (4, 8, 16):
            loss = f_ref - bb_solve(p, discretize(p, K)).objective
            bound = theorem1_bound(rep.C, K, rep.max_range)
            checks += 1
            violations += loss > bound
            tightest = max(tightest, loss / bound if bound > 0 else 0.0)
    report(2, violations == 0, f"{violations} violations in {checks} checks, largest loss/bound {tightest:.3f}", t0)


def test_criterion_3_oa_matches_bb(report):
    t0 = time.perf_counter()
    worst, most_iters, all_optimal = 0.0, 0, True
    for s in range(20):
        p = mcp_to_sor(small_mcp(100 + s, m=3 + s % 6, T=1 + s % 3))
        d = discretize(p, 1 + s % 10)
        oa = oa_solve(p, d, epsilon=1e-7, max_iterations=10_000)
        all_optimal &= oa.status == "optimal"
        most_iters = max(most_iters, oa.iterations)
        worst = max(worst, abs(oa.objective - bb_solve(p, d).objective))
    ok = worst <= 1e-6 and all_optimal and most_iters < 10_000
    report(3, ok, f"max |oa - bb| {worst:.2e}, most iterations {most_iters}", t0)


def test_criterion_4_residual_form_equivalence(report):
    t0 = time.perf_counter()
    mismatches = 0
    for s in range(10):
        kw = dict(m=2 + s % 3, T=1 + s % 2)
        p = ap_to_sor(small_ap(s, **kw)) if s % 2 else mcp_to_sor(small_mcp(s, **kw))
        assert check_assumptions(p).a2_sufficient == A2Status.HOLDS
        d = discretize(p, 1 + s % 4)
        mismatches += approx1_optimum(p, d) != brute_force_solve(p, d).objective
    report(4, mismatches == 0, f"{mismatches} of 10 optima differ", t0)


def _fig_fixture(s):
    rng = np.random.default_rng(1000 + s)
    M = int(rng.integers(3, 6))
    C = float(rng.uniform(4.0, 6.0))
    return ap_to_sor(gen_ap(5, 6, C, M, s))


def test_criterion_5_gap_decay(report):
    t0 = time.perf_counter()
    Ks = (5, 10, 25)
    gaps = {K: [] for K in Ks}
    for s in range(10):
        p = _fig_fixture(s)
        f_ref = bb_solve(p, discretize(p, 50)).objective
        for K in Ks:
            gaps[K].append(100.0 * (f_ref - bb_solve(p, discretize(p, K)).objective) / f_ref)
    mean = {K: float(np.mean(v)) for K, v in gaps.items()}
    ok = mean[10] <= 1.0 and mean[25] <= 0.2 and mean[5] >= mean[10] >= mean[25]
    detail = ", ".join(f"K={K} {mean[K]:.3f}%" for K in Ks)
    report(5, ok, f"mean gaps {detail}", t0)


def test_criterion_6_cut_coefficients(report):
    t0 = time.perf_counter()
    worst, invalid = 0.0, 0
    for s in range(10):
        p = mcp_to_sor(small_mcp(200 + s, m=2 + s % 4, T=1 + s % 3))
        d = discretize(p, 1 + s % 5)
        m, K = p.m, d.K
        rng = np.random.default_rng(s)
        for _ in range(100):
            a = LevelAssignment.from_states(rng.integers(0, K + 2, m))
            at = np.concatenate([np.asarray(a.y, float), _z(a.level, K).ravel()])
            for t in range(p.T):
                def fn(v, t=t):
                    return _inverse_den(d, p.b_vec[t], t, v[:m], v[m:].reshape(m, K))
                _, cy, cz = subgradient_cut(d, p.b_vec[t], t, a)
                num = fd_gradient(fn, at, 1e-6)
                worst = max(worst, float(np.max(np.abs(num - np.concatenate([cy, cz.ravel()])))))
    for s in range(5):
        p = mcp_to_sor(small_mcp(300 + s, m=2, T=2))
        d = discretize(p, 2)
        points = [LevelAssignment.from_states(st) for st in itertools.product(range(d.K + 2), repeat=2)]
        for at in points:
            for t in range(p.T):
                c, cy, cz = subgradient_cut(d, p.b_vec[t], t, at)
                for q in points:
                    y, z = np.asarray(q.y, float), _z(q.level, d.K)
                    invalid += c + cy @ y + np.sum(cz * z) > _inverse_den(d, p.b_vec[t], t, y, z) + 1e-14
    report(6, worst <= 1e-5 and invalid == 0, f"max coefficient deviation {worst:.2e}, {invalid} invalid cuts", t0)


def _closed_form_sizes(T, m, K):
    B = m + m * K
    return {
        ("milp", "mcp"): (B, T + m + T * m + T * m * K, T + 2 * m + m * K + 4 * T * m + 4 * T * m * K + 2),
        ("milp", "ap"): (B, T + 2 * m + m * K + T * m + T * m * K, T + 2 * m + m * K + 4 * T * m + 4 * T * m * K + 2),
        ("mis", "mcp"): (B, 2 * T + m + T * m + T * m * K, 3 * T + 2 * m + m * K + T * m + T * m * K + 2),
        ("mis", "ap"): (B, 2 * T + m + T * m + T * m * K, 3 * T + 2 * m + m * K + 5 * T * m + 5 * T * m * K + 2),
        ("bl", "mcp"): (B, 2 * T + m, 2 * T + 2 * m + m * K + 2),
        ("bl", "ap"): (B, 3 * T + m, 3 * T + 2 * m + m * K + 2),
    }


def test_criterion_7_formulation_sizes(report):
    t0 = time.perf_counter()
    mismatched = []
    for T, m, K in itertools.product((5, 10), (50, 100), (25,)):
        mcp = mcp_to_sor(gen_mcp(T, m, 0.4 * m, m // 3, 0))
        ap = ap_to_sor(gen_ap(T, m, 0.4 * m, m // 3, 0))
        dm, da = discretize(mcp, K), discretize(ap, K)
        models = {
            ("milp", "mcp"): build_milp(mcp, dm, "mcp"),
            ("milp", "ap"): build_milp(ap, da, "ap"),
            ("mis", "mcp"): build_misocp1(mcp, dm),
            ("mis", "ap"): build_misocp2(ap, da),
            ("bl", "mcp"): build_bilinear(mcp, dm),
            ("bl", "ap"): build_bilinear(ap, da),
        }
        want = _closed_form_sizes(T, m, K)
        for cell, model in models.items():
            c = model.counts()
            got = (c["binary"], c["continuous"], c["constraints"])
            if got != want[cell]:
                mismatched.append(f"{cell[0]}/{cell[1]} at {(T, m, K)}: built {got}, closed form {want[cell]}")
    detail = f"{len(mismatched)} of 24 cells differ" + ("; " + "; ".join(mismatched) if mismatched else "")
    report(7, not mismatched, detail, t0)


def test_criterion_8_substitution_soundness(report):
    t0 = time.perf_counter()
    cases = []
    for s in range(2):
        cases.append((mcp_to_sor(small_mcp(400 + s, m=2 + s, T=2)), 2 + s, ("milp", "misocp1", "misocp2", "bilinear")))
        cases.append((ap_to_sor(small_ap(400 + s, m=2 + s, T=1 + s)), 3 - s, ("milp", "misocp2", "bilinear")))
    cases.append((random_generic(7, m=3, T=2), 2, ("milp", "bilinear")))
    builders = {"milp": (build_milp, 1.0), "misocp1": (build_misocp1, -1.0),
                "misocp2": (build_misocp2, -1.0), "bilinear": (build_bilinear, 1.0)}
    failures, points = 0, 0
    for p, K, forms in cases:
        d = discretize(p, K)
        feasible = [a for a in (LevelAssignment.from_states(st) for st in itertools.product(range(K + 2), repeat=p.m))
                    if is_feasible(p, a.y, x_from_levels(d, a))]
        for form in forms:
            build, sign = builders[form]
            model = build(p, d)
            for a in feasible:
                vals = defining_values(model, p, d, a)
                want = sign * eval_approx(p, d, a)
                points += 1
                if model.violations(vals) or abs(model.objective_value(vals) - want) > 1e-9 * max(1.0, abs(want)):
                    failures += 1
    report(8, failures == 0 and points > 0, f"{failures} failures over {points} (form, point) pairs", t0)


def test_criterion_9_bounds_arithmetic(report):
    t0 = time.perf_counter()
    fixtures = [("0.1", "0.05", "1", "1", "1"), ("0.05", "0.01", "2.5", "0.3", "3"), ("0.2", "0.1", "0.7", "2", "0.5")]
    size_errors = 0
    for args in fixtures:
        with mpmath.workdps(50):
            eps, gam, psi, cs, r = (mpmath.mpf(v) for v in args)
            T = int(mpmath.ceil(25 * psi * mpmath.log(6 / gam) / (2 * eps**2)))
            K = int(mpmath.ceil(5 * T * cs * r / eps))
        s = saa_sizes(*(float(v) for v in args))
        size_errors += (s.T_required, s.K_required) != (T, K)
    headline = saa_sizes(0.1, 0.05, 1.0, 1.0, 1.0).T_required
    violations = 0
    for seed in range(3):
        p = [mcp_to_sor(small_mcp(seed)), ap_to_sor(small_ap(seed)), random_generic(seed)][seed]
        C = compute_C(p).C
        rng = np.random.default_rng(seed)
        eps = 0.05
        for _ in range(10_000):
            y = rng.integers(0, 2, p.m)
            x = p.lo + rng.random(p.m) * (p.hi - p.lo)
            xp = np.clip(x + rng.uniform(-eps, eps, p.m), p.lo, p.hi)
            violations += abs(eval_sor(p, y, x) - eval_sor(p, y, xp)) > eps * C + 1e-12
    ok = size_errors == 0 and headline == 5985 and violations == 0
    report(9, ok, f"{size_errors} sizing mismatches, T={headline} at the headline fixture, {violations} Lipschitz violations", t0)
