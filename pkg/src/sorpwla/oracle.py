"""Independent ground truth for tests: exhaustive enumeration and finite differences.

The enumerators deliberately avoid the solver's state tables. Objectives are
recomputed from the slopes of the discretization and feasibility is checked
on the implied points with the batched feasibility test of ``core``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import SorProblem, feasible_mask
from .errors import BudgetExceeded, NonFinite, NonPositiveDenominator
from .pwla import Discretization
from .solver import Solution


@dataclass(frozen=True)
class OracleBudget:
    """Enumeration limits.

    Attributes
    ----------
    max_enumeration : int
        Largest number of assignments the oracle will visit.
    tolerance : float
        Feasibility tolerance passed to the row checks.
    chunk : int
        Assignments evaluated per vectorized batch.
    """

    max_enumeration: int = 50_000_000
    tolerance: float = 1e-9
    chunk: int = 200_000


def _decode(codes: np.ndarray, m: int, base: int) -> np.ndarray:
    """Mixed-radix digits of ``codes``; item 0 is the most significant digit."""
    out = np.empty((codes.shape[0], m), dtype=np.int64)
    rem = codes.copy()
    for i in range(m - 1, -1, -1):
        out[:, i] = rem % base
        rem //= base
    return out


def _approx_values(problem: SorProblem, disc: Discretization, y: np.ndarray, level: np.ndarray, gate: bool) -> np.ndarray:
    """Approximate objective for batches of (y, level).

    With ``gate`` the level contributions are multiplied by ``y`` (product
    semantics of the residual form).
    """
    K = disc.K
    z = (np.arange(1, K + 1)[None, None, :] <= level[:, :, None]).astype(float)  # (n, m, K)
    if gate:
        z = z * y[:, :, None]
    out = np.full(y.shape[0], problem.constant)
    for t in range(problem.T):
        num = problem.a_vec[t] + y @ disc.g_at_l[t] + np.einsum("nik,ik->n", z, disc.slope_g[t] * disc.delta[:, None])
        den = problem.b_vec[t] + y @ disc.h_at_l[t] + np.einsum("nik,ik->n", z, disc.slope_h[t] * disc.delta[:, None])
        if np.any(den <= 0):
            raise NonPositiveDenominator(t, float(den[den <= 0][0]))
        out += num / den
    return out


def _grid_x(disc: Discretization, level: np.ndarray) -> np.ndarray:
    x = disc.lower[None, :] + disc.delta[None, :] * level
    return np.where(level == disc.K, disc.upper[None, :], x)


def brute_force_solve(problem: SorProblem, disc: Discretization, budget: OracleBudget | None = None) -> Solution:
    """Best assignment by exhaustive enumeration of the (K+2)^m item states.

    Ties keep the first assignment in enumeration order.
    """
    budget = budget or OracleBudget()
    m, base = problem.m, disc.K + 2
    total = base**m
    if total > budget.max_enumeration:
        raise BudgetExceeded(f"{total} assignments exceed the budget of {budget.max_enumeration}")
    best_val, best = -math.inf, None
    for start in range(0, total, budget.chunk):
        states = _decode(np.arange(start, min(total, start + budget.chunk), dtype=np.int64), m, base)
        y = (states > 0).astype(float)
        level = np.maximum(states - 1, 0)
        x = _grid_x(disc, level)
        ok = feasible_mask(problem, y, x, budget.tolerance)
        if not np.any(ok):
            continue
        vals = _approx_values(problem, disc, y[ok], level[ok], gate=False)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best = (y[ok][k], level[ok][k], x[ok][k])
    if best is None:
        return Solution(None, None, None, -math.inf, -math.inf, "infeasible", total)
    y, level, x = best
    return Solution(
        tuple(int(v) for v in y), tuple(int(v) for v in level), tuple(float(v) for v in x),
        best_val, best_val, "optimal", total,
    )


def approx1_optimum(
    problem: SorProblem,
    disc: Discretization,
    residual_fractions=(0.0, 0.5, 0.999),
    budget: OracleBudget | None = None,
) -> float:
    """Optimum under the residual form with product semantics.

    Every ``y``, every level (selected or not) and every residual on the given
    grid of fractions of ``Delta_i`` is enumerated. Residuals are only tried
    below the top level. The objective counts level contributions of selected
    items only; feasibility is checked at ``x = grid(level) + residual``.
    """
    budget = budget or OracleBudget()
    m, K = problem.m, disc.K
    fr = np.asarray(residual_fractions, dtype=float)
    per_item = [(yy, k, r) for yy in (0, 1) for k in range(K + 1) for r in (fr if k < K else fr[:1])]
    total = len(per_item) ** m
    if total > budget.max_enumeration:
        raise BudgetExceeded(f"{total} assignments exceed the budget")
    table = np.array(per_item)
    best = -math.inf
    combos = np.array(list(itertools.product(range(len(per_item)), repeat=m)))
    for start in range(0, combos.shape[0], budget.chunk):
        c = combos[start:start + budget.chunk]
        sel = table[c]  # (n, m, 3)
        y, level, frac = sel[..., 0], sel[..., 1].astype(int), sel[..., 2]
        x = _grid_x(disc, level) + frac * disc.delta[None, :]
        x = np.minimum(x, disc.upper[None, :])
        ok = feasible_mask(problem, y, x, budget.tolerance)
        if np.any(ok):
            best = max(best, float(np.max(_approx_values(problem, disc, y[ok], level[ok], gate=True))))
    return best


def fd_gradient(fn: Callable[[np.ndarray], float], at, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function."""
    at = np.asarray(at, dtype=float)
    grad = np.empty_like(at)
    for i in range(at.size):
        e = np.zeros_like(at)
        e.flat[i] = h
        hi, lo = fn(at + e), fn(at - e)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NonFinite(f"function is not finite near coordinate {i}")
        grad.flat[i] = (hi - lo) / (2.0 * h)
    return grad
