"""Exact solvers for the discretized problem.

Both solvers enumerate per-item states depth first (state 0 = not selected,
state s >= 1 = selected at level s - 1). Feasibility is propagated row by row
using the cheapest completion of the free items, and every child is scored
with an admissible bound before it is pushed.

* :func:`bb_solve` bounds each ratio separately by maximizing it over the free
  items with a Dinkelbach iteration. The iteration is exact for a single ratio
  once it converges, and a residual correction keeps the value admissible if
  it stops early.
* :func:`oa_solve` handles the facility-location form, whose ratio sum is a
  constant minus weighted reciprocals of denominators. The convex reciprocals
  are replaced by tangent cuts, and the resulting master is solved with the
  same search engine.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import FEAS_TOL, SorProblem, check_assumptions
from .errors import (
    BoundDenominatorNonPositive,
    InvariantViolated,
    NonPositiveDenominator,
    NotMcpForm,
)
from .pwla import Discretization, LevelAssignment, x_from_levels

STATUSES = ("optimal", "gap_limit", "node_limit", "time_limit", "infeasible")
BRANCH_ORDERS = ("canonical_index", "max_range")


@dataclass(frozen=True)
class BnbConfig:
    """Search controls.

    Attributes
    ----------
    rel_gap_tol : float
        A node is pruned when its bound does not exceed the incumbent by more
        than ``rel_gap_tol * max(1, |incumbent|)``.
    node_limit : int or None
        Maximum number of expanded nodes.
    time_limit_seconds : float or None
        Wall-clock budget checked before every expansion.
    branch_order : {"canonical_index", "max_range"}
        Static item order. ``max_range`` sorts by decreasing spread of the
        attainable numerator contributions; ties keep the lower index first.
    """

    rel_gap_tol: float = 1e-9
    node_limit: int | None = None
    time_limit_seconds: float | None = None
    branch_order: str = "canonical_index"

    def __post_init__(self):
        if self.rel_gap_tol < 0:
            raise InvariantViolated("rel_gap_tol must be nonnegative")
        if self.branch_order not in BRANCH_ORDERS:
            raise InvariantViolated(f"unknown branch order {self.branch_order!r}")


@dataclass(frozen=True)
class Solution:
    """Result of a solve.

    ``y``, ``level`` and ``x`` are ``None`` when no feasible assignment was
    found. ``upper_bound`` is a certified bound on the optimum of the
    discretized problem.
    """

    y: tuple | None
    level: tuple | None
    x: tuple | None
    objective: float
    upper_bound: float
    status: str
    nodes_explored: int = 0
    cuts_added: int = 0
    iterations: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def assignment(self) -> LevelAssignment | None:
        if self.y is None:
            return None
        return LevelAssignment(self.y, self.level)


# ---------------------------------------------------------------------------
# Shared tables
# ---------------------------------------------------------------------------


class _RowTables:
    """Per-state contributions of every constraint row."""

    def __init__(self, problem: SorProblem, disc: Discretization):
        sx = disc.state_x  # (m, S)
        sy = disc.state_y  # (S,)
        lin = problem.A[:, :, None] * sx[None] + problem.B[:, :, None] * sy[None, None, :]
        bud = problem.alpha[:, :, None] * (sx * sy[None, :])[None]
        self.tab = np.concatenate([lin, bud], axis=0)  # (R, m, S)
        self.rhs = np.concatenate([problem.D, problem.budget_rhs]) + FEAS_TOL
        self.min = self.tab.min(axis=2) if self.tab.size else np.zeros((0, problem.m))
        card = []
        for r in range(self.tab.shape[0]):
            row = self.tab[r]
            if np.all(row[:, 0] == 0.0) and np.all(row[:, 1:] == 1.0):
                card.append(r)
        self.card = np.array(card, dtype=int)


class _SorBound:
    """Objective plugin for the ratio sum."""

    def __init__(self, problem: SorProblem, disc: Discretization):
        self.T = problem.T
        self.a = problem.a_vec
        self.b = problem.b_vec
        self.constant = problem.constant
        self.num = disc.state_num  # (T, m, S)
        self.den = disc.state_den
        self.feat_tab = np.concatenate([self.num, self.den], axis=0)  # (2T, m, S)
        self.feat0 = np.zeros(2 * self.T)
        report = check_assumptions(problem)
        self.denom_lower = report.denom_lower

    def leaf_values(self, acc: np.ndarray) -> np.ndarray:
        T = self.T
        den = self.b + acc[:, T:]
        if np.any(den <= 0):
            t = int(np.argwhere(den <= 0)[0][1])
            raise NonPositiveDenominator(t)
        return self.constant + np.sum((self.a + acc[:, :T]) / den, axis=1)

    def bounds(self, acc, free, allowed, mrem):
        T = self.T
        A = self.a + acc[:, :T]  # (C, T)
        B = self.b + acc[:, T:]
        n = self.num[:, free, 1:]  # (T, F, S-1)
        d = self.den[:, free, 1:]
        sel_ok = allowed[:, None, :, 1:]  # (C, 1, F, S-1)
        skip_ok = allowed[:, None, :, 0]  # (C, 1, F)
        dmin_sel = np.where(sel_ok, d[None], np.inf).min(axis=-1)  # (C, T, F)
        item_lo = np.where(skip_ok, np.minimum(dmin_sel, 0.0), dmin_sel)
        Dmin = B + item_lo.sum(axis=-1)
        bad = ~(Dmin > 0)
        if np.any(bad):
            fallback = np.broadcast_to(self.denom_lower, Dmin.shape)
            if np.any(fallback[bad] <= 0):
                raise BoundDenominatorNonPositive("node denominator bound is not positive")
            Dmin = np.where(bad, fallback, Dmin)
        capped = np.isfinite(mrem)
        limit = np.where(capped, mrem, n.shape[1]).astype(int)[:, None, None]  # (C,1,1)
        lam = np.where(B > 0, A / np.where(B > 0, B, 1.0), 0.0)
        nb = np.broadcast_to(n, (A.shape[0],) + n.shape)
        db = np.broadcast_to(d, nb.shape)
        ub = np.full_like(lam, np.inf)
        for _ in range(100):
            score = np.where(sel_ok, nb - lam[..., None, None] * db, -np.inf)
            arg = score.argmax(axis=-1)
            best = np.take_along_axis(score, arg[..., None], axis=-1)[..., 0]  # (C, T, F)
            take = np.where(skip_ok, best > 0, True)
            order = np.argsort(-np.where(take, best, -np.inf), axis=-1, kind="stable")
            rank = np.argsort(order, axis=-1, kind="stable")
            take &= rank < limit
            gain = np.where(take, best, 0.0).sum(axis=-1)
            phi = A - lam * B + gain
            ub = np.minimum(ub, lam + np.maximum(phi, 0.0) / Dmin)
            N = A + np.where(take, np.take_along_axis(nb, arg[..., None], -1)[..., 0], 0.0).sum(-1)
            Dn = B + np.where(take, np.take_along_axis(db, arg[..., None], -1)[..., 0], 0.0).sum(-1)
            new = N / Dn
            if np.all(new <= lam + 1e-14 * (1.0 + np.abs(lam))):
                break
            lam = np.maximum(lam, new)
        return self.constant + ub.sum(axis=1)


class _CutMaster:
    """Objective plugin for the outer-approximation master.

    The master maximizes ``constant + sum_t w_t theta_t`` with ``w_t < 0`` and
    ``theta_t = max(floor_t, max over cuts of t)``.
    """

    def __init__(self, constant, weights, floors, cut_t, cut_const, cut_tab):
        self.constant = constant
        self.w = np.asarray(weights)
        self.floors = np.asarray(floors)
        self.cut_t = np.asarray(cut_t, dtype=int)
        self.cut_const = np.asarray(cut_const, dtype=float)
        self.feat_tab = cut_tab  # (J, m, S)
        self.feat0 = self.cut_const.copy()
        self.T = self.w.shape[0]

    def _theta(self, cutvals):
        theta = np.broadcast_to(self.floors, (cutvals.shape[0], self.T)).copy()
        for t in range(self.T):
            sel = self.cut_t == t
            if np.any(sel):
                theta[:, t] = np.maximum(theta[:, t], cutvals[:, sel].max(axis=1))
        return theta

    def leaf_values(self, acc):
        return self.constant + self._theta(acc) @ self.w

    def leaf_theta(self, acc):
        return self._theta(acc)

    def bounds(self, acc, free, allowed, mrem):
        if acc.shape[1] == 0:
            return np.full(acc.shape[0], self.constant + self.floors @ self.w)
        c = self.feat_tab[:, free, 1:]  # (J, F, S-1)
        sel_ok = allowed[:, None, :, 1:]
        skip_ok = allowed[:, None, :, 0]
        best = np.where(sel_ok, c[None], np.inf).min(axis=-1)  # (C, J, F)
        gain = -best
        take = np.where(skip_ok, gain > 0, True)
        capped = np.isfinite(mrem)
        limit = np.where(capped, mrem, c.shape[1]).astype(int)[:, None, None]
        if c.shape[1] > 0:
            order = np.argsort(-np.where(take, gain, -np.inf), axis=-1, kind="stable")
            rank = np.argsort(order, axis=-1, kind="stable")
            take &= rank < limit
        low = acc + np.where(take, best, 0.0).sum(axis=-1)
        return self.constant + self._theta(low) @ self.w


# ---------------------------------------------------------------------------
# Search engine
# ---------------------------------------------------------------------------


def _item_order(disc: Discretization, mode: str) -> np.ndarray:
    m = disc.m
    if mode == "canonical_index":
        return np.arange(m)
    spread = (disc.state_num.max(axis=2) - disc.state_num.min(axis=2)).sum(axis=0)
    return np.array(sorted(range(m), key=lambda i: (-spread[i], i)))


class _Search:
    def __init__(self, rows: _RowTables, plugin, order: np.ndarray, config: BnbConfig, n_states: int):
        self.rows = rows
        self.plugin = plugin
        self.order = order
        self.config = config
        self.m = order.shape[0]
        self.S = n_states

    def _tol(self, inc: float) -> float:
        return self.config.rel_gap_tol * max(1.0, abs(inc)) if math.isfinite(inc) else 0.0

    def expand(self, depth, acc_feat, acc_row):
        """Children of a node: (states, acc_feat, acc_row, bounds, is_leaf)."""
        rows, plugin = self.rows, self.plugin
        j = self.order[depth]
        free = self.order[depth + 1:]
        states = np.arange(self.S)
        row_c = acc_row[None, :] + rows.tab[:, j, :].T  # (S, R)
        rest = rows.min[:, free].sum(axis=1)  # (R,)
        ok = np.all(row_c + rest[None, :] <= rows.rhs[None, :], axis=1)
        states = states[ok]
        row_c = row_c[ok]
        feat_c = acc_feat[None, :] + plugin.feat_tab[:, j, states].T
        if free.size == 0:
            return states, feat_c, row_c, plugin.leaf_values(feat_c), True
        base = row_c + rest[None, :]  # (C, R)
        others = base[:, None, :] - rows.min[:, free].T[None, :, :]  # (C, F, R)
        cand = others[:, :, None, :] + rows.tab[:, free, :].transpose(1, 2, 0)[None]  # (C, F, S, R)
        allowed = np.all(cand <= rows.rhs, axis=-1)
        alive = np.all(allowed.any(axis=2), axis=1)
        states, feat_c, row_c, allowed = states[alive], feat_c[alive], row_c[alive], allowed[alive]
        if rows.card.size:
            slack = rows.rhs[rows.card][None, :] - row_c[:, rows.card]
            mrem = np.floor(slack.min(axis=1) + 1e-12)
        else:
            mrem = np.full(states.shape[0], np.inf)
        mrem = np.where(np.all(allowed[:, :, 0], axis=1), mrem, np.inf)
        if states.size == 0:
            return states, feat_c, row_c, np.zeros(0), False
        return states, feat_c, row_c, plugin.bounds(feat_c, free, allowed, mrem), False

    def run(self):
        rows, plugin, cfg = self.rows, self.plugin, self.config
        m = self.m
        start = time.perf_counter()
        inc_val = -math.inf
        inc_states = None
        inc_feat = None
        zero_rows = rows.tab[:, :, 0].sum(axis=1) if rows.tab.size else np.zeros(0)
        if np.all(zero_rows <= rows.rhs):
            feat = plugin.feat0 + plugin.feat_tab[:, :, 0].sum(axis=1)
            inc_val = float(plugin.leaf_values(feat[None])[0])
            inc_states = np.zeros(m, dtype=int)
            inc_feat = feat
        pruned_max = -math.inf
        nodes = 0
        status = "optimal"
        # stack entries: (bound, depth, states prefix, acc_feat, acc_row)
        stack = [(math.inf, 0, np.zeros(0, dtype=int), plugin.feat0.astype(float), np.zeros(rows.tab.shape[0]))]
        while stack:
            bound, depth, prefix, acc_feat, acc_row = stack[-1]
            if bound <= inc_val + self._tol(inc_val):
                stack.pop()
                pruned_max = max(pruned_max, bound)
                continue
            if cfg.node_limit is not None and nodes >= cfg.node_limit:
                status = "node_limit"
                break
            if cfg.time_limit_seconds is not None and time.perf_counter() - start >= cfg.time_limit_seconds:
                status = "time_limit"
                break
            stack.pop()
            nodes += 1
            states, feat_c, row_c, vals, leaf = self.expand(depth, acc_feat, acc_row)
            if states.size == 0:
                continue
            if leaf:
                for c in _child_order(vals, states):
                    if _improves(vals[c], inc_val):
                        inc_val = float(vals[c])
                        inc_states = np.concatenate([prefix, [states[c]]])
                        inc_feat = feat_c[c]
                continue
            thr = inc_val + self._tol(inc_val)
            for c in reversed(_child_order(vals, states)):
                if vals[c] <= thr:
                    pruned_max = max(pruned_max, float(vals[c]))
                    continue
                stack.append((float(vals[c]), depth + 1, np.concatenate([prefix, [states[c]]]), feat_c[c], row_c[c]))
        open_max = max((e[0] for e in stack), default=-math.inf)
        if status == "optimal" and inc_states is None:
            status = "infeasible"
        upper = max(inc_val, pruned_max, open_max)
        full = None
        if inc_states is not None:
            full = np.zeros(m, dtype=int)
            full[self.order[: inc_states.shape[0]]] = inc_states
        return full, inc_val, upper, status, nodes, inc_feat


def _improves(value: float, incumbent: float) -> bool:
    """Strict improvement beyond round-off, so that the first of tied optima is kept."""
    if not math.isfinite(incumbent):
        return True
    return value > incumbent + 1e-13 * max(1.0, abs(incumbent))


def _child_order(vals: np.ndarray, states: np.ndarray) -> list[int]:
    """Best bound first; near-ties prefer selected states, then lower state."""
    q = np.round(vals, 11)
    keys = sorted(range(vals.shape[0]), key=lambda c: (-q[c], states[c] == 0, states[c]))
    return keys


def _solution_from_states(problem, disc, states, value, upper, status, nodes, **kw) -> Solution:
    if states is None:
        return Solution(None, None, None, -math.inf, upper, status, nodes, **kw)
    assign = LevelAssignment.from_states(states)
    x = x_from_levels(disc, assign)
    return Solution(assign.y, assign.level, tuple(float(v) for v in x), float(value), float(upper), status, nodes, **kw)


def bb_solve(problem: SorProblem, disc: Discretization, config: BnbConfig | None = None) -> Solution:
    """Globally optimal assignment of the discretized problem.

    Parameters
    ----------
    problem : SorProblem
    disc : Discretization
        Grid for ``problem``.
    config : BnbConfig, optional

    Returns
    -------
    Solution
        ``status`` is ``"infeasible"`` when no assignment satisfies the rows.
    """
    config = config or BnbConfig()
    rows = _RowTables(problem, disc)
    plugin = _SorBound(problem, disc)
    search = _Search(rows, plugin, _item_order(disc, config.branch_order), config, disc.K + 2)
    states, val, upper, status, nodes, _ = search.run()
    return _solution_from_states(problem, disc, states, val, upper, status, nodes)


def node_bound(problem: SorProblem, disc: Discretization, prefix) -> float:
    """Bound used by :func:`bb_solve` for a node whose first items have fixed states.

    ``prefix`` lists the states of items ``0..p-1`` in canonical order, with
    ``p < m``. Returns ``-inf`` when the node has no feasible completion.
    """
    prefix = np.asarray(prefix, dtype=int)
    rows = _RowTables(problem, disc)
    plugin = _SorBound(problem, disc)
    search = _Search(rows, plugin, np.arange(problem.m), BnbConfig(), disc.K + 2)
    p = prefix.shape[0]
    if p == 0:
        parent_feat = plugin.feat0.astype(float)
        parent_row = np.zeros(rows.tab.shape[0])
        states, _, _, vals, _ = search.expand(0, parent_feat, parent_row)
        return float(vals.max()) if vals.size else -math.inf
    idx = np.arange(p - 1)
    feat = plugin.feat0 + plugin.feat_tab[:, idx, prefix[:-1]].sum(axis=1)
    row = rows.tab[:, idx, prefix[:-1]].sum(axis=1) if rows.tab.size else np.zeros(0)
    states, _, _, vals, _ = search.expand(p - 1, feat, row)
    hit = np.nonzero(states == prefix[-1])[0]
    return float(vals[hit[0]]) if hit.size else -math.inf


# ---------------------------------------------------------------------------
# Outer approximation for the facility-location form
# ---------------------------------------------------------------------------


def is_mcp_form(problem: SorProblem) -> bool:
    """True when every numerator term is zero and every offset ``a_t`` is nonpositive."""
    return all(all(g.is_zero() for g in term.g) and term.a <= 0 for term in problem.terms)


def subgradient_cut(disc: Discretization, b_t: float, t: int, at: LevelAssignment):
    """Tangent cut of ``1 / den_t`` at an assignment.

    Parameters
    ----------
    disc : Discretization
    b_t : float
        Constant denominator offset of ratio ``t``.
    t : int
        Ratio index.
    at : LevelAssignment
        Expansion point.

    Returns
    -------
    constant : float
    coeff_y : ndarray, shape (m,)
    coeff_z : ndarray, shape (m, K)
        The cut reads ``theta_t >= constant + coeff_y @ y + sum(coeff_z * z)``.
    """
    y = np.asarray(at.y, dtype=float)
    level = np.asarray(at.level, dtype=int)
    z = (np.arange(1, disc.K + 1)[None, :] <= level[:, None]).astype(float)
    grad_y, grad_z, den = _inverse_den_gradient(disc, b_t, t, y, z)
    g = 1.0 / den
    constant = g - grad_y @ y - np.sum(grad_z * z)
    return float(constant), grad_y, grad_z


def _inverse_den_gradient(disc, b_t, t, y, z):
    den = b_t + disc.h_at_l[t] @ y + np.sum(disc.delta[:, None] * disc.slope_h[t] * z)
    if den <= 0:
        raise NonPositiveDenominator(t, float(den))
    inv2 = 1.0 / (den * den)
    return -disc.h_at_l[t] * inv2, -(disc.delta[:, None] * disc.slope_h[t]) * inv2, den


def oa_solve(
    problem: SorProblem,
    disc: Discretization,
    epsilon: float = 1e-7,
    config: BnbConfig | None = None,
    max_iterations: int = 10_000,
) -> Solution:
    """Multicut outer approximation.

    The objective ``constant + sum_t a_t / den_t`` (all ``a_t <= 0``) is
    maximized by iterating a master problem in which each reciprocal
    ``1 / den_t`` is replaced by the maximum of its tangent cuts. A cut is
    added for every ratio whose reciprocal exceeds its master value by more
    than ``epsilon``; the loop stops when no ratio does.

    Returns
    -------
    Solution
        ``objective`` is the exact discretized objective of the best master
        solution seen; ``upper_bound`` the last master value; ``cuts_added``
        and ``iterations`` record the loop. Status ``gap_limit`` means the
        iteration cap was reached first.
    """
    if not is_mcp_form(problem):
        raise NotMcpForm("outer approximation needs zero numerator terms and nonpositive offsets")
    report = check_assumptions(problem)
    if not report.a1_positive:
        raise NonPositiveDenominator(int(np.argmin(report.denom_lower)), float(np.min(report.denom_lower)))
    config = config or BnbConfig()
    rows = _RowTables(problem, disc)
    order = _item_order(disc, config.branch_order)
    T = problem.T
    den_tab = disc.state_den
    dmax = problem.b_vec + np.maximum(den_tab.max(axis=2), 0.0).sum(axis=1)
    floors = 1.0 / dmax
    weights = problem.a_vec
    cut_t: list[int] = []
    cut_const: list[float] = []
    cut_rows: list[np.ndarray] = []
    best_val, best_states = -math.inf, None
    total_nodes = 0
    status = "gap_limit"
    upper = math.inf
    it = 0
    for it in range(1, max_iterations + 1):
        tab = np.array(cut_rows).reshape(len(cut_rows), problem.m, disc.K + 2)
        master = _CutMaster(problem.constant, weights, floors, cut_t, cut_const, tab)
        search = _Search(rows, master, order, config, disc.K + 2)
        states, mval, mupper, mstatus, nodes, feat = search.run()
        total_nodes += nodes
        if mstatus == "infeasible":
            return Solution(None, None, None, -math.inf, -math.inf, "infeasible", total_nodes, len(cut_t), it)
        if mstatus != "optimal":
            status = mstatus
            upper = min(upper, mupper)
            if states is not None:
                val = _mcp_value(problem, den_tab, states)
                if _improves(val, best_val):
                    best_val, best_states = val, states
            break
        upper = min(upper, mupper)
        den = problem.b_vec + den_tab[:, np.arange(problem.m), states].sum(axis=1)
        g = 1.0 / den
        val = float(problem.constant + weights @ g)
        if _improves(val, best_val):
            best_val, best_states = val, states
        theta = master.leaf_theta(feat[None])[0]
        violated = [t for t in range(T) if g[t] > theta[t] + epsilon]
        if not violated:
            status = "optimal"
            break
        for t in violated:
            inv2 = 1.0 / (den[t] * den[t])
            cut_t.append(t)
            cut_const.append((2.0 * den[t] - problem.b_vec[t]) * inv2)
            cut_rows.append(-den_tab[t] * inv2)
    upper = max(upper, best_val)
    return _solution_from_states(
        problem, disc, best_states, best_val, upper, status, total_nodes, cuts_added=len(cut_t), iterations=it
    )


def _mcp_value(problem, den_tab, states) -> float:
    den = problem.b_vec + den_tab[:, np.arange(problem.m), states].sum(axis=1)
    return float(problem.constant + problem.a_vec @ (1.0 / den))
