"""Solver-agnostic mixed-integer models of the discretized problem.

Builders emit a :class:`ModelIR` holding variables, linear rows, rotated cone
rows ``a * b >= c^2``, bilinear rows and exponential equalities. Variables
are ordered canonically: selection binaries ``y``, level binaries ``z``
(item-major), the continuous ``x``, then per-ratio auxiliaries grouped by
ratio.

Forms
-----
``milp``
    Inverse-denominator substitution with exact product linearization.
``cone_increasing`` / ``cone_positive``
    Conic forms with a shifted minimization objective. The first needs every
    denominator term increasing; the second needs positive denominator terms
    at the lower bounds and adds product linearization rows.
``bilinear``
    One ratio variable per term with ``ratio * den <= num``.
``exp_ap`` / ``exp_mcp``
    Continuous export-only forms that keep the exponential utilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SorProblem, check_assumptions
from .errors import (
    DimensionMismatch,
    InvariantViolated,
    MonotonicityViolated,
    NonPositiveAnchor,
    NonPositiveDenominator,
    UnboundedAuxiliary,
    UnrepresentableRow,
    UnsupportedFamily,
)
from .pwla import Discretization, LevelAssignment, x_from_levels

SENSES = ("<=", "=", ">=")
FAMILIES = ("generic", "mcp", "ap")


# ---------------------------------------------------------------------------
# IR types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Variable:
    id: int
    kind: str
    lb: float
    ub: float
    name: str


@dataclass(frozen=True)
class LinExpr:
    """``sum coef * var + const`` with terms in insertion order."""

    terms: tuple = ()
    const: float = 0.0

    def value(self, vals: np.ndarray) -> float:
        return self.const + sum(c * vals[i] for i, c in self.terms)


@dataclass(frozen=True)
class LinearRowIR:
    expr: LinExpr
    sense: str
    rhs: float
    name: str


@dataclass(frozen=True)
class ConeRow:
    """Rotated cone ``a * b >= c^2`` with ``a, b >= 0``.

    ``c`` is a variable id, or ``None`` for the constant ``c_value``.
    """

    a: int
    b: int
    c: int | None
    name: str
    c_value: float = 1.0


@dataclass(frozen=True)
class BilinearRow:
    """``sum coef * v_i * v_j + linear  (sense)  rhs``."""

    products: tuple
    linear: LinExpr
    sense: str
    rhs: float
    name: str


@dataclass(frozen=True)
class ExpRow:
    """``w = exp(expr)``."""

    w: int
    expr: LinExpr
    name: str


@dataclass(frozen=True)
class ModelIR:
    name: str
    form: str
    variables: tuple
    linear_rows: tuple
    cone_rows: tuple
    bilinear_rows: tuple
    exp_rows: tuple
    sense: str
    objective: LinExpr
    meta: dict = field(default_factory=dict, compare=False)

    def var_id(self, name: str) -> int:
        return self._index[name]

    @property
    def _index(self) -> dict:
        idx = self.meta.get("_index")
        if idx is None:
            idx = {v.name: v.id for v in self.variables}
            self.meta["_index"] = idx
        return idx

    def counts(self) -> dict:
        """Variable and row counts by kind; ``constraints`` counts rows of every kind."""
        binary = sum(1 for v in self.variables if v.kind == "binary")
        rows = {
            "linear": len(self.linear_rows),
            "cone": len(self.cone_rows),
            "bilinear": len(self.bilinear_rows),
            "exp": len(self.exp_rows),
        }
        return {
            "binary": binary,
            "continuous": len(self.variables) - binary,
            "constraints": sum(rows.values()),
            **rows,
        }

    def objective_value(self, vals) -> float:
        return self.objective.value(np.asarray(vals, dtype=float))

    def violations(self, vals, tol: float = 1e-9) -> list[str]:
        """Names of bounds and rows violated by a full variable assignment."""
        vals = np.asarray(vals, dtype=float)
        if vals.shape != (len(self.variables),):
            raise DimensionMismatch("assignment length differs from the variable count")
        bad = []
        for v in self.variables:
            x = vals[v.id]
            if x < v.lb - tol or x > v.ub + tol:
                bad.append(f"bound:{v.name}")
            if v.kind == "binary" and min(abs(x), abs(x - 1)) > tol:
                bad.append(f"integrality:{v.name}")
        for r in self.linear_rows:
            if not _sense_ok(r.expr.value(vals), r.sense, r.rhs, tol):
                bad.append(r.name)
        for r in self.cone_rows:
            c = vals[r.c] if r.c is not None else r.c_value
            a, b = vals[r.a], vals[r.b]
            if a < -tol or b < -tol or a * b < c * c - tol * max(1.0, abs(c * c)):
                bad.append(r.name)
        for r in self.bilinear_rows:
            lhs = sum(k * vals[i] * vals[j] for k, i, j in r.products) + r.linear.value(vals)
            if not _sense_ok(lhs, r.sense, r.rhs, tol * max(1.0, abs(r.rhs))):
                bad.append(r.name)
        for r in self.exp_rows:
            target = math.exp(r.expr.value(vals))
            if abs(vals[r.w] - target) > tol * max(1.0, abs(target)):
                bad.append(r.name)
        return bad


def _sense_ok(lhs: float, sense: str, rhs: float, tol: float) -> bool:
    if sense == "<=":
        return lhs <= rhs + tol
    if sense == ">=":
        return lhs >= rhs - tol
    return abs(lhs - rhs) <= tol


class _Builder:
    def __init__(self, name: str, form: str):
        self.name = name
        self.form = form
        self.vars: list[Variable] = []
        self.index: dict[str, int] = {}
        self.linear: list[LinearRowIR] = []
        self.cones: list[ConeRow] = []
        self.bilinear: list[BilinearRow] = []
        self.exps: list[ExpRow] = []

    def var(self, name, kind="continuous", lb=0.0, ub=math.inf) -> int:
        if kind == "binary":
            lb, ub = 0.0, 1.0
        vid = len(self.vars)
        self.vars.append(Variable(vid, kind, float(lb), float(ub), name))
        self.index[name] = vid
        return vid

    def row(self, name, terms, sense, rhs):
        assert sense in SENSES
        self.linear.append(LinearRowIR(LinExpr(tuple((i, float(c)) for i, c in terms if c != 0.0)), sense, float(rhs), name))

    def cone(self, name, a, b, c=None, c_value=1.0):
        self.cones.append(ConeRow(a, b, c, name, float(c_value)))

    def bilin(self, name, products, terms, sense, rhs):
        lin = LinExpr(tuple((i, float(c)) for i, c in terms if c != 0.0))
        self.bilinear.append(BilinearRow(tuple((float(k), i, j) for k, i, j in products), lin, sense, float(rhs), name))

    def exp(self, name, w, terms, const):
        self.exps.append(ExpRow(w, LinExpr(tuple((i, float(c)) for i, c in terms), float(const)), name))

    def build(self, sense, obj_terms, obj_const=0.0, **meta) -> ModelIR:
        obj = LinExpr(tuple((i, float(c)) for i, c in obj_terms if c != 0.0), float(obj_const))
        meta["_index"] = dict(self.index)
        return ModelIR(
            self.name, self.form, tuple(self.vars), tuple(self.linear), tuple(self.cones),
            tuple(self.bilinear), tuple(self.exps), sense, obj, meta,
        )


# ---------------------------------------------------------------------------
# Shared pieces of the discretized forms
# ---------------------------------------------------------------------------


def wt_bounds(problem: SorProblem, disc: Discretization) -> tuple[np.ndarray, np.ndarray]:
    """Bounds ``(1/den_max, 1/den_min)`` on every inverse denominator.

    Each item contributes the extreme of ``{0 (not selected)} U {level values}``
    to the denominator interval.
    """
    cum = disc.cum_h  # (T, m, K+1)
    den_min = problem.b_vec + np.minimum(cum.min(axis=2), 0.0).sum(axis=1)
    den_max = problem.b_vec + np.maximum(cum.max(axis=2), 0.0).sum(axis=1)
    for t in range(problem.T):
        if den_min[t] <= 0:
            raise NonPositiveDenominator(t, float(den_min[t]))
    return 1.0 / den_max, 1.0 / den_min


def _den_interval(problem, disc):
    L, U = wt_bounds(problem, disc)
    return 1.0 / U, 1.0 / L


def _base(b: _Builder, problem: SorProblem, disc: Discretization):
    """Binaries, x, level-structure rows and the original constraint rows."""
    m, K = problem.m, disc.K
    y = [b.var(f"y_{i}", "binary") for i in range(m)]
    z = [[b.var(f"z_{i}_{k + 1}", "binary") for k in range(K)] for i in range(m)]
    x = [b.var(f"x_{i}", lb=problem.lower[i], ub=problem.upper[i]) for i in range(m)]
    for i in range(m):
        b.row(f"link_{i}", [(z[i][0], 1.0), (y[i], -1.0)], "<=", 0.0)
        for k in range(K - 1):
            b.row(f"stair_{i}_{k + 1}", [(z[i][k + 1], 1.0), (z[i][k], -1.0)], "<=", 0.0)
    for i in range(m):
        b.row(f"xdef_{i}", [(x[i], 1.0)] + [(z[i][k], -disc.delta[i]) for k in range(K)], "=", problem.lower[i])
    for i in range(m):
        b.row(f"xact_{i}", [(x[i], 1.0), (y[i], -(problem.upper[i] - problem.lower[i]))], "<=", problem.lower[i])
    for r, row in enumerate(problem.constraints.linear_rows):
        terms = [(x[i], row.coeff_x[i]) for i in range(m)] + [(y[i], row.coeff_y[i]) for i in range(m)]
        b.row(f"row_{r}", terms, "<=", row.rhs)
    # under the level linkage y_i x_i = l_i y_i + Delta_i sum_k z_ik exactly
    for r, row in enumerate(problem.constraints.bilinear_budget_rows):
        terms = []
        for i in range(m):
            terms.append((y[i], row.alpha[i] * problem.lower[i]))
            terms += [(z[i][k], row.alpha[i] * disc.delta[i]) for k in range(K)]
        b.row(f"budget_{r}", terms, "<=", row.rhs)
    return y, z, x


def _product_rows(b: _Builder, name, prod, cont, binary, lo, hi):
    """Exact linearization of ``prod = cont * binary`` for ``cont`` in ``[lo, hi]``."""
    b.row(f"{name}_a", [(prod, 1.0), (binary, -hi)], "<=", 0.0)
    b.row(f"{name}_b", [(prod, 1.0), (binary, -lo)], ">=", 0.0)
    b.row(f"{name}_c", [(prod, 1.0), (cont, -1.0), (binary, -lo)], "<=", -lo)
    b.row(f"{name}_d", [(prod, 1.0), (cont, -1.0), (binary, -hi)], ">=", -hi)


def _check_family(problem: SorProblem, family: str):
    if family not in FAMILIES:
        raise UnsupportedFamily(f"unknown family {family!r}")
    if family == "mcp" and not all(all(g.is_zero() for g in t.g) for t in problem.terms):
        raise UnsupportedFamily("mcp family requires zero numerator terms")
    if family == "ap" and not all(t.a == 0.0 and t.b == 1.0 for t in problem.terms):
        raise UnsupportedFamily("ap family requires a_t = 0 and b_t = 1")


def _inverse_block(b: _Builder, problem, disc, t, lo, hi):
    """Inverse-denominator variable and its products with y and z for ratio t."""
    m, K = problem.m, disc.K
    w = b.var(f"inv_{t}", lb=lo, ub=hi)
    v = [b.var(f"invsel_{t}_{i}", lb=0.0, ub=hi) for i in range(m)]
    u = [[b.var(f"invlev_{t}_{i}_{k + 1}", lb=0.0, ub=hi) for k in range(K)] for i in range(m)]
    return w, v, u


def _normalization_row(b, problem, disc, t, w, v, u):
    m, K = problem.m, disc.K
    terms = [(w, problem.b_vec[t])]
    terms += [(v[i], disc.h_at_l[t, i]) for i in range(m)]
    terms += [(u[i][k], disc.delta[i] * disc.slope_h[t, i, k]) for i in range(m) for k in range(K)]
    b.row(f"norm_{t}", terms, "=", 1.0)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_milp(problem: SorProblem, disc: Discretization, family: str = "generic") -> ModelIR:
    """MILP with ``inv_t = 1/den_t`` and exact linearization of its products with y and z.

    Raises
    ------
    UnboundedAuxiliary
        When a denominator interval reaches zero.
    """
    _check_family(problem, family)
    try:
        L, U = wt_bounds(problem, disc)
    except NonPositiveDenominator as exc:
        raise UnboundedAuxiliary(f"inverse denominator of ratio {exc.t} is unbounded") from exc
    b = _Builder(problem.name or "sor", "milp")
    y, z, x = _base(b, problem, disc)
    m, K = problem.m, disc.K
    obj = []
    for t in range(problem.T):
        w, v, u = _inverse_block(b, problem, disc, t, L[t], U[t])
        _normalization_row(b, problem, disc, t, w, v, u)
        for i in range(m):
            _product_rows(b, f"mcs_{t}_{i}", v[i], w, y[i], L[t], U[t])
        for i in range(m):
            for k in range(K):
                _product_rows(b, f"mcl_{t}_{i}_{k + 1}", u[i][k], w, z[i][k], L[t], U[t])
        obj.append((w, problem.a_vec[t]))
        obj += [(v[i], disc.g_at_l[t, i]) for i in range(m)]
        obj += [(u[i][k], disc.delta[i] * disc.slope_g[t, i, k]) for i in range(m) for k in range(K)]
    return b.build("max", obj, problem.constant, family=family)


def select_lambda(problem: SorProblem, disc: Discretization, mode: str) -> np.ndarray:
    """Shift ``lambda_t = 1.001 * B_t`` for the conic forms.

    ``B_t`` is the largest of the anchor ratios ``g(l)/h(l)``, the ratio bound
    and (``cone_increasing`` only) the slope ratios. When every candidate is
    nonpositive a small positive shift is used instead.
    """
    mode = _cone_mode(mode)
    report = check_assumptions(problem)
    if np.any(disc.h_at_l <= 0):
        t, i = np.argwhere(disc.h_at_l <= 0)[0]
        raise NonPositiveAnchor(f"denominator term ({t}, {i}) is not positive at its lower bound")
    if mode == "cone_increasing" and np.any(disc.slope_h <= 0):
        t, i, k = np.argwhere(disc.slope_h <= 0)[0]
        raise MonotonicityViolated(f"denominator term ({t}, {i}) is not increasing on piece {k + 1}")
    lam = np.empty(problem.T)
    for t in range(problem.T):
        cands = [float(np.max(disc.g_at_l[t] / disc.h_at_l[t])), float(report.ratio_upper[t])]
        if mode == "cone_increasing":
            cands.append(float(np.max(disc.slope_g[t] / disc.slope_h[t])))
        B = max(cands)
        lam[t] = (1.0 + 1e-3) * B if B > 0 else 1e-3
    return lam


_MODE_ALIASES = {"misocp1": "cone_increasing", "misocp2": "cone_positive"}


def _cone_mode(mode: str) -> str:
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in ("cone_increasing", "cone_positive"):
        raise UnsupportedFamily(f"unknown conic mode {mode!r}")
    return mode


def _build_cone(problem: SorProblem, disc: Discretization, mode: str) -> ModelIR:
    mode = _cone_mode(mode)
    lam = select_lambda(problem, disc, mode)
    L, U = wt_bounds(problem, disc)
    dlo, dhi = 1.0 / U, 1.0 / L
    b = _Builder(problem.name or "sor", mode)
    y, z, x = _base(b, problem, disc)
    m, K = problem.m, disc.K
    obj = []
    for t in range(problem.T):
        w, v, u = _inverse_block(b, problem, disc, t, L[t], U[t])
        th = b.var(f"den_{t}", lb=dlo[t], ub=dhi[t])
        terms = [(th, 1.0)] + [(y[i], -disc.h_at_l[t, i]) for i in range(m)]
        terms += [(z[i][k], -disc.delta[i] * disc.slope_h[t, i, k]) for i in range(m) for k in range(K)]
        b.row(f"dendef_{t}", terms, "=", problem.b_vec[t])
        b.cone(f"coneinv_{t}", w, th)
        _normalization_row(b, problem, disc, t, w, v, u)
        for i in range(m):
            b.cone(f"conesel_{t}_{i}", v[i], th, y[i])
        for i in range(m):
            for k in range(K):
                b.cone(f"conelev_{t}_{i}_{k + 1}", u[i][k], th, z[i][k])
        if mode == "cone_positive":
            for i in range(m):
                _product_rows(b, f"mcs_{t}_{i}", v[i], w, y[i], L[t], U[t])
            for i in range(m):
                for k in range(K):
                    _product_rows(b, f"mcl_{t}_{i}_{k + 1}", u[i][k], w, z[i][k], L[t], U[t])
        obj.append((w, lam[t] * problem.b_vec[t] - problem.a_vec[t]))
        obj += [(v[i], lam[t] * disc.h_at_l[t, i] - disc.g_at_l[t, i]) for i in range(m)]
        obj += [
            (u[i][k], disc.delta[i] * (lam[t] * disc.slope_h[t, i, k] - disc.slope_g[t, i, k]))
            for i in range(m)
            for k in range(K)
        ]
    # minimizing this equals maximizing the ratio sum: the value is -f at the defining point
    return b.build("min", obj, -float(lam.sum()) - problem.constant, lam=tuple(lam))


def build_misocp1(problem: SorProblem, disc: Discretization) -> ModelIR:
    """Conic form for increasing denominator terms (cones on every product)."""
    return _build_cone(problem, disc, "cone_increasing")


def build_misocp2(problem: SorProblem, disc: Discretization) -> ModelIR:
    """Conic form for denominator terms positive at the lower bounds (cones plus linearization rows)."""
    return _build_cone(problem, disc, "cone_positive")


def _constant_numerator(disc: Discretization, t: int) -> bool:
    return bool(np.all(disc.g_at_l[t] == 0.0) and np.all(disc.slope_g[t] == 0.0))


def build_bilinear(problem: SorProblem, disc: Discretization) -> ModelIR:
    """``max sum_t ratio_t`` with ``ratio_t * den_t <= num_t``.

    A numerator variable is created only when the numerator of ratio ``t``
    depends on the binaries; otherwise the constant offset is used directly.
    """
    report = check_assumptions(problem)
    if not report.a1_positive:
        raise NonPositiveDenominator(int(np.argmin(report.denom_lower)))
    L, U = wt_bounds(problem, disc)
    b = _Builder(problem.name or "sor", "bilinear")
    y, z, x = _base(b, problem, disc)
    m, K = problem.m, disc.K
    obj = []
    for t in range(problem.T):
        F = float(report.ratio_upper[t])
        o = b.var(f"ratio_{t}", lb=-F, ub=F)
        d = b.var(f"den_{t}", lb=1.0 / U[t], ub=1.0 / L[t])
        terms = [(d, 1.0)] + [(y[i], -disc.h_at_l[t, i]) for i in range(m)]
        terms += [(z[i][k], -disc.delta[i] * disc.slope_h[t, i, k]) for i in range(m) for k in range(K)]
        b.row(f"dendef_{t}", terms, "=", problem.b_vec[t])
        if _constant_numerator(disc, t):
            b.bilin(f"ratiolink_{t}", [(1.0, o, d)], [], "<=", problem.a_vec[t])
        else:
            nlo, nhi = report.num_range[t]
            n = b.var(f"num_{t}", lb=nlo, ub=nhi)
            terms = [(n, 1.0)] + [(y[i], -disc.g_at_l[t, i]) for i in range(m)]
            terms += [(z[i][k], -disc.delta[i] * disc.slope_g[t, i, k]) for i in range(m) for k in range(K)]
            b.row(f"numdef_{t}", terms, "=", problem.a_vec[t])
            b.bilin(f"ratiolink_{t}", [(1.0, o, d)], [(n, -1.0)], "<=", 0.0)
        obj.append((o, 1.0))
    return b.build("max", obj, problem.constant)


def build_exp_bilinear(problem_family: str, instance) -> ModelIR:
    """Continuous export form keeping ``util = exp(eta x + kappa)`` as exponential rows.

    ``ap``: products of selections and utilities are linearized, products with
    prices stay bilinear. ``mcp``: selection-utility products stay bilinear.
    """
    from .apps import ApInstance, McpInstance

    if problem_family == "ap" and isinstance(instance, ApInstance):
        return _exp_ap(instance)
    if problem_family == "mcp" and isinstance(instance, McpInstance):
        return _exp_mcp(instance)
    raise UnsupportedFamily(f"family {problem_family!r} does not match {type(instance).__name__}")


def _util_bounds(eta, kappa, lo, hi):
    a, c = eta * lo + kappa, eta * hi + kappa
    return math.exp(min(a, c)), math.exp(max(a, c))


def _exp_ap(inst) -> ModelIR:
    m, T = inst.m, inst.T
    b = _Builder(inst.name or "ap", "exp_ap")
    y = [b.var(f"y_{i}", "binary") for i in range(m)]
    x = [b.var(f"x_{i}", lb=inst.lower[i], ub=inst.upper[i]) for i in range(m)]
    b.row("cardinality", [(y[i], 1.0) for i in range(m)], "<=", inst.cardinality)
    b.bilin("budget", [(inst.alpha[i], y[i], x[i]) for i in range(m)], [], "<=", inst.budget)
    obj = []
    for t in range(T):
        bnds = [_util_bounds(inst.eta[t][i], inst.kappa[t][i], inst.lower[i], inst.upper[i]) for i in range(m)]
        e = [b.var(f"util_{t}_{i}", lb=bnds[i][0], ub=bnds[i][1]) for i in range(m)]
        s = [b.var(f"selutil_{t}_{i}", lb=0.0, ub=bnds[i][1]) for i in range(m)]
        rmax = [bnds[i][1] * max(abs(inst.lower[i]), abs(inst.upper[i])) for i in range(m)]
        p = [b.var(f"revutil_{t}_{i}", lb=-rmax[i], ub=rmax[i]) for i in range(m)]
        num = b.var(f"num_{t}", lb=-math.inf, ub=math.inf)
        den = b.var(f"den_{t}", lb=1.0, ub=1.0 + sum(bd[1] for bd in bnds))
        o = b.var(f"ratio_{t}", lb=-math.inf, ub=math.inf)
        for i in range(m):
            b.exp(f"utildef_{t}_{i}", e[i], [(x[i], inst.eta[t][i])], inst.kappa[t][i])
        for i in range(m):
            _product_rows(b, f"mcs_{t}_{i}", s[i], e[i], y[i], bnds[i][0], bnds[i][1])
        for i in range(m):
            b.bilin(f"revdef_{t}_{i}", [(1.0, x[i], s[i])], [(p[i], -1.0)], "=", 0.0)
        b.row(f"numdef_{t}", [(num, 1.0)] + [(p[i], -inst.weight) for i in range(m)], "=", 0.0)
        b.row(f"dendef_{t}", [(den, 1.0)] + [(s[i], -1.0) for i in range(m)], "=", 1.0)
        b.bilin(f"ratiolink_{t}", [(1.0, o, den)], [(num, -1.0)], "<=", 0.0)
        obj.append((o, 1.0))
    return b.build("max", obj)


def _exp_mcp(inst) -> ModelIR:
    m, T = inst.m, inst.T
    b = _Builder(inst.name or "mcp", "exp_mcp")
    y = [b.var(f"y_{i}", "binary") for i in range(m)]
    x = [b.var(f"x_{i}", lb=inst.lower[i], ub=inst.upper[i]) for i in range(m)]
    b.row("cardinality", [(y[i], 1.0) for i in range(m)], "<=", inst.cardinality)
    if inst.budget_form == "coupled":
        b.bilin("budget", [(1.0, y[i], x[i]) for i in range(m)], [], "<=", inst.budget)
    else:
        b.row("budget", [(x[i], 1.0) for i in range(m)], "<=", inst.budget)
    obj = []
    for t in range(T):
        bnds = [_util_bounds(inst.eta[t][i], inst.kappa[t][i], inst.lower[i], inst.upper[i]) for i in range(m)]
        e = [b.var(f"util_{t}_{i}", lb=bnds[i][0], ub=bnds[i][1]) for i in range(m)]
        smax = sum(bd[1] for bd in bnds)
        num = b.var(f"num_{t}", lb=0.0, ub=inst.q[t] * smax)
        den = b.var(f"den_{t}", lb=inst.Uc[t], ub=inst.Uc[t] + smax)
        o = b.var(f"ratio_{t}", lb=0.0, ub=inst.q[t])
        for i in range(m):
            b.exp(f"utildef_{t}_{i}", e[i], [(x[i], inst.eta[t][i])], inst.kappa[t][i])
        b.bilin(f"dendef_{t}", [(1.0, y[i], e[i]) for i in range(m)], [(den, -1.0)], "=", -inst.Uc[t])
        b.bilin(f"numdef_{t}", [(inst.q[t], y[i], e[i]) for i in range(m)], [(num, -1.0)], "=", 0.0)
        b.bilin(f"ratiolink_{t}", [(1.0, o, den)], [(num, -1.0)], "<=", 0.0)
        obj.append((o, 1.0))
    return b.build("max", obj)


BUILDERS = {
    "milp": lambda p, d: build_milp(p, d),
    "misocp1": build_misocp1,
    "misocp2": build_misocp2,
    "bilinear": build_bilinear,
}


# ---------------------------------------------------------------------------
# Defining values (used to check that a model is a faithful reformulation)
# ---------------------------------------------------------------------------


def defining_values(model: ModelIR, problem: SorProblem, disc: Discretization, assign: LevelAssignment) -> np.ndarray:
    """Full assignment of a discretized model at the point encoded by ``assign``."""
    y = np.asarray(assign.y, dtype=float)
    level = np.asarray(assign.level, dtype=int)
    z = (np.arange(1, disc.K + 1)[None, :] <= level[:, None]).astype(float)
    x = x_from_levels(disc, assign)
    den = problem.b_vec + disc.h_at_l @ y + np.einsum("tik,ik->t", disc.slope_h * disc.delta[None, :, None], z)
    num = problem.a_vec + disc.g_at_l @ y + np.einsum("tik,ik->t", disc.slope_g * disc.delta[None, :, None], z)
    vals = np.zeros(len(model.variables))
    for v in model.variables:
        parts = v.name.split("_")
        head, idx = parts[0], [int(p) for p in parts[1:]]
        if head == "y":
            val = y[idx[0]]
        elif head == "z":
            val = z[idx[0], idx[1] - 1]
        elif head == "x":
            val = x[idx[0]]
        elif head == "inv":
            val = 1.0 / den[idx[0]]
        elif head == "invsel":
            val = y[idx[1]] / den[idx[0]]
        elif head == "invlev":
            val = z[idx[1], idx[2] - 1] / den[idx[0]]
        elif head == "den":
            val = den[idx[0]]
        elif head == "num":
            val = num[idx[0]]
        elif head == "ratio":
            val = num[idx[0]] / den[idx[0]]
        else:
            raise InvariantViolated(f"no defining value for variable {v.name}")
        vals[v.id] = val
    return vals


def exp_defining_values(model: ModelIR, instance, y, x) -> np.ndarray:
    """Full assignment of an exponential export form at a continuous point."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    T = instance.T
    util = np.exp(np.asarray(instance.eta) * x[None, :] + np.asarray(instance.kappa))
    sel = util * y[None, :]
    if model.form == "exp_ap":
        num = instance.weight * (sel * x[None, :]).sum(axis=1)
        den = 1.0 + sel.sum(axis=1)
    else:
        num = np.asarray(instance.q) * sel.sum(axis=1)
        den = np.asarray(instance.Uc) + sel.sum(axis=1)
    vals = np.zeros(len(model.variables))
    for v in model.variables:
        parts = v.name.split("_")
        head, idx = parts[0], [int(p) for p in parts[1:]]
        table = {
            "y": lambda: y[idx[0]],
            "x": lambda: x[idx[0]],
            "util": lambda: util[idx[0], idx[1]],
            "selutil": lambda: sel[idx[0], idx[1]],
            "revutil": lambda: sel[idx[0], idx[1]] * x[idx[1]],
            "num": lambda: num[idx[0]],
            "den": lambda: den[idx[0]],
            "ratio": lambda: num[idx[0]] / den[idx[0]],
        }
        if head not in table:
            raise InvariantViolated(f"no defining value for variable {v.name}")
        vals[v.id] = table[head]()
    return vals


# ---------------------------------------------------------------------------
# Text export
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _lin_text(terms, names, first=True) -> str:
    out = []
    for i, c in terms:
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        coef = "" if mag == 1.0 else _fmt(mag) + " "
        if first and not out:
            out.append(("- " if sign == "-" else "") + coef + names[i])
        else:
            out.append(f"{sign} {coef}{names[i]}")
    return " ".join(out)


def _quad_text(products, names) -> str:
    out = []
    for k, i, j in products:
        sign = "-" if k < 0 else "+"
        mag = abs(k)
        coef = "" if mag == 1.0 else _fmt(mag) + " "
        term = f"{names[i]} ^2" if i == j else f"{names[i]} * {names[j]}"
        if not out:
            out.append(("- " if sign == "-" else "") + coef + term)
        else:
            out.append(f"{sign} {coef}{term}")
    return "[ " + " ".join(out) + " ]"


def export_lp_text(model: ModelIR, general_constraints: bool = False) -> str:
    """Deterministic LP-format text.

    Quadratic terms use the bracket syntax (``[ a * b ]``, ``[ c ^2 ]``). A
    cone row ``a * b >= c^2`` is written ``[ c ^2 - a * b ] <= 0``. Exponential
    rows cannot be expressed in LP format; with ``general_constraints`` they
    are listed as comment lines, otherwise :class:`UnrepresentableRow` is raised.
    """
    if model.exp_rows and not general_constraints:
        raise UnrepresentableRow("exponential rows need the general-constraint comment dialect")
    names = [v.name for v in model.variables]
    lines = [f"\\ Model {model.name} ({model.form})"]
    lines.append("Maximize" if model.sense == "max" else "Minimize")
    obj = _lin_text(model.objective.terms, names)
    if model.objective.const != 0.0 or not obj:
        c = model.objective.const
        obj = (obj + (" - " if c < 0 else " + ") + _fmt(abs(c))) if obj else _fmt(c)
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    for r in model.linear_rows:
        lhs = _lin_text(r.expr.terms, names) or "0 " + (names[0] if names else "")
        lines.append(f" {r.name}: {lhs} {r.sense} {_fmt(r.rhs)}")
    for r in model.cone_rows:
        ab = f"{names[r.a]} * {names[r.b]}"
        if r.c is None:
            lines.append(f" {r.name}: [ - {ab} ] <= {_fmt(-r.c_value * r.c_value)}")
        else:
            lines.append(f" {r.name}: [ {names[r.c]} ^2 - {ab} ] <= 0")
    for r in model.bilinear_rows:
        lin = _lin_text(r.linear.terms, names, first=False)
        body = _quad_text(r.products, names) + (" " + lin if lin else "")
        lines.append(f" {r.name}: {body} {r.sense} {_fmt(r.rhs - r.linear.const)}")
    if model.exp_rows:
        lines.append("\\ General constraints (not part of the LP dialect)")
        for r in model.exp_rows:
            arg = _lin_text(r.expr.terms, names)
            if r.expr.const != 0.0:
                arg += (" - " if r.expr.const < 0 else " + ") + _fmt(abs(r.expr.const))
            lines.append(f"\\ {r.name}: {names[r.w]} = EXP ( {arg} )")
    lines.append("Bounds")
    for v in model.variables:
        if v.kind == "binary":
            continue
        if math.isinf(v.lb) and math.isinf(v.ub):
            lines.append(f" {v.name} free")
        elif math.isinf(v.ub):
            lines.append(f" {v.name} >= {_fmt(v.lb)}" if not math.isinf(v.lb) else f" {v.name} free")
        elif math.isinf(v.lb):
            lines.append(f" -inf <= {v.name} <= {_fmt(v.ub)}")
        else:
            lines.append(f" {_fmt(v.lb)} <= {v.name} <= {_fmt(v.ub)}")
    binaries = [v.name for v in model.variables if v.kind == "binary"]
    if binaries:
        lines.append("Binaries")
        for k in range(0, len(binaries), 8):
            lines.append(" " + " ".join(binaries[k:k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_mps_text(model: ModelIR) -> str:
    """Fixed-column MPS for purely linear models.

    Variable and row names are replaced by eight-character codes
    (``C0000001``, ``R0000001``); the objective row is ``OBJ``.
    """
    if model.cone_rows or model.bilinear_rows or model.exp_rows:
        raise UnrepresentableRow("MPS export supports linear rows only")
    vname = [f"C{v.id + 1:07d}" for v in model.variables]
    rname = [f"R{k + 1:07d}" for k in range(len(model.linear_rows))]

    def field_line(a="", b="", c="", d="", e="", f=""):
        s = f" {a:<2} {b:<8}  {c:<8}  {d:>12}   {e:<8}  {f:>12}"
        return s.rstrip()

    out = [f"NAME          {model.name[:8]}"]
    if model.sense == "max":
        out.append("OBJSENSE")
        out.append("    MAX")
    out.append("ROWS")
    out.append(field_line("N", "OBJ"))
    kinds = {"<=": "L", ">=": "G", "=": "E"}
    for r, nm in zip(model.linear_rows, rname):
        out.append(field_line(kinds[r.sense], nm))
    cols: list[list[tuple[str, float]]] = [[] for _ in model.variables]
    for i, c in model.objective.terms:
        cols[i].append(("OBJ", c))
    for r, nm in zip(model.linear_rows, rname):
        for i, c in r.expr.terms:
            cols[i].append((nm, c))
    out.append("COLUMNS")
    in_int = False
    for v, entries in zip(model.variables, cols):
        is_bin = v.kind == "binary"
        if is_bin and not in_int:
            out.append(field_line("", "MARKER", "'MARKER'", "", "'INTORG'"))
            in_int = True
        if not is_bin and in_int:
            out.append(field_line("", "MARKER", "'MARKER'", "", "'INTEND'"))
            in_int = False
        for row, c in entries or [("OBJ", 0.0)]:
            out.append(field_line("", vname[v.id], row, _mps_num(c)))
    if in_int:
        out.append(field_line("", "MARKER", "'MARKER'", "", "'INTEND'"))
    out.append("RHS")
    if model.objective.const != 0.0:
        out.append(field_line("", "RHS", "OBJ", _mps_num(-model.objective.const)))
    for r, nm in zip(model.linear_rows, rname):
        if r.rhs != 0.0:
            out.append(field_line("", "RHS", nm, _mps_num(r.rhs)))
    out.append("BOUNDS")
    for v in model.variables:
        if v.kind == "binary":
            out.append(field_line("BV", "BND", vname[v.id]))
            continue
        if math.isinf(v.lb) and math.isinf(v.ub):
            out.append(field_line("FR", "BND", vname[v.id]))
            continue
        if math.isinf(v.lb):
            out.append(field_line("MI", "BND", vname[v.id]))
        elif v.lb != 0.0:
            out.append(field_line("LO", "BND", vname[v.id], _mps_num(v.lb)))
        if not math.isinf(v.ub):
            out.append(field_line("UP", "BND", vname[v.id], _mps_num(v.ub)))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def _mps_num(v: float) -> str:
    s = f"{float(v):.12g}"
    if len(s) > 12:
        s = f"{float(v):.6e}"
    return s
