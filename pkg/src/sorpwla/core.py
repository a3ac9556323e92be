"""Sum-of-ratios instances: univariate building blocks, evaluation, feasibility
and assumption certificates.

A problem maximizes

    constant + sum_t (a_t + sum_i y_i g_ti(x_i)) / (b_t + sum_i y_i h_ti(x_i))

over binary ``y`` and box-bounded ``x`` subject to linear rows
``A x + B y <= D`` and budget rows ``sum_i alpha_i y_i x_i <= rhs``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatch, InvariantViolated, NonPositiveDenominator

FEAS_TOL = 1e-9


# ---------------------------------------------------------------------------
# Univariate functions
# ---------------------------------------------------------------------------


class _Univariate:
    """Shared helpers for the closed family of univariate functions."""

    def __call__(self, x):  # pragma: no cover - overridden
        raise NotImplementedError

    def derivative(self, x):  # pragma: no cover - overridden
        raise NotImplementedError

    def lipschitz(self, lo: float, hi: float) -> float:  # pragma: no cover
        raise NotImplementedError

    def value_range(self, lo: float, hi: float) -> tuple[float, float]:  # pragma: no cover
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class Zero(_Univariate):
    """The identically zero function."""

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    def derivative(self, x):
        return self(x)

    def lipschitz(self, lo, hi):
        return 0.0

    def value_range(self, lo, hi):
        return 0.0, 0.0

    def is_zero(self):
        return True


@dataclass(frozen=True)
class Affine(_Univariate):
    """``a0 + a1 * x``."""

    a0: float
    a1: float

    def __call__(self, x):
        return self.a0 + self.a1 * np.asarray(x, dtype=float) if np.ndim(x) else self.a0 + self.a1 * float(x)

    def derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.a1) if np.ndim(x) else self.a1

    def lipschitz(self, lo, hi):
        return abs(self.a1)

    def value_range(self, lo, hi):
        v = (self.a0 + self.a1 * lo, self.a0 + self.a1 * hi)
        return min(v), max(v)

    def is_zero(self):
        return self.a0 == 0.0 and self.a1 == 0.0


@dataclass(frozen=True)
class ExpAffine(_Univariate):
    """``c * exp(eta * x + kappa)``."""

    c: float
    eta: float
    kappa: float

    def __call__(self, x):
        if np.ndim(x):
            return self.c * np.exp(self.eta * np.asarray(x, dtype=float) + self.kappa)
        return self.c * math.exp(self.eta * float(x) + self.kappa)

    def derivative(self, x):
        return self.eta * self(x)

    def lipschitz(self, lo, hi):
        return abs(self.c * self.eta) * math.exp(max(self.eta * lo, self.eta * hi) + self.kappa)

    def value_range(self, lo, hi):
        v = (self(lo), self(hi))
        return min(v), max(v)

    def is_zero(self):
        return self.c == 0.0


@dataclass(frozen=True)
class LinExpAffine(_Univariate):
    """``x * exp(eta * x + kappa)``."""

    eta: float
    kappa: float

    def __call__(self, x):
        if np.ndim(x):
            x = np.asarray(x, dtype=float)
            return x * np.exp(self.eta * x + self.kappa)
        x = float(x)
        return x * math.exp(self.eta * x + self.kappa)

    def derivative(self, x):
        if np.ndim(x):
            x = np.asarray(x, dtype=float)
            return (1.0 + self.eta * x) * np.exp(self.eta * x + self.kappa)
        x = float(x)
        return (1.0 + self.eta * x) * math.exp(self.eta * x + self.kappa)

    def _candidates(self, lo, hi, critical):
        pts = [lo, hi]
        if self.eta != 0.0:
            c = -critical / self.eta
            if lo < c < hi:
                pts.append(c)
        return pts

    def lipschitz(self, lo, hi):
        # |f'| peaks at an endpoint or where f'' = eta (2 + eta x) e^{...} vanishes
        return max(abs(self.derivative(p)) for p in self._candidates(lo, hi, 2.0))

    def value_range(self, lo, hi):
        vals = [self(p) for p in self._candidates(lo, hi, 1.0)]
        return min(vals), max(vals)


@dataclass(frozen=True)
class PiecewiseLinear(_Univariate):
    """Linear interpolation through ``breakpoints``; constant beyond the ends."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bp = tuple((float(a), float(b)) for a, b in self.breakpoints)
        if len(bp) < 1:
            raise InvariantViolated("piecewise linear function needs a breakpoint")
        xs = [p[0] for p in bp]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise InvariantViolated("breakpoints must be strictly increasing in x")
        object.__setattr__(self, "breakpoints", bp)

    @cached_property
    def _xs(self):
        return np.array([p[0] for p in self.breakpoints])

    @cached_property
    def _vs(self):
        return np.array([p[1] for p in self.breakpoints])

    def __call__(self, x):
        out = np.interp(np.asarray(x, dtype=float), self._xs, self._vs)
        return out if np.ndim(x) else float(out)

    def _slopes(self):
        if len(self.breakpoints) < 2:
            return np.zeros(0)
        return np.diff(self._vs) / np.diff(self._xs)

    def derivative(self, x):
        s = self._slopes()
        if s.size == 0:
            return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
        idx = np.clip(np.searchsorted(self._xs, x, side="right") - 1, 0, s.size - 1)
        inside = (np.asarray(x) >= self._xs[0]) & (np.asarray(x) <= self._xs[-1])
        out = np.where(inside, s[idx], 0.0)
        return out if np.ndim(x) else float(out)

    def lipschitz(self, lo, hi):
        s = self._slopes()
        return float(np.max(np.abs(s))) if s.size else 0.0

    def value_range(self, lo, hi):
        inner = [x for x in self._xs if lo < x < hi]
        vals = [self(p) for p in [lo, hi] + inner]
        return min(vals), max(vals)

    def is_zero(self):
        return bool(np.all(self._vs == 0.0))


UnivariateFn = Union[Zero, Affine, ExpAffine, LinExpAffine, PiecewiseLinear]


# ---------------------------------------------------------------------------
# Problem data
# ---------------------------------------------------------------------------


def _floats(seq, m: int | None = None, what: str = "vector") -> tuple[float, ...]:
    out = tuple(float(v) for v in seq)
    if m is not None and len(out) != m:
        raise DimensionMismatch(f"{what} has length {len(out)}, expected {m}")
    return out


@dataclass(frozen=True)
class RatioTerm:
    """One ratio ``(a + sum y_i g_i(x_i)) / (b + sum y_i h_i(x_i))``."""

    a: float
    b: float
    g: tuple
    h: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "g", tuple(self.g))
        object.__setattr__(self, "h", tuple(self.h))
        if len(self.g) != len(self.h):
            raise DimensionMismatch("numerator and denominator term counts differ")


@dataclass(frozen=True)
class LinearRow:
    """``sum_i coeff_x[i] x_i + coeff_y[i] y_i <= rhs``."""

    coeff_x: tuple
    coeff_y: tuple
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "coeff_x", _floats(self.coeff_x))
        object.__setattr__(self, "coeff_y", _floats(self.coeff_y))
        object.__setattr__(self, "rhs", float(self.rhs))
        if len(self.coeff_x) != len(self.coeff_y):
            raise DimensionMismatch("coeff_x and coeff_y lengths differ")


@dataclass(frozen=True)
class BudgetRow:
    """``sum_i alpha[i] y_i x_i <= rhs`` with nonnegative weights."""

    alpha: tuple
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _floats(self.alpha))
        object.__setattr__(self, "rhs", float(self.rhs))
        if any(a < 0 for a in self.alpha):
            raise InvariantViolated("budget weights must be nonnegative")


def cardinality_row(m: int, limit: float) -> LinearRow:
    """Row ``sum_i y_i <= limit``."""
    return LinearRow((0.0,) * m, (1.0,) * m, limit)


@dataclass(frozen=True)
class ConstraintSet:
    linear_rows: tuple = ()
    bilinear_budget_rows: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "linear_rows", tuple(self.linear_rows))
        object.__setattr__(self, "bilinear_budget_rows", tuple(self.bilinear_budget_rows))


@dataclass(frozen=True)
class SorProblem:
    """A complete sum-of-ratios instance.

    Attributes
    ----------
    m, T : int
        Number of items and number of ratios.
    lower, upper : tuple of float
        Box bounds on x.
    terms : tuple of RatioTerm
        The T ratios.
    constraints : ConstraintSet
        Linear rows and budget rows.
    constant : float
        Offset added to the ratio sum. Lets forms such as the simplified
        facility-location objective (total share minus competitor share) be
        expressed as a maximization.
    name : str
        Free-form identifier.
    """

    m: int
    T: int
    lower: tuple
    upper: tuple
    terms: tuple
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    constant: float = 0.0
    name: str = ""

    def __post_init__(self):
        m, T = int(self.m), int(self.T)
        if m < 1 or T < 1:
            raise InvariantViolated("m and T must be positive")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "lower", _floats(self.lower, m, "lower"))
        object.__setattr__(self, "upper", _floats(self.upper, m, "upper"))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "constant", float(self.constant))
        if len(self.terms) != T:
            raise DimensionMismatch(f"expected {T} ratio terms, got {len(self.terms)}")
        for term in self.terms:
            if len(term.g) != m:
                raise DimensionMismatch("ratio term length differs from m")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise InvariantViolated("lower bounds must be strictly below upper bounds")
        for row in self.constraints.linear_rows:
            if len(row.coeff_x) != m:
                raise DimensionMismatch("linear row length differs from m")
        for row in self.constraints.bilinear_budget_rows:
            if len(row.alpha) != m:
                raise DimensionMismatch("budget row length differs from m")

    # Dense views used by the vectorized code paths.
    @cached_property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @cached_property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @cached_property
    def a_vec(self) -> np.ndarray:
        return np.array([t.a for t in self.terms])

    @cached_property
    def b_vec(self) -> np.ndarray:
        return np.array([t.b for t in self.terms])

    @cached_property
    def A(self) -> np.ndarray:
        rows = self.constraints.linear_rows
        return np.array([r.coeff_x for r in rows]).reshape(len(rows), self.m)

    @cached_property
    def B(self) -> np.ndarray:
        rows = self.constraints.linear_rows
        return np.array([r.coeff_y for r in rows]).reshape(len(rows), self.m)

    @cached_property
    def D(self) -> np.ndarray:
        return np.array([r.rhs for r in self.constraints.linear_rows])

    @cached_property
    def alpha(self) -> np.ndarray:
        rows = self.constraints.bilinear_budget_rows
        return np.array([r.alpha for r in rows]).reshape(len(rows), self.m)

    @cached_property
    def budget_rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.constraints.bilinear_budget_rows])


# ---------------------------------------------------------------------------
# Evaluation and feasibility
# ---------------------------------------------------------------------------


def _as_point(problem: SorProblem, y, x) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape[-1:] != (problem.m,) or x.shape[-1:] != (problem.m,):
        raise DimensionMismatch(f"y and x must have trailing length {problem.m}")
    return y, x


def term_values(problem: SorProblem, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate every g_ti and h_ti.

    Parameters
    ----------
    x : ndarray, shape (..., m)

    Returns
    -------
    G, H : ndarray, shape (T, ..., m)
    """
    x = np.asarray(x, dtype=float)
    G = np.empty((problem.T,) + x.shape)
    H = np.empty_like(G)
    for t, term in enumerate(problem.terms):
        for i in range(problem.m):
            G[t, ..., i] = term.g[i](x[..., i])
            H[t, ..., i] = term.h[i](x[..., i])
    return G, H


def eval_sor_batch(problem: SorProblem, y, x) -> np.ndarray:
    """Vectorized objective over a batch of points of shape (n, m)."""
    y, x = _as_point(problem, y, x)
    G, H = term_values(problem, x)
    num = problem.a_vec.reshape((-1,) + (1,) * (x.ndim - 1)) + np.sum(y * G, axis=-1)
    den = problem.b_vec.reshape((-1,) + (1,) * (x.ndim - 1)) + np.sum(y * H, axis=-1)
    bad = den <= 0
    if np.any(bad):
        t = int(np.argwhere(bad)[0][0])
        raise NonPositiveDenominator(t, float(den[bad][0]))
    return problem.constant + np.sum(num / den, axis=0)


def eval_sor(problem: SorProblem, y, x) -> float:
    """Exact objective at one point. Does not check the constraint rows."""
    y, x = _as_point(problem, y, x)
    if y.ndim != 1:
        raise DimensionMismatch("eval_sor expects a single point")
    return float(eval_sor_batch(problem, y, x))


def row_activity(problem: SorProblem, y, x) -> tuple[np.ndarray, np.ndarray]:
    """Left-hand sides of the linear rows and of the budget rows."""
    y, x = _as_point(problem, y, x)
    lin = x @ problem.A.T + y @ problem.B.T
    bud = (y * x) @ problem.alpha.T
    return lin, bud


def is_feasible(problem: SorProblem, y, x, tol: float = FEAS_TOL) -> bool:
    """Box, linear-row and budget-row feasibility with an absolute row tolerance."""
    y, x = _as_point(problem, y, x)
    if y.ndim != 1:
        raise DimensionMismatch("is_feasible expects a single point")
    if np.any((y != 0) & (y != 1)):
        return False
    if np.any(x < problem.lo - tol) or np.any(x > problem.hi + tol):
        return False
    lin, bud = row_activity(problem, y, x)
    return bool(np.all(lin <= problem.D + tol) and np.all(bud <= problem.budget_rhs + tol))


def feasible_mask(problem: SorProblem, y, x, tol: float = FEAS_TOL) -> np.ndarray:
    """Batched version of :func:`is_feasible` for arrays of shape (n, m)."""
    y, x = _as_point(problem, y, x)
    ok = np.all((x >= problem.lo - tol) & (x <= problem.hi + tol), axis=-1)
    ok &= np.all((y == 0) | (y == 1), axis=-1)
    lin, bud = row_activity(problem, y, x)
    ok &= np.all(lin <= problem.D + tol, axis=-1)
    ok &= np.all(bud <= problem.budget_rhs + tol, axis=-1)
    return ok


# ---------------------------------------------------------------------------
# Assumption certificates
# ---------------------------------------------------------------------------


class A2Status(str, enum.Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class AssumptionReport:
    """Certified quantities used by the bounds, builders and solvers.

    Attributes
    ----------
    denom_lower : ndarray, shape (T,)
        Lower bounds on every attainable denominator.
    a1_positive : bool
        True when all ``denom_lower`` are strictly positive.
    lip_g, lip_h : ndarray, shape (T, m)
        Lipschitz constants of the numerator and denominator terms.
    a2_sufficient : A2Status
        Whether lowering x is certified to keep feasibility.
    ratio_upper : ndarray, shape (T,)
        Upper bounds on the absolute value of each ratio.
    num_range : ndarray, shape (T, 2)
        Interval enclosing every attainable numerator.
    """

    denom_lower: np.ndarray
    a1_positive: bool
    lip_g: np.ndarray
    lip_h: np.ndarray
    a2_sufficient: A2Status
    ratio_upper: np.ndarray
    num_range: np.ndarray


def _a2_search(problem: SorProblem, draws: int = 400, seed: int = 0) -> A2Status:
    """Look for a feasible point whose lowered copy is infeasible."""
    rng = np.random.default_rng(seed)
    lo, hi = problem.lo, problem.hi
    y = rng.integers(0, 2, size=(draws, problem.m)).astype(float)
    x = lo + rng.random((draws, problem.m)) * (hi - lo)
    ok = feasible_mask(problem, y, x)
    for yy, xx in zip(y[ok], x[ok]):
        shrink = lo + rng.random((8, problem.m)) * (xx - lo)
        cand = np.vstack([lo[None, :], shrink])
        if not np.all(feasible_mask(problem, np.broadcast_to(yy, cand.shape), cand)):
            return A2Status.VIOLATED
    return A2Status.UNKNOWN


def check_assumptions(problem: SorProblem) -> AssumptionReport:
    """Interval certificates for positivity, Lipschitz constants and A2."""
    T, m = problem.T, problem.m
    lip_g = np.zeros((T, m))
    lip_h = np.zeros((T, m))
    denom_lower = np.zeros(T)
    num_range = np.zeros((T, 2))
    for t, term in enumerate(problem.terms):
        dl = term.b
        nlo = nhi = term.a
        for i in range(m):
            lo, hi = problem.lower[i], problem.upper[i]
            lip_g[t, i] = term.g[i].lipschitz(lo, hi)
            lip_h[t, i] = term.h[i].lipschitz(lo, hi)
            hmin, _ = term.h[i].value_range(lo, hi)
            gmin, gmax = term.g[i].value_range(lo, hi)
            dl += min(0.0, hmin)
            nlo += min(0.0, gmin)
            nhi += max(0.0, gmax)
        denom_lower[t] = dl
        num_range[t] = (nlo, nhi)
    with np.errstate(divide="ignore"):
        ratio_upper = np.where(
            denom_lower > 0, np.max(np.abs(num_range), axis=1) / np.where(denom_lower > 0, denom_lower, 1.0), np.inf
        )
    if np.all(problem.A >= 0) and np.all(problem.alpha >= 0):
        a2 = A2Status.HOLDS
    else:
        a2 = _a2_search(problem)
    return AssumptionReport(
        denom_lower=denom_lower,
        a1_positive=bool(np.all(denom_lower > 0)),
        lip_g=lip_g,
        lip_h=lip_h,
        a2_sufficient=a2,
        ratio_upper=ratio_upper,
        num_range=num_range,
    )
