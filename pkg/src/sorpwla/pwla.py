"""Uniform-grid discretization of the continuous variables.

Each ``x_i`` is restricted to ``l_i + Delta_i * level_i`` with
``level_i in {0, ..., K}``. Every univariate term is replaced by its chord
interpolant, which is exact at grid points, so the approximate objective at a
grid assignment equals the true objective there.

Internally a per-item *state* index ``s in {0, ..., K+1}`` is used: ``s = 0``
means the item is not selected (``y_i = 0``, level 0) and ``s >= 1`` means it
is selected at level ``s - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import SorProblem, term_values
from .errors import DimensionMismatch, InvariantViolated, NonPositiveDenominator, OutOfBounds


@dataclass(frozen=True, eq=False)
class Discretization:
    """Grid widths, chord slopes and anchor values for one K.

    Attributes
    ----------
    K : int
        Number of equal pieces per variable.
    delta : ndarray, shape (m,)
        Piece widths ``(u_i - l_i) / K``.
    slope_g, slope_h : ndarray, shape (T, m, K)
        Chord slopes of the numerator and denominator terms.
    g_at_l, h_at_l : ndarray, shape (T, m)
        Term values at the lower bounds.
    lower, upper : ndarray, shape (m,)
        Box bounds copied from the problem.
    """

    K: int
    delta: np.ndarray
    slope_g: np.ndarray
    slope_h: np.ndarray
    g_at_l: np.ndarray
    h_at_l: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def m(self) -> int:
        return self.delta.shape[0]

    @property
    def T(self) -> int:
        return self.g_at_l.shape[0]

    @cached_property
    def grid(self) -> np.ndarray:
        """Grid points, shape (m, K+1); the last column equals the upper bound exactly."""
        k = np.arange(self.K + 1)
        pts = self.lower[:, None] + self.delta[:, None] * k[None, :]
        pts[:, -1] = self.upper
        return pts

    @cached_property
    def cum_g(self) -> np.ndarray:
        """Approximate numerator term per level, shape (T, m, K+1)."""
        return _cumulate(self.g_at_l, self.slope_g, self.delta)

    @cached_property
    def cum_h(self) -> np.ndarray:
        """Approximate denominator term per level, shape (T, m, K+1)."""
        return _cumulate(self.h_at_l, self.slope_h, self.delta)

    @cached_property
    def state_num(self) -> np.ndarray:
        """Numerator contribution per state, shape (T, m, K+2); state 0 is 'not selected'."""
        return _prepend_zero(self.cum_g)

    @cached_property
    def state_den(self) -> np.ndarray:
        """Denominator contribution per state, shape (T, m, K+2)."""
        return _prepend_zero(self.cum_h)

    @cached_property
    def state_x(self) -> np.ndarray:
        """x value per state, shape (m, K+2)."""
        return np.concatenate([self.lower[:, None], self.grid], axis=1)

    @cached_property
    def state_y(self) -> np.ndarray:
        """y value per state, shape (K+2,)."""
        y = np.ones(self.K + 2)
        y[0] = 0.0
        return y


def _cumulate(at_l: np.ndarray, slopes: np.ndarray, delta: np.ndarray) -> np.ndarray:
    steps = np.cumsum(slopes * delta[None, :, None], axis=-1)
    return np.concatenate([at_l[..., None], at_l[..., None] + steps], axis=-1)


def _prepend_zero(arr: np.ndarray) -> np.ndarray:
    return np.concatenate([np.zeros(arr.shape[:-1] + (1,)), arr], axis=-1)


@dataclass(frozen=True)
class LevelAssignment:
    """Selection and grid level per item, plus optional residuals.

    ``level[i] = k`` encodes the staircase ``z_i1 = ... = z_ik = 1`` and the
    remaining ``z`` equal to zero.
    """

    y: tuple
    level: tuple
    residual: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(int(v) for v in self.y))
        object.__setattr__(self, "level", tuple(int(v) for v in self.level))
        if self.residual is not None:
            object.__setattr__(self, "residual", tuple(float(v) for v in self.residual))
        if len(self.y) != len(self.level):
            raise DimensionMismatch("y and level lengths differ")
        if any(v not in (0, 1) for v in self.y):
            raise InvariantViolated("y must be binary")

    @classmethod
    def from_states(cls, states) -> "LevelAssignment":
        states = [int(s) for s in states]
        return cls(tuple(1 if s > 0 else 0 for s in states), tuple(max(s - 1, 0) for s in states))

    def states(self) -> tuple[int, ...]:
        return tuple(lv + 1 if yi else 0 for yi, lv in zip(self.y, self.level))


def snap(x: float, l: float, u: float, K: int) -> float:
    """Largest grid point not exceeding ``x``; ``x == u`` maps to ``u``."""
    if not l < u:
        raise InvariantViolated("need l < u")
    if x < l or x > u:
        raise OutOfBounds(f"{x} outside [{l}, {u}]")
    k = _floor_level(x, l, u, K)
    return u if k == K else l + (u - l) / K * k


def _grid_point(k: int, l: float, u: float, K: int) -> float:
    return u if k >= K else l + (u - l) / K * k


def _floor_level(x: float, l: float, u: float, K: int) -> int:
    delta = (u - l) / K
    k = min(max(int(math.floor((x - l) / delta)), 0), K)
    # correct float drift so that grid(k) <= x < grid(k+1) with grid() as in x_from_levels
    while k > 0 and _grid_point(k, l, u, K) > x:
        k -= 1
    while k < K and _grid_point(k + 1, l, u, K) <= x:
        k += 1
    return k


def discretize(problem: SorProblem, K: int) -> Discretization:
    """Chord slopes and anchors of every term on a K-piece uniform grid."""
    K = int(K)
    if K < 1:
        raise InvariantViolated("K must be positive")
    lo, hi = problem.lo, problem.hi
    delta = (hi - lo) / K
    pts = lo[:, None] + delta[:, None] * np.arange(K + 1)[None, :]
    pts[:, -1] = hi
    G, H = term_values(problem, pts.T)  # (T, K+1, m)
    G = np.transpose(G, (0, 2, 1))
    H = np.transpose(H, (0, 2, 1))
    return Discretization(
        K=K,
        delta=delta,
        slope_g=np.diff(G, axis=-1) / delta[None, :, None],
        slope_h=np.diff(H, axis=-1) / delta[None, :, None],
        g_at_l=G[..., 0].copy(),
        h_at_l=H[..., 0].copy(),
        lower=lo.copy(),
        upper=hi.copy(),
    )


def levels_from_x(disc: Discretization, x) -> tuple[int, ...]:
    """Grid level of each coordinate (floor convention, ``u`` maps to K)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (disc.m,):
        raise DimensionMismatch("x length differs from m")
    out = []
    for i in range(disc.m):
        l, u = float(disc.lower[i]), float(disc.upper[i])
        if x[i] < l or x[i] > u:
            raise OutOfBounds(f"x[{i}] = {x[i]} outside [{l}, {u}]")
        out.append(_floor_level(float(x[i]), l, u, disc.K))
    return tuple(out)


def x_from_levels(disc: Discretization, assign: LevelAssignment) -> np.ndarray:
    """Point implied by an assignment, including residuals when present."""
    level = np.asarray(assign.level, dtype=int)
    if level.shape != (disc.m,):
        raise DimensionMismatch("level length differs from m")
    if np.any(level < 0) or np.any(level > disc.K):
        raise OutOfBounds("level outside 0..K")
    x = disc.grid[np.arange(disc.m), level].copy()
    if assign.residual is not None:
        x = x + np.asarray(assign.residual)
        if np.any(x > disc.upper):
            raise OutOfBounds("residual pushes x above the upper bound")
    return x


def eval_approx(problem: SorProblem, disc: Discretization, assign: LevelAssignment) -> float:
    """Approximate objective of an assignment.

    Without residuals the assignment must satisfy ``y_i = 0 => level_i = 0``
    and the level contributions are counted as given. With residuals the
    product semantics applies: only selected items contribute.
    """
    y = np.asarray(assign.y, dtype=float)
    level = np.asarray(assign.level, dtype=int)
    if y.shape != (disc.m,) or level.shape != (disc.m,):
        raise DimensionMismatch("assignment length differs from m")
    if np.any(level < 0) or np.any(level > disc.K):
        raise OutOfBounds("level outside 0..K")
    idx = np.arange(disc.m)
    if assign.residual is None:
        if np.any((y == 0) & (level > 0)):
            raise InvariantViolated("unselected item with positive level")
        steps_g = disc.cum_g[:, idx, level] - disc.g_at_l
        steps_h = disc.cum_h[:, idx, level] - disc.h_at_l
        num = problem.a_vec + disc.g_at_l @ y + steps_g.sum(axis=1)
        den = problem.b_vec + disc.h_at_l @ y + steps_h.sum(axis=1)
    else:
        num = problem.a_vec + disc.cum_g[:, idx, level] @ y
        den = problem.b_vec + disc.cum_h[:, idx, level] @ y
    for t in range(disc.T):
        if den[t] <= 0:
            raise NonPositiveDenominator(t, float(den[t]))
    return float(problem.constant + np.sum(num / den))


def lemma1_gap(L: float, delta: float) -> float:
    """Worst-case chord error ``L * delta`` of a Lipschitz function."""
    return float(L) * float(delta)
