"""Approximation-error certificates and sample-size rules.

The Lipschitz-type constant ``C`` bounds how much the objective can move
when ``x`` moves by ``eps`` in the sup norm at fixed ``y``:
``|f(y, x) - f(y, x')| <= C * eps``. Snapping to a K-piece grid therefore
costs at most ``C * range / K`` at a point and ``2 C * range / K`` on the
optimal value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SorProblem, check_assumptions
from .errors import InvariantViolated, NonPositiveDenominator


@dataclass(frozen=True)
class RatioBoundTerms:
    """Ingredients of ``C`` for one ratio.

    Attributes
    ----------
    ratio_upper : float
        Bound on the absolute value of the ratio.
    denom_lower : float
        Positive lower bound on its denominator.
    lip_g_sum, lip_h_sum : float
        Sums over items of the Lipschitz constants of numerator and
        denominator terms.
    """

    ratio_upper: float
    denom_lower: float
    lip_g_sum: float
    lip_h_sum: float


@dataclass(frozen=True)
class ErrorBoundReport:
    """Constant ``C``, its per-ratio ingredients and the grid error bound.

    ``theorem1_bound`` equals ``2 * C * max_range / K_used``.
    """

    C: float
    per_t: tuple
    max_range: float
    theorem1_bound: float
    K_used: int

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "per_t": [vars(p) for p in self.per_t],
            "max_range": self.max_range,
            "theorem1_bound": self.theorem1_bound,
            "K_used": self.K_used,
        }


@dataclass(frozen=True)
class SaaSizing:
    """Sample count and grid size for an SAA guarantee.

    Attributes
    ----------
    epsilon, gamma : float
        Target accuracy and failure probability.
    Psi : float
        Width of the interval containing every sampled ratio value.
    C_star : float
        Per-sample Lipschitz-type constant.
    T_required, K_required : int
    confidence : float
        ``1 - 6 exp(-2 T eps^2 / (25 Psi))`` at ``T_required``.
    """

    epsilon: float
    gamma: float
    Psi: float
    C_star: float
    max_range: float
    T_required: int
    K_required: int
    confidence: float

    def to_dict(self) -> dict:
        return dict(vars(self))


def compute_C(problem: SorProblem, K: int = 1) -> ErrorBoundReport:
    """``C = sum_t (sum_i Lg_ti + Fbar_t sum_i Lh_ti) / Hlow_t`` from interval certificates."""
    report = check_assumptions(problem)
    if not report.a1_positive:
        t = int(np.argmin(report.denom_lower))
        raise NonPositiveDenominator(t, float(report.denom_lower[t]))
    per_t = []
    C = 0.0
    for t in range(problem.T):
        lg = float(report.lip_g[t].sum())
        lh = float(report.lip_h[t].sum())
        F, H = float(report.ratio_upper[t]), float(report.denom_lower[t])
        per_t.append(RatioBoundTerms(F, H, lg, lh))
        C += (lg + F * lh) / H
    max_range = float(np.max(problem.hi - problem.lo))
    return ErrorBoundReport(C, tuple(per_t), max_range, theorem1_bound(C, K, max_range), int(K))


def theorem1_bound(C: float, K: int, max_range: float) -> float:
    """Worst-case optimality loss ``2 C max_range / K`` of the K-grid optimum."""
    if K < 1:
        raise InvariantViolated("K must be positive")
    return 2.0 * C * max_range / K


def corollary1_gap(C: float, K: int, max_range: float) -> float:
    """Worst-case pointwise loss ``C max_range / K`` of snapping to the grid."""
    if K < 1:
        raise InvariantViolated("K must be positive")
    return C * max_range / K


def required_K(C: float, max_range: float, epsilon: float) -> int:
    """Smallest K with ``theorem1_bound <= epsilon`` (at least 1)."""
    if epsilon <= 0:
        raise InvariantViolated("epsilon must be positive")
    return max(1, math.ceil(2.0 * C * max_range / epsilon))


def saa_confidence(T: int, epsilon: float, Psi: float) -> float:
    """Probability ``1 - 6 exp(-2 T eps^2 / (25 Psi))`` of an eps-accurate SAA solution."""
    if Psi == 0:
        return 1.0
    return 1.0 - 6.0 * math.exp(-2.0 * T * epsilon**2 / (25.0 * Psi))


def saa_sizes(epsilon: float, gamma: float, Psi: float, C_star: float, max_range: float) -> SaaSizing:
    """Samples and grid pieces for an eps-accurate SAA solution with probability ``1 - gamma``.

    ``T = ceil(25 Psi ln(6/gamma) / (2 eps^2))`` (at least 1) and
    ``K = ceil(5 T C_star max_range / eps)`` (at least 1).
    """
    if not (0 < epsilon < 1 and 0 < gamma < 1):
        raise InvariantViolated("epsilon and gamma must lie in (0, 1)")
    if Psi < 0 or C_star < 0:
        raise InvariantViolated("Psi and C_star must be nonnegative")
    T = max(1, math.ceil(25.0 * Psi * math.log(6.0 / gamma) / (2.0 * epsilon**2)))
    K = max(1, math.ceil(5.0 * T * C_star * max_range / epsilon))
    return SaaSizing(epsilon, gamma, Psi, C_star, max_range, T, K, saa_confidence(T, epsilon, Psi))


def interval_psi(problem: SorProblem) -> float:
    """Width of an interval containing every ratio value, from interval certificates."""
    report = check_assumptions(problem)
    if not report.a1_positive:
        raise NonPositiveDenominator(int(np.argmin(report.denom_lower)))
    lo = np.minimum(report.num_range[:, 0], 0.0) / report.denom_lower
    hi = np.maximum(report.num_range[:, 1], 0.0) / report.denom_lower
    return float(np.max(hi) - np.min(lo))
