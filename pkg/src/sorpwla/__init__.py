"""Piecewise-linear approximation toolkit for binary-continuous sum-of-ratios programs."""

from .core import (
    Affine,
    A2Status,
    AssumptionReport,
    BudgetRow,
    ConstraintSet,
    ExpAffine,
    LinearRow,
    LinExpAffine,
    PiecewiseLinear,
    RatioTerm,
    SorProblem,
    Zero,
    cardinality_row,
    check_assumptions,
    eval_sor,
    is_feasible,
)
from .pwla import (
    Discretization,
    LevelAssignment,
    discretize,
    eval_approx,
    lemma1_gap,
    levels_from_x,
    snap,
    x_from_levels,
)
from .solver import BnbConfig, Solution, bb_solve, oa_solve, subgradient_cut

__all__ = [
    "Affine", "A2Status", "AssumptionReport", "BudgetRow", "ConstraintSet", "ExpAffine", "LinearRow",
    "LinExpAffine", "PiecewiseLinear", "RatioTerm", "SorProblem", "Zero", "cardinality_row",
    "check_assumptions", "eval_sor", "is_feasible", "Discretization", "LevelAssignment", "discretize",
    "eval_approx", "lemma1_gap", "levels_from_x", "snap", "x_from_levels", "BnbConfig", "Solution",
    "bb_solve", "oa_solve", "subgradient_cut",
]
