from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from sorpwla.apps import ap_to_sor, gen_ap, gen_mcp, mcp_to_sor
from sorpwla.core import (
    Affine,
    BudgetRow,
    ConstraintSet,
    ExpAffine,
    LinearRow,
    LinExpAffine,
    RatioTerm,
    SorProblem,
    cardinality_row,
)

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def small_mcp(seed: int, m: int | None = None, T: int | None = None, M: int | None = None):
    """Small facility-location instance whose cardinality and budget rows both bind."""
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(2, 7))
    T = T or int(rng.integers(1, 4))
    M = M or int(rng.integers(1, max(2, m)))
    C = float(rng.uniform(0.4, 0.8)) * M
    return gen_mcp(T, m, C, M, seed)


def small_ap(seed: int, m: int | None = None, T: int | None = None, M: int | None = None):
    """Small assortment-pricing instance whose cardinality and budget rows both bind."""
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(2, 7))
    T = T or int(rng.integers(1, 4))
    M = M or int(rng.integers(1, max(2, m)))
    C = float(rng.uniform(0.3, 0.6)) * 3.0 * M
    return gen_ap(T, m, C, M, seed)


def random_generic(seed: int, m: int = 3, T: int = 2, with_rows: bool = True) -> SorProblem:
    """Mixed-function instance with positive denominators and nonnegative rows."""
    rng = np.random.default_rng(seed)
    lower = rng.uniform(0.0, 0.5, m)
    upper = lower + rng.uniform(0.5, 1.5, m)
    terms = []
    for _ in range(T):
        g = []
        h = []
        for _ in range(m):
            kind = rng.integers(0, 3)
            if kind == 0:
                g.append(Affine(rng.uniform(-0.5, 1.0), rng.uniform(-1.0, 1.0)))
            elif kind == 1:
                g.append(ExpAffine(rng.uniform(0.2, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5)))
            else:
                g.append(LinExpAffine(rng.uniform(-1.0, 0.5), rng.uniform(-0.5, 0.5)))
            h.append(ExpAffine(1.0, rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 0.5)))
        terms.append(RatioTerm(rng.uniform(0.0, 1.0), rng.uniform(0.5, 2.0), g, h))
    linear, budget = [], []
    if with_rows:
        linear.append(cardinality_row(m, max(1, m - 1)))
        linear.append(LinearRow(rng.uniform(0.0, 1.0, m), rng.uniform(0.0, 0.3, m), float(np.sum(upper)) * 0.6))
        budget.append(BudgetRow(rng.uniform(0.5, 1.0, m), float(np.sum(upper)) * 0.5))
    return SorProblem(m, T, lower, upper, terms, ConstraintSet(linear, budget), name=f"generic-{seed}")


@pytest.fixture
def tiny_mcp():
    return mcp_to_sor(small_mcp(3, m=3, T=2, M=2))


@pytest.fixture
def tiny_ap():
    return ap_to_sor(small_ap(4, m=3, T=2, M=2))
