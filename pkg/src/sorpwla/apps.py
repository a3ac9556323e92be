"""Application instances: facility location with spending (MCP) and joint
assortment and pricing (A&P), their conversion to sum-of-ratios form, random
generators with named presets, and sample average approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    BudgetRow,
    ConstraintSet,
    ExpAffine,
    LinearRow,
    LinExpAffine,
    RatioTerm,
    SorProblem,
    Zero,
    cardinality_row,
)
from .errors import InvariantViolated, RejectionOverflow, UnsupportedFamily

BUDGET_FORMS = ("coupled", "uncoupled")


def _matrix(v, T, m, what):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (T, m):
        raise InvariantViolated(f"{what} must have shape ({T}, {m})")
    return tuple(tuple(float(x) for x in row) for row in arr)


def _vector(v, n, what):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise InvariantViolated(f"{what} must have length {n}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class McpInstance:
    """Facility location where opened sites also choose a spending level.

    Customer segment ``t`` (weight ``q[t]``) picks site ``i`` with logit
    utility ``eta[t][i] * x_i + kappa[t][i]`` against a competitor of
    exponentiated utility ``Uc[t]``.

    Attributes
    ----------
    budget_form : {"coupled", "uncoupled"}
        ``coupled`` charges spending of opened sites only (``sum y_i x_i <= C``);
        ``uncoupled`` uses ``sum x_i <= C``.
    """

    m: int
    T: int
    q: tuple
    Uc: tuple
    eta: tuple
    kappa: tuple
    lower: tuple
    upper: tuple
    budget: float
    cardinality: float
    budget_form: str = "coupled"
    name: str = ""

    def __post_init__(self):
        m, T = int(self.m), int(self.T)
        object.__setattr__(self, "q", _vector(self.q, T, "q"))
        object.__setattr__(self, "Uc", _vector(self.Uc, T, "Uc"))
        object.__setattr__(self, "eta", _matrix(self.eta, T, m, "eta"))
        object.__setattr__(self, "kappa", _matrix(self.kappa, T, m, "kappa"))
        object.__setattr__(self, "lower", _vector(self.lower, m, "lower"))
        object.__setattr__(self, "upper", _vector(self.upper, m, "upper"))
        if any(v <= 0 for v in self.q) or any(v <= 0 for v in self.Uc):
            raise InvariantViolated("segment weights and competitor utilities must be positive")
        if any(v <= 0 for row in self.eta for v in row):
            raise InvariantViolated("spending sensitivities must be positive")
        if self.budget_form not in BUDGET_FORMS:
            raise InvariantViolated(f"unknown budget form {self.budget_form!r}")


@dataclass(frozen=True)
class ApInstance:
    """Joint assortment and pricing under (mixed) logit demand.

    Product ``i`` sold at price ``x_i`` has utility
    ``eta[t][i] * x_i + kappa[t][i]`` in sample ``t``; the no-purchase
    utility is zero. Budget: ``sum alpha_i y_i x_i <= budget``.
    """

    m: int
    T: int
    eta: tuple
    kappa: tuple
    lower: tuple
    upper: tuple
    alpha: tuple
    budget: float
    cardinality: float
    weight: float = 1.0
    name: str = ""

    def __post_init__(self):
        m, T = int(self.m), int(self.T)
        object.__setattr__(self, "eta", _matrix(self.eta, T, m, "eta"))
        object.__setattr__(self, "kappa", _matrix(self.kappa, T, m, "kappa"))
        object.__setattr__(self, "lower", _vector(self.lower, m, "lower"))
        object.__setattr__(self, "upper", _vector(self.upper, m, "upper"))
        object.__setattr__(self, "alpha", _vector(self.alpha, m, "alpha"))
        if any(v >= 0 for row in self.eta for v in row):
            raise InvariantViolated("price sensitivities must be negative")
        if any(a < 0.5 or a > 1.0 for a in self.alpha):
            raise InvariantViolated("budget weights must lie in [0.5, 1]")
        if self.weight <= 0:
            raise InvariantViolated("sample weight must be positive")


# ---------------------------------------------------------------------------
# Conversion to sum-of-ratios form
# ---------------------------------------------------------------------------


def mcp_to_sor(inst: McpInstance) -> SorProblem:
    """Simplified form: captured demand ``sum_t q_t - sum_t q_t Uc_t / den_t``.

    Each ratio has a zero numerator term, offset ``a_t = -q_t Uc_t`` and
    denominator ``Uc_t + sum_i y_i exp(eta_ti x_i + kappa_ti)``; the constant
    ``sum_t q_t`` is carried by the problem.
    """
    m = inst.m
    terms = []
    for t in range(inst.T):
        terms.append(
            RatioTerm(
                a=-inst.q[t] * inst.Uc[t],
                b=inst.Uc[t],
                g=[Zero()] * m,
                h=[ExpAffine(1.0, inst.eta[t][i], inst.kappa[t][i]) for i in range(m)],
            )
        )
    linear = [cardinality_row(m, inst.cardinality)]
    budget = []
    if inst.budget_form == "coupled":
        budget.append(BudgetRow((1.0,) * m, inst.budget))
    else:
        linear.append(LinearRow((1.0,) * m, (0.0,) * m, inst.budget))
    return SorProblem(
        m=m,
        T=inst.T,
        lower=inst.lower,
        upper=inst.upper,
        terms=terms,
        constraints=ConstraintSet(linear, budget),
        constant=float(sum(inst.q)),
        name=inst.name,
    )


def mcp_captured_demand(inst: McpInstance, y, x) -> float:
    """Direct captured-demand evaluation ``sum_t q_t S_t / (Uc_t + S_t)``."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    total = 0.0
    for t in range(inst.T):
        s = float(np.sum(y * np.exp(np.asarray(inst.eta[t]) * x + np.asarray(inst.kappa[t]))))
        total += inst.q[t] * s / (inst.Uc[t] + s)
    return total


def ap_to_sor(inst: ApInstance) -> SorProblem:
    """Expected revenue ``sum_t w * sum_i y_i x_i e_ti / (1 + sum_i y_i e_ti)``."""
    m = inst.m
    # a sample weight w scales the numerator: w x e^{u} = x e^{u + ln w}
    shift = float(np.log(inst.weight))
    terms = []
    for t in range(inst.T):
        g = [LinExpAffine(inst.eta[t][i], inst.kappa[t][i] + shift) for i in range(m)]
        h = [ExpAffine(1.0, inst.eta[t][i], inst.kappa[t][i]) for i in range(m)]
        terms.append(RatioTerm(a=0.0, b=1.0, g=g, h=h))
    return SorProblem(
        m=m,
        T=inst.T,
        lower=inst.lower,
        upper=inst.upper,
        terms=terms,
        constraints=ConstraintSet([cardinality_row(m, inst.cardinality)], [BudgetRow(inst.alpha, inst.budget)]),
        name=inst.name,
    )


def ap_revenue(inst: ApInstance, y, x) -> float:
    """Direct expected-revenue evaluation."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    total = 0.0
    for t in range(inst.T):
        e = y * np.exp(np.asarray(inst.eta[t]) * x + np.asarray(inst.kappa[t]))
        total += inst.weight * float(np.sum(x * e)) / (1.0 + float(np.sum(e)))
    return total


def instance_to_sor(inst) -> SorProblem:
    if isinstance(inst, McpInstance):
        return mcp_to_sor(inst)
    if isinstance(inst, ApInstance):
        return ap_to_sor(inst)
    raise UnsupportedFamily(f"unsupported instance type {type(inst).__name__}")


# ---------------------------------------------------------------------------
# Random generation and presets
# ---------------------------------------------------------------------------


def gen_mcp(T: int, m: int, C: float, M: float, seed: int, budget_form: str = "coupled") -> McpInstance:
    """Random facility-location instance.

    Draws ``eta ~ U(0.5, 1.5)``, ``kappa ~ U(-1, 1)``, ``Uc ~ U(2, 10)``; uses
    ``q_t = 1/T`` and spending bounds ``[0, 2C/M]``.
    """
    rng = np.random.default_rng(seed)
    eta = rng.uniform(0.5, 1.5, size=(T, m))
    kappa = rng.uniform(-1.0, 1.0, size=(T, m))
    Uc = rng.uniform(2.0, 10.0, size=T)
    return McpInstance(
        m=m, T=T, q=np.full(T, 1.0 / T), Uc=Uc, eta=eta, kappa=kappa,
        lower=np.zeros(m), upper=np.full(m, 2.0 * C / M), budget=C, cardinality=M,
        budget_form=budget_form, name=f"mcp-T{T}-m{m}-C{_num(C)}-M{_num(M)}-s{seed}",
    )


def gen_ap(T: int, m: int, C: float, M: float, seed: int) -> ApInstance:
    """Random assortment-and-pricing instance.

    Draws ``eta ~ U(-1.5, -0.5)``, ``kappa ~ U(0, 2)``, ``alpha ~ U(0.5, 1)``;
    price bounds ``[0, 3]``.
    """
    rng = np.random.default_rng(seed)
    eta = rng.uniform(-1.5, -0.5, size=(T, m))
    kappa = rng.uniform(0.0, 2.0, size=(T, m))
    alpha = rng.uniform(0.5, 1.0, size=m)
    return ApInstance(
        m=m, T=T, eta=eta, kappa=kappa, lower=np.zeros(m), upper=np.full(m, 3.0),
        alpha=alpha, budget=C, cardinality=M, name=f"ap-T{T}-m{m}-C{_num(C)}-M{_num(M)}-s{seed}",
    )


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else str(v)


def _grid(T_values, rows):
    out = []
    for T in T_values:
        for m, Cs, Ms in rows:
            for C in Cs:
                for M in Ms:
                    out.append((T, m, C, M))
    return out


_SMALL = [(50, (20, 30), (16, 25)), (100, (40, 60), (33, 50))]
_LARGE = [(200, (80, 120), (66, 100)), (500, (200, 300), (166, 250)), (1000, (400, 600), (333, 500))]
_AP2 = [
    (10, (4, 6), (3, 5)), (20, (8, 12), (6, 10)), (50, (20, 30), (16, 25)),
    (70, (28, 42), (23, 35)), (100, (40, 60), (33, 50)), (200, (80, 120), (66, 100)),
]

#: Named benchmark sizes (family, T, m, C, M).
PRESETS: dict[str, tuple[str, int, int, float, float]] = {}
for _T, _m, _C, _M in _grid((5, 10, 100), _SMALL) + _grid((10,), _LARGE):
    PRESETS.setdefault(f"mcp-T{_T}-m{_m}-C{_C}-M{_M}", ("mcp", _T, _m, _C, _M))
for _T, _m, _C, _M in _grid((2,), _AP2) + _grid((5,), _AP2[:3] + _AP2[4:5]):
    PRESETS.setdefault(f"ap-T{_T}-m{_m}-C{_C}-M{_M}", ("ap", _T, _m, _C, _M))

def parse_preset(name: str) -> tuple[str, int, int, float, float]:
    """Look up a named preset such as ``"mcp-T5-m50-C20-M16"``."""
    if name in PRESETS:
        return PRESETS[name]
    raise UnsupportedFamily(f"unknown preset {name!r}")


def generate(family: str, T: int, m: int, C: float, M: float, seed: int, **kw):
    if family == "mcp":
        return gen_mcp(T, m, C, M, seed, **kw)
    if family == "ap":
        return gen_ap(T, m, C, M, seed)
    raise UnsupportedFamily(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# Sample average approximation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dist:
    """Parameter distribution: ``("uniform", a, b)`` or ``("normal", mu, sigma)``."""

    kind: str
    p1: float
    p2: float

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise InvariantViolated(f"unknown distribution {self.kind!r}")
        if self.kind == "uniform" and not self.p1 < self.p2:
            raise InvariantViolated("uniform needs a < b")
        if self.kind == "normal" and not self.p2 > 0:
            raise InvariantViolated("normal needs sigma > 0")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.p1, self.p2, size=size)
        return rng.normal(self.p1, self.p2, size=size)


@dataclass(frozen=True)
class StochasticSpec:
    """Random-utility model to be replaced by T i.i.d. samples.

    ``eta`` and ``kappa`` may be a single :class:`Dist` shared by all items or
    a sequence with one entry per item. Sensitivity draws with the wrong sign
    for the family are rejected and redrawn.

    Attributes
    ----------
    average : bool
        Scale each sample by ``1/T`` so the objective estimates the
        expectation; the default keeps the plain sum over samples.
    """

    family: str
    m: int
    eta: object
    kappa: object
    lower: tuple
    upper: tuple
    budget: float
    cardinality: float
    competitor_utility: float = 5.0
    alpha: tuple | None = None
    average: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("mcp", "ap"):
            raise UnsupportedFamily(f"unknown family {self.family!r}")

    def _per_item(self, d) -> list[Dist]:
        if isinstance(d, Dist):
            return [d] * self.m
        d = list(d)
        if len(d) != self.m:
            raise InvariantViolated("per-item distributions must have length m")
        return d


MAX_REJECTIONS = 1_000_000


def saa_sample(spec: StochasticSpec, T: int, seed: int | None = None):
    """Draw ``T`` parameter samples and build the sampled instance."""
    if T < 1:
        raise InvariantViolated("T must be positive")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    m = spec.m
    sign = 1.0 if spec.family == "mcp" else -1.0
    eta = np.empty((T, m))
    rejected = 0
    for i, d in enumerate(spec._per_item(spec.eta)):
        col = d.draw(rng, T)
        bad = col * sign <= 0
        while np.any(bad):
            rejected += int(bad.sum())
            if rejected > MAX_REJECTIONS:
                raise RejectionOverflow("too many sign-violating draws")
            col[bad] = d.draw(rng, int(bad.sum()))
            bad = col * sign <= 0
        eta[:, i] = col
    kappa = np.column_stack([d.draw(rng, T) for d in spec._per_item(spec.kappa)])
    if spec.family == "mcp":
        q = np.full(T, 1.0 / T if spec.average else 1.0)
        return McpInstance(
            m=m, T=T, q=q, Uc=np.full(T, spec.competitor_utility), eta=eta, kappa=kappa,
            lower=spec.lower, upper=spec.upper, budget=spec.budget, cardinality=spec.cardinality,
            name=f"saa-mcp-T{T}",
        )
    alpha = spec.alpha if spec.alpha is not None else (1.0,) * m
    return ApInstance(
        m=m, T=T, eta=eta, kappa=kappa, lower=spec.lower, upper=spec.upper, alpha=alpha,
        budget=spec.budget, cardinality=spec.cardinality, weight=1.0 / T if spec.average else 1.0,
        name=f"saa-ap-T{T}",
    )
