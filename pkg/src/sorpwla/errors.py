"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class SorError(Exception):
    """Base class for all errors raised by the package."""


class NonPositiveDenominator(SorError):
    """A ratio denominator evaluated to a value that is not strictly positive."""

    def __init__(self, t: int, value: float | None = None):
        self.t = t
        self.value = value
        msg = f"denominator of ratio {t} is not positive"
        if value is not None:
            msg += f" (value {value!r})"
        super().__init__(msg)


class DimensionMismatch(SorError):
    """Array lengths disagree with the problem dimensions."""


class OutOfBounds(SorError):
    """A point lies outside its box bounds."""


class InvariantViolated(SorError):
    """Constructor arguments break a documented invariant."""


class UnboundedAuxiliary(SorError):
    """An auxiliary variable of a reformulation cannot be bounded."""


class MonotonicityViolated(SorError):
    """A reformulation needs increasing denominator terms but a slope is not positive."""


class NonPositiveAnchor(SorError):
    """A denominator term is not positive at its lower bound."""


class UnsupportedFamily(SorError):
    """The requested instance family is not handled by this operation."""


class UnrepresentableRow(SorError):
    """A model row cannot be written in the selected output format."""


class InfeasibleInstance(SorError):
    """No feasible assignment exists."""


class BoundDenominatorNonPositive(SorError):
    """A search-node bound needs a positive denominator lower bound and none is available."""


class NotMcpForm(SorError):
    """The problem does not have the structure required by outer approximation."""


class RejectionOverflow(SorError):
    """Truncated sampling rejected too many draws."""


class BudgetExceeded(SorError):
    """Exhaustive enumeration would exceed its configured budget."""


class NonFinite(SorError):
    """A function returned a non-finite value."""


class ParseError(SorError):
    """An instance document does not match the expected schema."""
