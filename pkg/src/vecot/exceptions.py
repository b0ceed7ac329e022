"""Exception and warning classes raised across the package."""


class VecotError(Exception):
    """Base class for all package errors."""


class NonSimplexRow(VecotError, ValueError):
    """A density row is negative or does not sum to one."""

    def __init__(self, row, message=None):
        self.row = int(row)
        super().__init__(message or f"density row {self.row} is not on the probability simplex")


class DuplicatePoint(VecotError, ValueError):
    """Two points share the same coordinate vector."""


class EmptyMeasure(VecotError, ValueError):
    """A measure with no points or no layers."""


class SizeMismatch(VecotError, ValueError):
    """Paired arrays have incompatible shapes."""


class TooLarge(VecotError):
    """An exhaustive enumeration would exceed its guard."""


class TooManyTies(VecotError):
    """Tie completion search would exceed its guard."""


class NumericalBreakdown(VecotError, ArithmeticError):
    """The LP solver could not produce a trustworthy answer; rescale the instance."""


class InfeasibleDemand(VecotError, ValueError):
    """A demand matrix violates the per-layer mass bound (or is not achievable)."""


class FractionalOnly(VecotError):
    """The cost-minimizing sub-partition is fractional and no integral tie completion matches.

    Attributes
    ----------
    value : float
        Optimal LP value.
    plan : ndarray of shape (T, n + 1)
        Optimal fractional assignment, column 0 is the null agent.
    """

    def __init__(self, value, plan):
        self.value = float(value)
        self.plan = plan
        super().__init__(f"optimum is fractional only (LP value {self.value:.12g})")


class DegenerateSpan(VecotError):
    """The boundary subspace has full dimension, so no adversarial vector exists."""


class InfeasiblePlan(VecotError):
    """The set of q-layer transport plans is empty."""


class ZeroMassTarget(UserWarning):
    """A pushforward target point received zero mass and was dropped."""
