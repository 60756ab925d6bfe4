"""Exception hierarchy shared by every module."""


class SinglatError(Exception):
    """Base class for all library errors."""


class BudgetExceededError(SinglatError):
    """A search or enumeration exceeded its configured work budget."""


class EnumerationBudgetError(BudgetExceededError):
    """Shortest-vector enumeration visited too many nodes.

    Usually a sign of a pathologically skew basis; retry with a higher
    working precision.
    """


class RankError(SinglatError, ValueError):
    """Input vectors are linearly dependent where independence is required."""


class SurfaceError(SinglatError, ValueError):
    """A surface chart fails the screening required by the constructor."""


class RefinementStallError(SinglatError):
    """The nested construction found no admissible next level set or box."""


class BoundViolationError(SinglatError):
    """A computed escape-rate bound failed its own grid verification."""
