"""Exception types shared across the package."""


class Factorial2kError(Exception):
    """Base class for all package-specific errors."""


class EmptyCellError(Factorial2kError):
    """A treatment cell has no units, so cell means are undefined."""


class SingletonCellError(Factorial2kError):
    """A treatment cell has a single unit and within-cell variances were requested."""


class ParseError(Factorial2kError):
    """Malformed input data (non-binary factor value, missing column, bad number)."""


class InvalidMassError(Factorial2kError):
    """A joint weighting vector is negative or does not sum to one."""


class DimensionMismatchError(Factorial2kError):
    """Inputs disagree on the number of factors or cells."""


class RankDeficientError(Factorial2kError):
    """A regression design matrix is not of full column rank."""


class IdentityViolationError(Factorial2kError):
    """A numeric identity that should hold exactly failed beyond tolerance.

    Signals an implementation bug (or catastrophic conditioning), not a
    property of the data.
    """


class TooManyAssignmentsError(Factorial2kError):
    """Exhaustive enumeration of assignments would exceed the guard limit."""


class EstimatorFailureError(Factorial2kError):
    """An estimator failed on one or more enumerated assignments."""

    def __init__(self, message, failures=0):
        super().__init__(message)
        self.failures = failures
