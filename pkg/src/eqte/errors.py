"""Exception taxonomy shared across the package.

Two broad families matter to callers: :class:`ValidationError` for inputs
that are rejected before any fitting happens (CLI exit code 2) and
:class:`EstimationError` for failures during fitting or resampling
(CLI exit code 3).
"""

from __future__ import annotations


class EqteError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(EqteError):
    """Invalid input detected before estimation starts."""


class SchemaError(ValidationError):
    """A required column is missing from the input file."""


class ParseError(ValidationError):
    """A cell could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class EmptyInputError(ValidationError):
    """The input contained a header but no data rows."""


class InvalidGridError(ValidationError):
    """Probability-grid parameters are inconsistent."""


class InvalidArgumentError(ValidationError):
    """An argument violates a documented precondition."""


class DomainError(ValidationError):
    """A numeric argument lies outside the mathematical domain."""


class EstimationError(EqteError):
    """A fitting or resampling step failed."""


class SingularDesignError(EstimationError):
    """The design matrix is rank deficient."""


class SolverFailureError(EstimationError):
    """The optimizer did not certify a solution.

    ``gap`` holds the relative duality gap when one could be computed.
    """

    def __init__(self, message: str, gap: float | None = None):
        super().__init__(message)
        self.gap = gap


class SeparationError(EstimationError):
    """Logistic likelihood is unbounded (perfectly separated groups)."""


class InsufficientTailError(EstimationError):
    """Fewer than the minimum number of threshold exceedances."""


class DegenerateTailError(EstimationError):
    """All exceedances identical; the tail likelihood is degenerate."""


class SelectionFailureError(EstimationError):
    """No transition candidate could be tested."""


class TransformError(EstimationError):
    """Outcomes cannot be made positive for the power transform."""


class EstimandUndefinedError(EstimationError):
    """The requested estimand needs units that the sample lacks."""


class BootstrapFailureError(EstimationError):
    """Too many bootstrap replicates failed to estimate."""


class InternalError(EqteError):
    """An invariant the code relies on was violated; indicates a bug."""


class TailShapeWarning(UserWarning):
    """Fitted tail is not heavy (shape <= 0); extreme quantiles are bounded."""


class ConventionWarning(UserWarning):
    """Transition selection fell back to an edge-case convention."""
