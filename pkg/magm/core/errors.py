"""
Exception hierarchy for magm.

Every error carries keyword context so callers (and the CLI) can report it
without parsing the message.
"""

from typing import Any, Dict


class MagmError(Exception):
    """Base class for all magm errors."""

    exit_code = 3

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.context: Dict[str, Any] = context

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{base} ({details})"


class InvalidInputError(MagmError, ValueError):
    """Input data or parameters violate an operation's preconditions."""

    exit_code = 2


class UnsupportedOperationError(InvalidInputError):
    """The operation is not defined for this kind of input."""


class IngestionError(InvalidInputError):
    """Raw CSV data cannot be aligned into a time-series table."""


class NumericError(MagmError, ArithmeticError):
    """A numerical routine failed (no convergence, NaN, singular system)."""


class ResourceLimitError(MagmError):
    """A dense construction would exceed its configured size cap."""

    def __init__(self, message: str, requested: int, limit: int, **context: Any):
        super().__init__(message, requested=requested, limit=limit, **context)
        self.requested = requested
        self.limit = limit


class SearchFailureError(MagmError):
    """A bracketing search did not reach its target."""


class ExperimentAbortedError(MagmError):
    """Too many runs of an experiment failed."""
