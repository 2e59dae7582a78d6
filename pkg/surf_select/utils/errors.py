"""
Error handling utilities for surf-select.

This module provides structured error handling:
    - SurfError: Base exception class with categorization and CLI exit codes
    - ValidationError: Invalid arguments or configuration
    - InputFileError: Unreadable or malformed input tables
    - TaxonomyError: Inconsistent lineages or leaf/column mismatches
    - DegenerateResponseError: Response with a single class or no variation
    - NumericalError: Fits whose results break a numerical contract
    - handle_error: Convert any exception into a message and exit code
"""
import logging
from enum import Enum
from typing import Optional

import pydantic

logger = logging.getLogger(__name__)


class ErrorCategory(str, Enum):
    """Error classification for structured error handling."""
    INPUT = "input_error"
    CONFIG = "config_error"
    NUMERICAL = "numerical_error"


EXIT_CODES = {
    ErrorCategory.INPUT: 2,
    ErrorCategory.CONFIG: 2,
    ErrorCategory.NUMERICAL: 3,
}


class SurfError(Exception):
    """Base exception for surf-select errors."""

    def __init__(
        self,
        message: str,
        category: ErrorCategory,
        details: Optional[dict] = None
    ):
        self.message = message
        self.category = category
        self.details = details or {}
        super().__init__(message)

    @property
    def exit_code(self) -> int:
        """CLI exit code for this error."""
        return EXIT_CODES[self.category]

    def with_stage(self, stage: str) -> "SurfError":
        """Label the pipeline stage the error was raised in."""
        self.details.setdefault("stage", stage)
        return self

    def to_error_string(self) -> str:
        """Convert to user-friendly error string."""
        base = f"Error: {self.message}"
        if self.details:
            detail_str = ", ".join(f"{k}={v}" for k, v in self.details.items())
            base += f" [{detail_str}]"
        return base


class ValidationError(SurfError):
    """Raised for invalid arguments or configuration."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(
            message,
            ErrorCategory.CONFIG,
            details={"field": field} if field else {}
        )


class InputFileError(SurfError):
    """Raised when an input table cannot be used."""

    def __init__(self, message: str, path: Optional[str] = None, **details):
        if path:
            details["path"] = path
        super().__init__(message, ErrorCategory.INPUT, details=details)


class TaxonomyError(SurfError):
    """Raised for inconsistent lineages or leaf/column mismatches."""

    def __init__(self, message: str, offending: Optional[list] = None):
        super().__init__(
            message,
            ErrorCategory.INPUT,
            details={"offending": offending} if offending else {}
        )


class DegenerateResponseError(SurfError):
    """Raised when the response carries no information to fit."""

    def __init__(self, reason: str = "degenerate response"):
        super().__init__(reason, ErrorCategory.NUMERICAL)


class FoldAssignmentError(SurfError):
    """Raised when cross-validation folds cannot be balanced."""

    def __init__(self, attempts: int):
        super().__init__(
            f"could not draw folds with both classes in every training set after {attempts} attempts",
            ErrorCategory.NUMERICAL,
            details={"attempts": attempts}
        )


class StratumTooSmallError(SurfError):
    """Raised when a stratum would contribute no observations."""

    def __init__(self, label, size: int, fraction: float):
        super().__init__(
            "stratum too small",
            ErrorCategory.INPUT,
            details={"stratum": label, "size": size, "fraction": fraction}
        )


class NumericalError(SurfError):
    """Raised when a fit violates a numerical contract."""

    def __init__(self, message: str, **details):
        super().__init__(message, ErrorCategory.NUMERICAL, details=details)


class SubsampleFailureError(SurfError):
    """Raised when too many subsample fits had to be skipped."""

    def __init__(self, skipped: int, total: int):
        super().__init__(
            f"{skipped} of {total} subsamples failed (limit is 10%)",
            ErrorCategory.NUMERICAL,
            details={"skipped": skipped, "total": total}
        )


class ScenarioError(SurfError):
    """Raised when too many simulation reps failed for a method."""

    def __init__(self, method: str, failed: int, total: int):
        super().__init__(
            f"method '{method}' failed on {failed} of {total} reps (limit is 10%)",
            ErrorCategory.NUMERICAL,
            details={"method": method, "failed": failed, "total": total}
        )


def handle_error(e: Exception, context: str = "") -> tuple[str, int]:
    """
    Convert exceptions to user-friendly error strings and exit codes.

    Args:
        e: The exception to handle
        context: Optional context string for logging

    Returns:
        Tuple of (message, exit code)
    """
    if context:
        logger.error(f"{context}: {e}")

    if isinstance(e, SurfError):
        return e.to_error_string(), e.exit_code

    if isinstance(e, pydantic.ValidationError):
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
            for err in e.errors()
        )
        return f"Error: invalid configuration: {problems}", 2

    if isinstance(e, (FileNotFoundError, PermissionError, IsADirectoryError)):
        return f"Error: {e}", 2

    if isinstance(e, OSError):
        return f"Error: I/O failure: {e}", 2

    if isinstance(e, (FloatingPointError, ArithmeticError)):
        return f"Error: numerical failure: {type(e).__name__}: {e}", 3

    try:
        import numpy as np
        if isinstance(e, np.linalg.LinAlgError):
            return f"Error: numerical failure: {e}", 3
    except ImportError:
        pass

    return f"Error: Unexpected error: {type(e).__name__}: {str(e)}", 1
