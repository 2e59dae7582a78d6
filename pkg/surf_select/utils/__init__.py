"""Utility modules for surf-select."""
from .errors import (
    ErrorCategory,
    SurfError,
    ValidationError,
    InputFileError,
    TaxonomyError,
    DegenerateResponseError,
    FoldAssignmentError,
    StratumTooSmallError,
    NumericalError,
    SubsampleFailureError,
    ScenarioError,
    handle_error,
)
from .validation import (
    as_design_matrix,
    as_response,
    check_rows_match,
    sanitize_column_name,
    parse_column_list,
    ensure_parent_directory,
)

__all__ = [
    # Errors
    "ErrorCategory",
    "SurfError",
    "ValidationError",
    "InputFileError",
    "TaxonomyError",
    "DegenerateResponseError",
    "FoldAssignmentError",
    "StratumTooSmallError",
    "NumericalError",
    "SubsampleFailureError",
    "ScenarioError",
    "handle_error",
    # Validation
    "as_design_matrix",
    "as_response",
    "check_rows_match",
    "sanitize_column_name",
    "parse_column_list",
    "ensure_parent_directory",
]
