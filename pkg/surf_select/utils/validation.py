"""
Input validation utilities for surf-select.

This module provides validation helpers shared by the engines and the CLI:
    - as_design_matrix: Coerce and check a 2-D finite design
    - as_response: Coerce and check a response vector for a family
    - check_rows_match: Dimension agreement between design and response
    - parse_column_list: Parse comma-separated column names from the CLI
    - sanitize_column_name: Validate a single column label
    - ensure_parent_directory: Create the directory an output file lives in
"""
import logging
import os
import re
from typing import Optional

import numpy as np

from .errors import ValidationError, InputFileError

logger = logging.getLogger(__name__)

# Control characters are never valid inside a column label
DANGEROUS_PATTERN = re.compile(r'[\x00-\x1f]')


def as_design_matrix(X, name: str = "X", allow_empty: bool = False) -> np.ndarray:
    """
    Coerce a design to a 2-D float array and check it is finite.

    Args:
        X: Array-like design (a 1-D input is read as a single column)
        name: Argument name used in error messages
        allow_empty: Whether a design with zero columns is acceptable

    Returns:
        2-D float64 array

    Raises:
        ValidationError: If the design is not 2-D, empty or not finite
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D matrix, got {X.ndim} dimensions", field=name)
    if X.shape[0] < 1:
        raise ValidationError(f"{name} has no rows", field=name)
    if X.shape[1] < 1 and not allow_empty:
        raise ValidationError(f"{name} has no columns", field=name)
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise ValidationError(
            f"{name} contains a non-finite value at row {bad[0]}, column {bad[1]}",
            field=name
        )
    return X


def as_response(y, family: str, name: str = "y") -> np.ndarray:
    """
    Coerce a response to a 1-D float array valid for the family.

    Args:
        y: Array-like response
        family: 'gaussian', 'binomial' or 'poisson'
        name: Argument name used in error messages

    Returns:
        1-D float64 array

    Raises:
        ValidationError: If y is not finite or outside the family's support
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 1:
        raise ValidationError(f"{name} is empty", field=name)
    if not np.all(np.isfinite(y)):
        raise ValidationError(f"{name} contains non-finite values", field=name)
    family = str(getattr(family, "value", family))
    if family == "binomial" and not np.all((y == 0) | (y == 1)):
        raise ValidationError(f"{name} must be coded 0/1 for the binomial family", field=name)
    if family == "poisson" and (np.any(y < 0) or np.any(y != np.round(y))):
        raise ValidationError(f"{name} must be non-negative integers for the poisson family", field=name)
    return y


def check_rows_match(X: np.ndarray, y: np.ndarray) -> None:
    """Raise when the design and response disagree on the number of rows."""
    if X.shape[0] != y.shape[0]:
        raise ValidationError(
            f"dimension mismatch: X has {X.shape[0]} rows but y has {y.shape[0]} entries",
            field="y"
        )


def sanitize_column_name(name: str) -> str:
    """
    Validate a column label.

    Args:
        name: Column label to validate

    Returns:
        Stripped column label

    Raises:
        ValidationError: If the label is empty or contains control characters
    """
    name = name.strip()
    if not name:
        raise ValidationError("Column name cannot be empty", field="columns")
    if DANGEROUS_PATTERN.search(name):
        raise ValidationError(f"Column name contains control characters: {name!r}", field="columns")
    return name


def parse_column_list(value: Optional[str]) -> list[str]:
    """
    Parse a comma-separated list of column names.

    Args:
        value: String such as "antibiotics,age", or None

    Returns:
        List of unique column names in input order
    """
    if value is None or not value.strip():
        return []
    seen: list[str] = []
    for part in value.split(","):
        if not part.strip():
            continue
        name = sanitize_column_name(part)
        if name not in seen:
            seen.append(name)
    return seen


def ensure_parent_directory(path: str) -> str:
    """
    Ensure the directory containing an output file exists.

    Args:
        path: Output file path

    Returns:
        Absolute path of the output file

    Raises:
        InputFileError: If the path names an existing directory
    """
    if not path:
        raise ValidationError("Output path cannot be empty", field="output")
    full_path = os.path.abspath(path)
    if os.path.isdir(full_path):
        raise InputFileError("output path is a directory", path=path)
    os.makedirs(os.path.dirname(full_path), exist_ok=True)
    return full_path
