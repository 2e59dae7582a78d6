"""
surf-select - Subsampling ranking and permutation-calibrated forward selection.

This package provides variable selection for exponential-family GLMs:
a LASSO frequency ranking over subsamples, forward selection against a
permutation null, taxonomy-tree augmented designs, a stability-selection
baseline and a simulation harness.
"""
from importlib.metadata import version, PackageNotFoundError

try:
    __version__ = version("surf-select")
except PackageNotFoundError:
    __version__ = "0.3.1"

from .config import Settings, get_settings

__all__ = [
    "__version__",
    "Settings",
    "get_settings",
]
