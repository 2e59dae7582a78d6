"""
Configuration management for surf-select.

This module provides centralized run defaults using pydantic-settings,
allowing configuration via environment variables or .env files.

Environment Variables:
    All settings can be overridden with SURF_SELECT_ prefix:
    - SURF_SELECT_LOG_LEVEL: Logging level (DEBUG/INFO/WARNING/ERROR)
    - SURF_SELECT_N_JOBS: Worker count for subsample, fold, permutation and rep tasks
    - SURF_SELECT_PARALLEL_BACKEND: joblib backend (loky/threading)
    - SURF_SELECT_ALPHA: Forward-selection significance level
    - SURF_SELECT_N_PERM: Permutations per forward-selection step
    - SURF_SELECT_N_SUBSAMPLES: Subsample count B for the variable ranking
    - SURF_SELECT_OUTPUT_DIR: Directory for reports and exported designs

Example:
    >>> from surf_select.config import get_settings
    >>> settings = get_settings()
    >>> print(settings.n_perm)
    200
"""
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Run defaults with environment variable support."""

    # Logging
    log_level: str = Field(
        default="WARNING",
        description="Logging level"
    )

    # Workers
    n_jobs: int = Field(
        default=1,
        ge=1,
        description="Worker count for independent tasks"
    )
    parallel_backend: str = Field(
        default="loky",
        description="joblib backend used when n_jobs > 1"
    )

    # Forward selection
    alpha: float = Field(
        default=0.05,
        gt=0.0,
        lt=1.0,
        description="Significance level of each permutation test"
    )
    n_perm: int = Field(
        default=200,
        ge=1,
        description="Permutations per forward-selection step"
    )

    # Ranking
    n_subsamples: int = Field(
        default=250,
        ge=1,
        description="Number of subsamples B used for the frequency ranking"
    )
    subsample_fraction: float = Field(
        default=0.9,
        gt=0.0,
        lt=1.0,
        description="Fraction of observations drawn per ranking subsample"
    )
    cv_folds: int = Field(
        default=5,
        ge=2,
        description="Cross-validation folds used inside each subsample"
    )
    n_lambda: int = Field(
        default=100,
        ge=2,
        description="Length of the LASSO regularization path"
    )

    # Stability selection baseline
    stability_cutoff: float = Field(
        default=0.6,
        gt=0.5,
        le=1.0,
        description="Selection-frequency threshold for stability selection"
    )
    stability_ewv_bound: float = Field(
        default=1.0,
        gt=0.0,
        description="Bound on the expected number of false selections"
    )
    stability_subsamples: int = Field(
        default=100,
        ge=1,
        description="Number of half-subsamples for stability selection"
    )

    # Paths
    output_dir: str = Field(
        default="./surf_output",
        description="Directory for reports, metrics and exported designs"
    )

    model_config = {
        "env_prefix": "SURF_SELECT_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore"
    }


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
