"""
Result containers returned by the selection engines.

The containers are plain dataclasses holding numpy arrays; they are built
once by an engine and treated as read-only afterwards.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .inputs import Family


@dataclass
class GlmFit:
    """Maximum-likelihood fit of an unpenalized GLM."""
    intercept: float
    coefficients: np.ndarray
    deviance: float
    log_likelihood: float
    converged: bool
    iterations: int
    family: Family
    n: int
    dropped: tuple[int, ...] = ()
    fitted: Optional[np.ndarray] = None

    @property
    def rank_deficient(self) -> bool:
        return len(self.dropped) > 0


@dataclass
class CandidateScores:
    """Per-candidate improvement of a base GLM by one added column."""
    deviance_reduction: np.ndarray
    llr: np.ndarray
    failed: np.ndarray
    base_deviance: float


@dataclass
class LambdaPath:
    """Decreasing grid of LASSO penalties."""
    values: np.ndarray
    lambda_max: float
    min_ratio: float

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class LassoFit:
    """Solutions of the L1-penalized GLM along a penalty path."""
    path: LambdaPath
    coef_standardized: np.ndarray
    coefficients: np.ndarray
    intercepts_standardized: np.ndarray
    intercepts: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    constant_columns: np.ndarray
    family: Family
    converged: np.ndarray
    objective_trace: Optional[list[list[float]]] = None

    def active(self, index: int) -> np.ndarray:
        """Indices of nonzero coefficients at grid position `index`."""
        return np.flatnonzero(self.coef_standardized[index] != 0.0)


@dataclass
class CvResult:
    """K-fold cross-validation curve over a fixed penalty grid."""
    fold_count: int
    mean_cv_error: np.ndarray
    se_cv_error: np.ndarray
    lambda_min: float
    lambda_1se: float
    fit: LassoFit
    attempts: int = 1

    @property
    def lambdas(self) -> np.ndarray:
        return self.fit.path.values


@dataclass
class VariableRanking:
    """Columns ordered by subsample selection frequency."""
    order: np.ndarray
    frequency: np.ndarray
    n_completed: int
    n_skipped: int = 0
    tie_break_reduction: Optional[np.ndarray] = None

    def rank_of(self, column: int) -> int:
        """Zero-based rank position of a column."""
        return int(np.flatnonzero(self.order == column)[0])


@dataclass
class SelectionStep:
    """One accepted forward-selection step."""
    variable: int
    llr: float
    critical_value: float
    p_value: float
    null_stats: np.ndarray


@dataclass
class SelectionResult:
    """Trace and final model of permutation-calibrated forward selection."""
    steps: list[SelectionStep]
    terminal_null_stats: np.ndarray
    terminal_critical_value: Optional[float]
    terminal_p_value: Optional[float]
    terminal_candidate: Optional[int]
    final_model: GlmFit
    hit_max_steps: bool = False
    flagged_candidates: list[int] = field(default_factory=list)

    @property
    def selected(self) -> list[int]:
        return [step.variable for step in self.steps]


@dataclass
class StabilityResult:
    """Stability-selection frequencies and the selected set."""
    selected: list[int]
    frequency: np.ndarray
    cutoff: float
    q: int
    n_completed: int
    n_skipped: int = 0

    def select_at(self, cutoff: float) -> list[int]:
        """Columns whose frequency, truncated at this result's q, reaches `cutoff`."""
        return [int(j) for j in np.flatnonzero(self.frequency >= cutoff - 1e-12)]


@dataclass
class ScenarioMetrics:
    """Aggregated outcome of one method over the reps of a scenario."""
    method: str
    n_reps: int
    n_failed: int
    tp_histogram: dict[int, int]
    fp_mean: float
    fp_sd: float
    selected_mean: float
    p_zero_selected: float
    error_metric: str
    train_error_mean: float
    test_error_mean: Optional[float] = None
    r2_train_mean: Optional[float] = None
    r2_test_mean: Optional[float] = None

    def to_row(self) -> dict:
        """Flat dictionary used for the metrics CSV."""
        row = {
            "method": self.method,
            "n_reps": self.n_reps,
            "n_failed": self.n_failed,
            "fp_mean": self.fp_mean,
            "fp_sd": self.fp_sd,
            "selected_mean": self.selected_mean,
            "p_zero_selected": self.p_zero_selected,
            "error_metric": self.error_metric,
            "train_error_mean": self.train_error_mean,
            "test_error_mean": self.test_error_mean,
            "r2_train_mean": self.r2_train_mean,
            "r2_test_mean": self.r2_test_mean,
        }
        for tp, count in sorted(self.tp_histogram.items()):
            row[f"tp_{tp}"] = count
        return row
