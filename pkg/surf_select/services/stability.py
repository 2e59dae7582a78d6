"""
Stability-selection baseline.

Each half-size subsample (stratified for binomial responses) fits the LASSO
path and keeps the last active set along the path with at most
q = floor(sqrt(ewv_bound * (2 * cutoff - 1) * p)) columns. Columns whose
selection frequency reaches the cutoff are selected.

Since q depends on the cutoff, `stability_select_cutoffs` fits the subsample
paths once and truncates them separately for every cutoff.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from ..models.inputs import Family, GlmSpec, StabilityConfig
from ..models.results import StabilityResult
from ..utils.errors import DegenerateResponseError, SubsampleFailureError, ValidationError
from ..utils.validation import as_design_matrix, as_response, check_rows_match
from .lasso import lasso_path
from .parallel import run_tasks, task_rng
from .ranking import MAX_SKIPPED_SHARE, subsample_indices

logger = logging.getLogger(__name__)


def _subsample_path(X, y, spec, config: StabilityConfig, strata, b: int) -> Optional[list[np.ndarray]]:
    """Active sets along the LASSO path of subsample b, or None when the subsample is skipped."""
    rng = task_rng(config.seed, b)
    idx = subsample_indices(X.shape[0], config.fraction, strata, rng)
    try:
        fit = lasso_path(X[idx], y[idx], spec, n_lambda=config.n_lambda,
                         selection="random", random_state=int(rng.integers(2 ** 31 - 1)))
    except DegenerateResponseError as e:
        logger.warning(f"Stability subsample {b} skipped: {e.message}")
        return None
    return [fit.active(k) for k in range(len(fit.path))]


def _truncate(actives: list[np.ndarray], q: int) -> np.ndarray:
    chosen = np.array([], dtype=int)
    for active in actives:
        if active.size > q:
            break
        chosen = active
    return chosen


def stability_select_cutoffs(
    X,
    y,
    spec: GlmSpec,
    cutoffs: Sequence[float],
    config: Optional[StabilityConfig] = None,
) -> dict[float, StabilityResult]:
    """
    Stability selection at several cutoffs over one set of subsample fits.

    Every cutoff gets its own budget q and so its own frequencies; the
    result for cutoff c equals `stability_select` with `cutoff=c` and the
    same seed.

    Args:
        X: n x p design
        y: Response
        spec: GLM family
        cutoffs: Frequency thresholds, each in (0.5, 1]
        config: Shared configuration (its own `cutoff` is ignored)

    Returns:
        Mapping cutoff -> StabilityResult

    Raises:
        ValidationError: If n < 4 or a cutoff's error bound allows no selection ("bound too tight for p")
    """
    config = config or StabilityConfig()
    family = Family(spec.family)
    X = as_design_matrix(X)
    y = as_response(y, family)
    check_rows_match(X, y)
    n, p = X.shape
    if n < 4:
        raise ValidationError("stability selection needs at least 4 observations", field="X")
    if not cutoffs:
        raise ValidationError("no stability cutoff given", field="cutoffs")
    per_cutoff = {float(c): config.model_copy(update={"cutoff": float(c)}) for c in cutoffs}
    budgets = {}
    for c, cfg in per_cutoff.items():
        if not 0.5 < c <= 1.0:
            raise ValidationError(f"stability cutoff {c} must lie in (0.5, 1]", field="cutoff")
        budgets[c] = cfg.max_selected(p)
        if budgets[c] < 1:
            raise ValidationError("bound too tight for p", field="ewv_bound")

    strata = y if family == Family.BINOMIAL else None
    logger.info(f"Stability selection: {config.B} subsamples, q={budgets}")
    paths = run_tasks(
        lambda b: _subsample_path(X, y, spec, config, strata, b),
        range(config.B),
        n_jobs=config.n_jobs,
    )

    skipped = sum(1 for path in paths if path is None)
    if skipped > MAX_SKIPPED_SHARE * config.B:
        raise SubsampleFailureError(skipped, config.B)
    completed = config.B - skipped

    results = {}
    for c, q in budgets.items():
        counts = np.zeros(p)
        for path in paths:
            if path is not None:
                counts[_truncate(path, q)] += 1
        frequency = counts / completed
        results[c] = StabilityResult(
            selected=[int(j) for j in np.flatnonzero(frequency >= c - 1e-12)],
            frequency=frequency,
            cutoff=c,
            q=q,
            n_completed=completed,
            n_skipped=skipped,
        )
    return results


def stability_select(X, y, spec: GlmSpec, config: Optional[StabilityConfig] = None) -> StabilityResult:
    """
    Select columns by their LASSO selection frequency over subsamples.

    Args:
        X: n x p design
        y: Response
        spec: GLM family
        config: Stability-selection configuration

    Returns:
        StabilityResult

    Raises:
        ValidationError: If n < 4 or the error bound allows no selection ("bound too tight for p")
    """
    config = config or StabilityConfig()
    return stability_select_cutoffs(X, y, spec, [config.cutoff], config)[float(config.cutoff)]
