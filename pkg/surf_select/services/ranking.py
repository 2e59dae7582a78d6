"""
Variable ranking by subsampled LASSO selection frequency.

For each of B subsamples the cross-validated LASSO is fitted and its
active set at the chosen penalty is recorded. Columns are ranked by how
often they were selected; tied columns are placed greedily by the deviance
reduction of adding each one alone to the GLM of every column placed so
far, then by column index.
"""
import logging
from typing import Optional

import numpy as np

from ..models.inputs import Family, GlmSpec, LambdaRule, RankingConfig
from ..models.results import VariableRanking
from ..utils.errors import (
    DegenerateResponseError,
    FoldAssignmentError,
    StratumTooSmallError,
    SubsampleFailureError,
    ValidationError,
)
from ..utils.validation import as_design_matrix, as_response, check_rows_match
from .glm import candidate_deviances
from .lasso import active_set, cross_validate
from .parallel import run_tasks, task_rng

logger = logging.getLogger(__name__)

MAX_SKIPPED_SHARE = 0.10


def _allocation(size: int, fraction: float) -> int:
    """Round-half-up share of a group."""
    return int(np.floor(fraction * size + 0.5))


def subsample_indices(
    n: int,
    fraction: float,
    strata: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Draw a subsample without replacement, optionally stratified by class.

    With strata, every class contributes round(fraction * class size)
    observations, so the subsample keeps the class proportions.

    Args:
        n: Number of observations
        fraction: Proportion drawn, 0 < fraction < 1
        strata: Optional class label per observation
        rng: Generator (a fresh default generator when omitted)

    Returns:
        Sorted index array

    Raises:
        StratumTooSmallError: If a class (or the whole sample) would contribute nothing
    """
    if not 0.0 < fraction < 1.0:
        raise ValidationError("fraction must lie strictly between 0 and 1", field="fraction")
    rng = rng if rng is not None else np.random.default_rng()
    if strata is None:
        size = _allocation(n, fraction)
        if size < 1:
            raise StratumTooSmallError("all", n, fraction)
        return np.sort(rng.choice(n, size=size, replace=False))

    strata = np.asarray(strata)
    if strata.shape[0] != n:
        raise ValidationError("strata length differs from n", field="strata")
    chosen = []
    for label in np.unique(strata):
        members = np.flatnonzero(strata == label)
        size = _allocation(members.size, fraction)
        if size < 1:
            raise StratumTooSmallError(label.item() if hasattr(label, "item") else label, members.size, fraction)
        chosen.append(rng.choice(members, size=size, replace=False))
    return np.sort(np.concatenate(chosen))


def _subsample_selection(X, y, spec, config: RankingConfig, strata, b: int) -> Optional[np.ndarray]:
    rng = task_rng(config.seed, b)
    idx = subsample_indices(X.shape[0], config.fraction, strata, rng)
    order_seed = int(rng.integers(2 ** 31 - 1))
    fold_seed = int(rng.integers(2 ** 31 - 1))
    try:
        cv = cross_validate(
            X[idx], y[idx], spec,
            k=config.cv_folds,
            seed=fold_seed,
            n_lambda=config.n_lambda,
            selection="random",
            random_state=order_seed,
        )
    except (DegenerateResponseError, FoldAssignmentError) as e:
        logger.warning(f"Subsample {b} skipped: {e.message}")
        return None
    lam = cv.lambda_1se if config.lambda_rule == LambdaRule.ONE_SE else cv.lambda_min
    return active_set(cv.fit, lam)


def tie_break(
    X: np.ndarray,
    y: np.ndarray,
    spec: GlmSpec,
    frequency: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Order columns by frequency, breaking ties by deviance reduction.

    Tied columns are resolved greedily: each remaining member of the group
    is added alone to the GLM of every column already placed (all strictly
    higher-ranked columns plus the group members resolved so far), and the
    one with the largest reduction, then the smallest index, goes next.
    When more columns are placed than n - 2, only the n - 2 highest-ranked
    of them are conditioned on.

    Returns:
        (order, reduction) where reduction holds each tied column's score
        at the moment it was placed
    """
    n, p = X.shape
    limit = max(n - 2, 0)
    order: list[int] = []
    reduction = np.zeros(p)
    truncated = False
    for level in np.unique(frequency)[::-1]:
        remaining = np.flatnonzero(frequency == level).tolist()
        if len(remaining) == 1:
            order.extend(remaining)
            continue
        while remaining:
            if len(order) > limit:
                truncated = True
            base = order[:limit]
            scores = candidate_deviances(X[:, base], X[:, remaining], y, spec)
            values = np.nan_to_num(scores.deviance_reduction, nan=0.0)
            best = min(range(len(remaining)), key=lambda i: (-values[i], remaining[i]))
            column = remaining.pop(best)
            reduction[column] = values[best]
            order.append(column)
    if truncated:
        logger.warning(
            f"Tie-break conditioned on the {limit} highest-ranked columns only "
            f"(n={n} leaves no room for more)"
        )
    return np.array(order, dtype=int), reduction


def rank_variables(X, y, spec: GlmSpec, config: Optional[RankingConfig] = None) -> VariableRanking:
    """
    Rank columns by cross-validated LASSO selection frequency over subsamples.

    Args:
        X: n x p design (possibly augmented)
        y: Response
        spec: GLM family
        config: Ranking configuration

    Returns:
        VariableRanking

    Raises:
        SubsampleFailureError: If more than 10% of the subsamples were skipped
    """
    config = config or RankingConfig()
    family = Family(spec.family)
    X = as_design_matrix(X)
    y = as_response(y, family)
    check_rows_match(X, y)
    n, p = X.shape
    strata = y if config.is_stratified(family) else None

    logger.info(f"Ranking {p} columns over {config.B} subsamples (fraction {config.fraction})")
    selections = run_tasks(
        lambda b: _subsample_selection(X, y, spec, config, strata, b),
        range(config.B),
        n_jobs=config.n_jobs,
    )

    frequency = np.zeros(p, dtype=int)
    skipped = 0
    for active in selections:
        if active is None:
            skipped += 1
            continue
        frequency[active] += 1
    if skipped > MAX_SKIPPED_SHARE * config.B:
        raise SubsampleFailureError(skipped, config.B)

    order, reduction = tie_break(X, y, spec, frequency)
    logger.info(f"Ranking complete: {int((frequency > 0).sum())} columns selected at least once")
    return VariableRanking(
        order=order,
        frequency=frequency,
        n_completed=config.B - skipped,
        n_skipped=skipped,
        tie_break_reduction=reduction,
    )
