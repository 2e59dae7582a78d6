"""
Permutation-calibrated forward selection.

At every step the null distribution of the largest candidate LLR is built
by permuting the rows of all candidate columns jointly (selected columns
and the response stay in place). The first candidate in ranking order
whose LLR exceeds the 1 - alpha quantile of that distribution, with a
permutation p-value of at most alpha, is added; selection stops when no
candidate qualifies.

Example:
    >>> ranking = rank_variables(X, y, spec, RankingConfig(B=50, seed=1))
    >>> result = forward_select(X, y, spec, ranking, ForwardConfig(seed=1))
    >>> [(s.variable, s.p_value) for s in result.steps]
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..models.inputs import Family, ForwardConfig, GlmSpec
from ..models.results import SelectionResult, SelectionStep, VariableRanking
from ..utils.errors import ValidationError
from ..utils.validation import as_design_matrix, as_response, check_rows_match
from .glm import candidate_deviances, fit_glm
from .parallel import run_tasks, task_rng

logger = logging.getLogger(__name__)


def quantile_upper(values, level: float) -> float:
    """
    Conservative empirical quantile: the ceil(level * m)-th smallest value.

    Args:
        values: Non-empty vector
        level: Quantile level, 0 < level < 1

    Returns:
        The order statistic at 1-based position ceil(level * m)
    """
    values = np.sort(np.asarray(values, dtype=float).ravel())
    if values.size == 0:
        raise ValidationError("cannot take a quantile of an empty vector", field="values")
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie strictly between 0 and 1", field="level")
    position = math.ceil(level * values.size - 1e-9)
    return float(values[min(max(position, 1), values.size) - 1])


def permutation_p_value(llr: float, null_stats: np.ndarray) -> float:
    """(1 + #{null >= llr}) / (n_perm + 1)."""
    return float((1 + np.sum(null_stats >= llr)) / (null_stats.size + 1))


def bonferroni_ceiling(alpha: float, p: int) -> float:
    """Upper bound -2 log(alpha / 2p) on the critical value for p candidates."""
    return -2.0 * math.log(alpha / (2.0 * p))


def _max_permuted_llr(X_base, C, y, spec, perm) -> float:
    scores = candidate_deviances(X_base, C[perm], y, spec)
    return float(np.max(scores.llr))


def null_max_llr(
    X,
    y,
    spec: GlmSpec,
    selected: Sequence[int],
    candidates: Sequence[int],
    n_perm: int,
    seed: int = 0,
    step: int = 0,
    n_jobs: int = 1,
    permutations: Optional[Sequence[np.ndarray]] = None,
) -> np.ndarray:
    """
    Draws of the largest candidate LLR under joint row permutation of the candidates.

    Args:
        X: n x p design
        y: Response
        spec: GLM family
        selected: Columns already in the model
        candidates: Columns still to test (disjoint from `selected`)
        n_perm: Number of draws
        seed: Root seed; draw d of step s uses the stream (seed, s, d)
        step: Forward-selection step index
        n_jobs: Workers for the draws
        permutations: Explicit row permutations, one per draw

    Returns:
        Vector of n_perm maximal LLR statistics
    """
    family = Family(spec.family)
    X = as_design_matrix(X)
    y = as_response(y, family)
    check_rows_match(X, y)
    selected = [int(j) for j in selected]
    candidates = [int(j) for j in candidates]
    if not candidates:
        raise ValidationError("candidate list is empty", field="candidates")
    if set(selected) & set(candidates):
        raise ValidationError("candidates overlap the selected columns", field="candidates")
    if permutations is not None and len(permutations) != n_perm:
        raise ValidationError("need one permutation per draw", field="permutations")

    n = X.shape[0]
    X_base = X[:, selected]
    C = X[:, candidates]

    def draw(d: int) -> float:
        perm = np.asarray(permutations[d]) if permutations is not None else task_rng(seed, step, d).permutation(n)
        return _max_permuted_llr(X_base, C, y, spec, perm)

    return np.array(run_tasks(draw, range(n_perm), n_jobs=n_jobs), dtype=float)


def forward_select(
    X,
    y,
    spec: GlmSpec,
    ranking: VariableRanking,
    config: Optional[ForwardConfig] = None,
) -> SelectionResult:
    """
    Forward selection over ranked candidates with permutation critical values.

    Args:
        X: n x p design
        y: Response
        spec: GLM family
        ranking: Ranking covering every column of X
        config: Selection configuration

    Returns:
        SelectionResult with the accepted steps, the terminal null
        distribution and the GLM on the selected columns
    """
    config = config or ForwardConfig()
    family = Family(spec.family)
    X = as_design_matrix(X)
    y = as_response(y, family)
    check_rows_match(X, y)
    n, p = X.shape
    order = [int(j) for j in ranking.order]
    if sorted(order) != list(range(p)):
        raise ValidationError("ranking does not cover every column exactly once", field="ranking")

    max_steps = config.resolve_max_steps(n, p)
    selected: list[int] = []
    candidates = list(order)
    steps: list[SelectionStep] = []
    flagged: set[int] = set()
    terminal_null = np.zeros(0)
    terminal_crit: Optional[float] = None
    terminal_p: Optional[float] = None
    terminal_candidate: Optional[int] = None
    hit_max_steps = False

    while candidates:
        if len(steps) >= max_steps:
            hit_max_steps = True
            logger.warning(f"Forward selection stopped at the step cap ({max_steps})")
            break
        step = len(steps)
        null = null_max_llr(X, y, spec, selected, candidates, config.n_perm,
                            seed=config.seed, step=step, n_jobs=config.n_jobs)
        crit = quantile_upper(null, 1.0 - config.alpha)
        scores = candidate_deviances(X[:, selected], X[:, candidates], y, spec)
        flagged.update(candidates[i] for i in np.flatnonzero(scores.failed))

        accepted = next(
            (i for i, value in enumerate(scores.llr)
             if value > crit and permutation_p_value(value, null) <= config.alpha),
            None,
        )
        if accepted is None:
            best = int(np.argmax(scores.llr))
            terminal_null, terminal_crit = null, crit
            terminal_candidate = candidates[best]
            terminal_p = permutation_p_value(scores.llr[best], null)
            logger.info(f"Step {step}: no candidate exceeds {crit:.4g}; stopping")
            break

        variable = candidates.pop(accepted)
        llr = float(scores.llr[accepted])
        steps.append(SelectionStep(
            variable=variable,
            llr=llr,
            critical_value=crit,
            p_value=permutation_p_value(llr, null),
            null_stats=null,
        ))
        selected.append(variable)
        logger.info(f"Step {step}: added column {variable} (LLR {llr:.4g} > {crit:.4g})")

    if terminal_crit is None and steps:
        terminal_null = steps[-1].null_stats

    final_model = fit_glm(X[:, selected], y, spec)
    return SelectionResult(
        steps=steps,
        terminal_null_stats=terminal_null,
        terminal_critical_value=terminal_crit,
        terminal_p_value=terminal_p,
        terminal_candidate=terminal_candidate,
        final_model=final_model,
        hit_max_steps=hit_max_steps,
        flagged_candidates=sorted(flagged),
    )
