"""
L1-penalized GLMs over a regularization path.

The solver minimizes deviance/(2n) + lambda * ||beta||_1 on standardized
columns by coordinate descent on IRLS quadratic approximations, with warm
starts along a decreasing penalty grid, sequential strong rules and a KKT
check over every excluded coordinate.

Functions:
    make_lambda_path: Geometric penalty grid starting at lambda_max
    lasso_path: Solutions along the grid
    cross_validate: K-fold deviance curve with lambda_min and lambda_1se
    active_set: Selected columns at a penalty (snapped to the grid)

Example:
    >>> fit = lasso_path(X, y, GlmSpec(family=Family.BINOMIAL))
    >>> cv = cross_validate(X, y, GlmSpec(family=Family.BINOMIAL), k=5, seed=1)
    >>> active_set(cv.fit, cv.lambda_1se)
"""
import logging
from typing import Optional

import numpy as np
from sklearn.model_selection import KFold, StratifiedKFold

from ..models.inputs import Family, GlmSpec
from ..models.results import CvResult, LambdaPath, LassoFit
from ..utils.errors import DegenerateResponseError, FoldAssignmentError, ValidationError
from ..utils.validation import as_design_matrix, as_response, check_rows_match
from .glm import eta_from_mean, mean_from_eta, unit_deviance, variance
from .parallel import run_tasks

logger = logging.getLogger(__name__)

THRESHOLD_MARGIN = 1e-10
KKT_SLACK = 1e-9
CONSTANT_TOL = 1e-12


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    constant = scale <= CONSTANT_TOL * (np.abs(center) + 1.0)
    safe = np.where(constant, 1.0, scale)
    Xs = (X - center) / safe
    Xs[:, constant] = 0.0
    return Xs, center, np.where(constant, 0.0, scale), constant


def _check_response(y: np.ndarray, family: Family) -> None:
    if family == Family.BINOMIAL and np.unique(y).size < 2:
        raise DegenerateResponseError("degenerate response")
    if family == Family.POISSON and np.sum(y) <= 0.0:
        raise DegenerateResponseError("degenerate response")


def compute_lambda_max(Xs: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which every coefficient is zero."""
    n = y.shape[0]
    return float(np.max(np.abs(Xs.T @ (y - y.mean()))) / n) if Xs.shape[1] else 0.0


def make_lambda_path(lambda_max: float, n: int, p: int, n_lambda: int = 100,
                     min_ratio: Optional[float] = None) -> LambdaPath:
    """Geometric grid from lambda_max down to lambda_max * min_ratio."""
    if min_ratio is None:
        min_ratio = 0.01 if n < p else 1e-4
    if n_lambda < 2:
        raise ValidationError("n_lambda must be at least 2", field="n_lambda")
    values = lambda_max * min_ratio ** (np.arange(n_lambda) / (n_lambda - 1))
    values[0] = lambda_max
    return LambdaPath(values=values, lambda_max=lambda_max, min_ratio=min_ratio)


def _null_intercept(y: np.ndarray, family: Family) -> float:
    """Intercept of the intercept-only model."""
    ybar = float(y.mean())
    if family == Family.BINOMIAL:
        ybar = min(max(ybar, 1e-8), 1.0 - 1e-8)
    elif family == Family.POISSON:
        ybar = max(ybar, 1e-8)
    return float(eta_from_mean(np.array([ybar]), family)[0])


def _soft_threshold(g: float, lam: float) -> float:
    if abs(g) <= lam * (1.0 + THRESHOLD_MARGIN):
        return 0.0
    return g - lam if g > 0 else g + lam


def _duplicate_mask(Xs: np.ndarray, eligible: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Eligible columns with the exact duplicates removed, keeping the first in `order`."""
    keep = eligible.copy()
    cols = np.flatnonzero(eligible)
    if cols.size < 2:
        return keep
    _, inverse = np.unique(Xs[:, cols].T, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    position = np.empty(Xs.shape[1], dtype=int)
    position[order] = np.arange(order.size)
    for group in np.unique(inverse):
        members = cols[inverse == group]
        if members.size > 1:
            first = members[np.argmin(position[members])]
            keep[members[members != first]] = False
    return keep


class _PathSolver:
    """Coordinate-descent state shared across the penalties of one path."""

    def __init__(self, Xs, y, family, order, max_sweeps, tol, record_trace):
        self.Xs = Xs
        self.y = y
        self.family = family
        self.n = y.shape[0]
        self.order = order
        self.max_sweeps = max_sweeps
        self.tol = tol
        self.record_trace = record_trace

    def objective(self, beta, b0, lam) -> float:
        mu = mean_from_eta(b0 + self.Xs @ beta, self.family)
        return float(np.sum(unit_deviance(self.y, mu, self.family))) / (2.0 * self.n) + lam * np.sum(np.abs(beta))

    def gradient(self, beta, b0) -> np.ndarray:
        mu = mean_from_eta(b0 + self.Xs @ beta, self.family)
        return self.Xs.T @ (self.y - mu) / self.n

    def _coordinate_descent(self, z, w, beta, b0, lam, working, trace) -> tuple[np.ndarray, float, bool]:
        """Weighted least-squares lasso restricted to `working` columns."""
        n = self.n
        Xs = self.Xs
        r = z - b0 - Xs @ beta
        wsum = float(np.sum(w))
        cols = [j for j in self.order if working[j]]
        xw2 = {j: float(np.dot(w, Xs[:, j] ** 2)) / n for j in cols}
        sweep_set = cols
        full_pass = True
        for _ in range(self.max_sweeps):
            max_change = 0.0
            for j in sweep_set:
                if xw2[j] <= 0.0:
                    continue
                old = beta[j]
                g = float(np.dot(w * Xs[:, j], r)) / n + xw2[j] * old
                new = _soft_threshold(g, lam) / xw2[j]
                if new != old:
                    r -= Xs[:, j] * (new - old)
                    beta[j] = new
                    max_change = max(max_change, abs(new - old))
            shift = float(np.dot(w, r)) / wsum
            if shift != 0.0:
                b0 += shift
                r -= shift
                max_change = max(max_change, abs(shift))
            if trace is not None:
                trace.append(float(np.dot(w, r ** 2)) / (2.0 * n) + lam * float(np.sum(np.abs(beta))))
            if max_change < self.tol:
                if full_pass:
                    return beta, b0, True
                sweep_set, full_pass = cols, True
            else:
                sweep_set = [j for j in cols if beta[j] != 0.0]
                full_pass = False
        return beta, b0, False

    def solve(self, beta, b0, lam, working, trace) -> tuple[np.ndarray, float, bool]:
        if self.family == Family.GAUSSIAN:
            return self._coordinate_descent(self.y, np.ones(self.n), beta, b0, lam, working, trace)

        obj = self.objective(beta, b0, lam)
        converged = False
        for _ in range(100):
            eta = b0 + self.Xs @ beta
            mu = mean_from_eta(eta, self.family)
            w = variance(mu, self.family)
            z = eta + (self.y - mu) / w
            new_beta, new_b0, inner_ok = self._coordinate_descent(z, w, beta.copy(), b0, lam, working, trace)
            new_obj = self.objective(new_beta, new_b0, lam)
            halvings = 0
            while new_obj > obj + 1e-12 * abs(obj) and halvings < 20:
                new_beta = 0.5 * (new_beta + beta)
                new_b0 = 0.5 * (new_b0 + b0)
                new_obj = self.objective(new_beta, new_b0, lam)
                halvings += 1
            change = max(float(np.max(np.abs(new_beta - beta), initial=0.0)), abs(new_b0 - b0))
            beta, b0, obj = new_beta, new_b0, new_obj
            if change < self.tol and inner_ok:
                converged = True
                break
        return beta, b0, converged


def lasso_path(
    X,
    y,
    spec: GlmSpec,
    path: Optional[LambdaPath] = None,
    n_lambda: int = 100,
    min_ratio: Optional[float] = None,
    selection: str = "cyclic",
    random_state: Optional[int] = None,
    max_sweeps: int = 1000,
    tol: float = 1e-7,
    record_trace: bool = False,
) -> LassoFit:
    """
    Fit the L1-penalized GLM along a decreasing penalty grid.

    Args:
        X: n x p design; columns are standardized internally
        y: Response
        spec: GLM family
        path: Fixed penalty grid (default: built from lambda_max)
        n_lambda: Grid length when no path is given
        min_ratio: Smallest penalty as a fraction of lambda_max
        selection: 'cyclic' (column order) or 'random' (one permutation per path)
        random_state: Seed for the 'random' coordinate order
        max_sweeps: Coordinate-descent sweeps per penalty
        tol: Coordinate-change tolerance on the standardized scale
        record_trace: Keep the per-sweep objective values

    Returns:
        LassoFit with coefficients on standardized and original scales

    Raises:
        DegenerateResponseError: If y has a single binomial class or no signal
    """
    family = Family(spec.family)
    X = as_design_matrix(X)
    y = as_response(y, family)
    check_rows_match(X, y)
    n, p = X.shape
    _check_response(y, family)

    Xs, center, scale, constant = _standardize(X)
    if path is None:
        lambda_max = compute_lambda_max(Xs, y)
        if lambda_max <= 0.0:
            raise DegenerateResponseError("degenerate response")
        path = make_lambda_path(lambda_max, n, p, n_lambda, min_ratio)

    if selection == "random":
        order = np.random.default_rng(random_state).permutation(p)
    elif selection == "cyclic":
        order = np.arange(p)
    else:
        raise ValidationError(f"unknown coordinate selection '{selection}'", field="selection")
    eligible = _duplicate_mask(Xs, ~constant, order)

    solver = _PathSolver(Xs, y, family, order, max_sweeps, tol, record_trace)
    L = len(path)
    coef_std = np.zeros((L, p))
    b0_std = np.zeros(L)
    converged = np.zeros(L, dtype=bool)
    traces: Optional[list[list[float]]] = [] if record_trace else None

    beta = np.zeros(p)
    b0 = _null_intercept(y, family)
    prev_lam = path.values[0]
    for k, lam in enumerate(path.values):
        trace: Optional[list[float]] = [] if record_trace else None
        grad = solver.gradient(beta, b0)
        strong = eligible & ((beta != 0.0) | (np.abs(grad) >= 2.0 * lam - prev_lam))
        working = strong.copy()
        ok = True
        for _ in range(100):
            beta, b0, ok = solver.solve(beta, b0, lam, working, trace)
            grad = solver.gradient(beta, b0)
            violators = eligible & ~working & (np.abs(grad) > lam + KKT_SLACK)
            if not np.any(violators):
                break
            logger.debug(f"KKT check added {int(violators.sum())} columns at lambda={lam:.4g}")
            working |= violators
        coef_std[k] = beta
        b0_std[k] = b0
        converged[k] = ok
        if traces is not None:
            traces.append(trace)
        prev_lam = lam

    if not np.all(converged):
        logger.debug(f"Coordinate descent hit the sweep cap at {int((~converged).sum())} penalties")

    safe_scale = np.where(scale > 0.0, scale, 1.0)
    coefficients = np.where(scale > 0.0, coef_std / safe_scale, 0.0)
    intercepts = b0_std - coefficients @ center
    return LassoFit(
        path=path,
        coef_standardized=coef_std,
        coefficients=coefficients,
        intercepts_standardized=b0_std,
        intercepts=intercepts,
        center=center,
        scale=scale,
        constant_columns=constant,
        family=family,
        converged=converged,
        objective_trace=traces,
    )


def active_set(fit: LassoFit, lam: float) -> np.ndarray:
    """Indices of nonzero coefficients at the grid penalty nearest to `lam` on a log scale."""
    if lam <= 0.0:
        raise ValidationError("lambda must be positive", field="lambda")
    index = int(np.argmin(np.abs(np.log(fit.path.values) - np.log(lam))))
    return fit.active(index)


def _fold_splitter(n: int, k: int, y: np.ndarray, family: Family, random_state: int):
    if family == Family.BINOMIAL and k < n:
        counts = np.bincount(y.astype(int), minlength=2)
        if counts.min() >= k:
            return StratifiedKFold(n_splits=k, shuffle=True, random_state=random_state).split(np.zeros(n), y)
    return KFold(n_splits=k, shuffle=True, random_state=random_state).split(np.zeros(n))


def _fold_deviance(X, y, spec, train, test, path, selection, random_state) -> np.ndarray:
    fit = lasso_path(X[train], y[train], spec, path=path, selection=selection, random_state=random_state)
    eta = fit.intercepts[None, :] + X[test] @ fit.coefficients.T
    mu = mean_from_eta(eta, fit.family)
    return unit_deviance(y[test][:, None], mu, fit.family)


def cross_validate(
    X,
    y,
    spec: GlmSpec,
    k: int = 5,
    seed: int = 0,
    n_jobs: int = 1,
    n_lambda: int = 100,
    selection: str = "cyclic",
    random_state: Optional[int] = None,
    max_attempts: int = 10,
) -> CvResult:
    """
    K-fold cross-validation of the lasso path with held-out deviance loss.

    Folds are stratified by class for the binomial family and redrawn (up to
    `max_attempts` times) when a training portion holds a single class.

    Args:
        X: n x p design
        y: Response
        spec: GLM family
        k: Fold count (k == n gives leave-one-out)
        seed: Seed of the fold assignment
        n_jobs: Workers for the fold fits
        n_lambda: Grid length
        selection: Coordinate order passed to every path fit
        random_state: Seed of the 'random' coordinate order

    Returns:
        CvResult with the per-penalty mean and standard error, lambda_min,
        lambda_1se and the full-data path fit

    Raises:
        ValidationError: If k < 2 or n < 2k (leave-one-out excepted)
        FoldAssignmentError: If no valid fold assignment was drawn
    """
    family = Family(spec.family)
    X = as_design_matrix(X)
    y = as_response(y, family)
    check_rows_match(X, y)
    n = X.shape[0]
    if k < 2:
        raise ValidationError("fold count must be at least 2", field="k")
    if n < 2 * k and k != n:
        raise ValidationError(f"need n >= 2k observations for {k} folds, got n={n}", field="k")

    full = lasso_path(X, y, spec, n_lambda=n_lambda, selection=selection, random_state=random_state)

    folds = None
    attempt = 0
    for attempt in range(1, max_attempts + 1):
        state = int(np.random.SeedSequence([seed, attempt - 1]).generate_state(1)[0])
        candidate = list(_fold_splitter(n, k, y, family, state))
        if family != Family.BINOMIAL or all(np.unique(y[train]).size == 2 for train, _ in candidate):
            folds = candidate
            break
        logger.debug(f"Fold draw {attempt} left a single class in a training portion; redrawing")
    if folds is None:
        raise FoldAssignmentError(max_attempts)

    losses = run_tasks(
        lambda train, test: _fold_deviance(X, y, spec, train, test, full.path, selection, random_state),
        folds,
        n_jobs=n_jobs,
    )

    per_obs = np.vstack(losses)
    mean = per_obs.mean(axis=0)
    fold_means = np.vstack([loss.mean(axis=0) for loss in losses])
    weights = np.array([loss.shape[0] for loss in losses], dtype=float)
    spread = np.sum(weights[:, None] * (fold_means - mean) ** 2, axis=0) / weights.sum()
    se = np.sqrt(spread / (len(losses) - 1))

    i_min = int(np.argmin(mean))
    threshold = mean[i_min] + se[i_min]
    i_1se = int(np.flatnonzero(mean <= threshold)[0])
    lambdas = full.path.values
    return CvResult(
        fold_count=len(losses),
        mean_cv_error=mean,
        se_cv_error=se,
        lambda_min=float(lambdas[i_min]),
        lambda_1se=float(lambdas[i_1se]),
        fit=full,
        attempts=attempt,
    )
