"""
Unpenalized exponential-family GLMs for surf-select.

This module fits canonical-link GLMs by iteratively reweighted least squares
and computes the deviances and log-likelihood ratio statistics used by the
ranking tie-break and by forward selection.

Functions:
    fit_glm: Maximum-likelihood fit on a design submatrix
    log_likelihood_ratio: LLR statistic D of nested fits
    candidate_deviances: LLR of "base + candidate" vs "base" for many candidates at once
    predict_mean: Mean response of a fit on new rows
    prediction_error: Misclassification rate or mean squared error

Example:
    >>> import numpy as np
    >>> from surf_select.models.inputs import GlmSpec, Family
    >>> fit = fit_glm(np.arange(1.0, 5.0)[:, None], np.array([2., 4., 6., 8.]), GlmSpec())
    >>> round(fit.coefficients[0], 6)
    2.0
"""
import logging
from typing import Optional

import numpy as np
from scipy.linalg import qr
from scipy.special import expit, gammaln, xlogy
from sklearn.metrics import mean_squared_error, r2_score, zero_one_loss

from ..models.inputs import Family, GlmSpec
from ..models.results import CandidateScores, GlmFit
from ..utils.errors import NumericalError
from ..utils.validation import as_design_matrix, as_response, check_rows_match

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-8
RANK_TOL = 1e-10
COLLINEAR_TOL = 1e-10
LLR_SLACK = 1e-6
ETA_LIMIT = 50.0


def mean_from_eta(eta: np.ndarray, family: Family) -> np.ndarray:
    """Inverse canonical link."""
    if family == Family.BINOMIAL:
        return np.clip(expit(eta), PROB_CLAMP, 1.0 - PROB_CLAMP)
    if family == Family.POISSON:
        return np.exp(np.clip(eta, -ETA_LIMIT, ETA_LIMIT))
    return eta


def eta_from_mean(mu: np.ndarray, family: Family) -> np.ndarray:
    """Canonical link."""
    if family == Family.BINOMIAL:
        return np.log(mu / (1.0 - mu))
    if family == Family.POISSON:
        return np.log(mu)
    return mu


def variance(mu: np.ndarray, family: Family) -> np.ndarray:
    """Variance function; also the IRLS weight under a canonical link."""
    if family == Family.BINOMIAL:
        return mu * (1.0 - mu)
    if family == Family.POISSON:
        return mu
    return np.ones_like(mu)


def unit_deviance(y: np.ndarray, mu: np.ndarray, family: Family) -> np.ndarray:
    """Per-observation deviance contributions (broadcasts over columns of mu)."""
    if family == Family.BINOMIAL:
        return 2.0 * (xlogy(y, y / mu) + xlogy(1.0 - y, (1.0 - y) / (1.0 - mu)))
    if family == Family.POISSON:
        return 2.0 * (xlogy(y, y / mu) - (y - mu))
    return (y - mu) ** 2


def log_likelihood(y: np.ndarray, mu: np.ndarray, family: Family) -> float:
    """Log-likelihood; the gaussian variance is profiled out."""
    n = y.shape[0]
    if family == Family.BINOMIAL:
        return float(np.sum(xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)))
    if family == Family.POISSON:
        return float(np.sum(xlogy(y, mu) - mu - gammaln(y + 1.0)))
    rss = float(np.sum((y - mu) ** 2))
    if rss <= 0.0:
        return float("inf")
    return -0.5 * n * (np.log(2.0 * np.pi * rss / n) + 1.0)


def _initial_mean(y: np.ndarray, family: Family) -> np.ndarray:
    if family == Family.BINOMIAL:
        return (y + 0.5) / 2.0
    if family == Family.POISSON:
        return y + 0.1
    return y.copy()


def independent_columns(X: np.ndarray) -> np.ndarray:
    """
    Indices of a maximal set of columns independent of each other and of the intercept.

    Uses a column-pivoted QR of the centered design with tolerance
    1e-10 times the largest pivot.
    """
    k = X.shape[1]
    if k == 0:
        return np.array([], dtype=int)
    Xc = X - X.mean(axis=0)
    R, piv = qr(Xc, mode="r", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] <= 0.0:
        return np.array([], dtype=int)
    rank = int(np.sum(diag > RANK_TOL * diag[0]))
    return np.sort(piv[:rank])


def fit_glm(
    X_sub,
    y,
    spec: GlmSpec,
    max_iter: int = 50,
    tol: float = 1e-8,
    start: Optional[tuple[float, np.ndarray]] = None,
) -> GlmFit:
    """
    Fit a canonical-link GLM with intercept by IRLS.

    Args:
        X_sub: n x k design submatrix (k may be 0 for the intercept-only model)
        y: Response of length n
        spec: GLM family
        max_iter: IRLS iteration cap
        tol: Relative deviance change declaring convergence
        start: Optional (intercept, coefficients) to start from

    Returns:
        GlmFit; columns dependent on earlier ones get zero coefficients and are listed in `dropped`

    Raises:
        ValidationError: On dimension mismatch, non-finite input or invalid y
    """
    family = Family(spec.family)
    X = as_design_matrix(X_sub, name="X_sub", allow_empty=True)
    y = as_response(y, family)
    check_rows_match(X, y)
    n, k = X.shape

    keep = independent_columns(X)
    dropped = tuple(int(j) for j in np.setdiff1d(np.arange(k), keep))
    if dropped:
        logger.debug(f"Rank-deficient design: dropping columns {dropped}")
    A = np.column_stack([np.ones(n), X[:, keep]])

    if family == Family.GAUSSIAN:
        b, *_ = np.linalg.lstsq(A, y, rcond=None)
        mu = A @ b
        return _assemble(b, keep, k, y, mu, family, True, 1, dropped)

    if start is not None:
        b = np.concatenate([[start[0]], np.asarray(start[1], dtype=float)[keep]])
        eta = A @ b
        mu = mean_from_eta(eta, family)
    else:
        mu = _initial_mean(y, family)
        eta = eta_from_mean(mu, family)
        b = None
    dev = float(np.sum(unit_deviance(y, mu, family)))

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        w = variance(mu, family)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        b_new, *_ = np.linalg.lstsq(A * sw[:, None], z * sw, rcond=None)
        eta_new = A @ b_new
        mu_new = mean_from_eta(eta_new, family)
        dev_new = float(np.sum(unit_deviance(y, mu_new, family)))

        # step-halving when the full step increases the deviance
        halvings = 0
        while b is not None and dev_new > dev * (1.0 + 1e-12) + 1e-12 and halvings < 10:
            b_new = 0.5 * (b_new + b)
            eta_new = A @ b_new
            mu_new = mean_from_eta(eta_new, family)
            dev_new = float(np.sum(unit_deviance(y, mu_new, family)))
            halvings += 1

        change = abs(dev_new - dev) / (abs(dev_new) + 0.1)
        b, eta, mu, dev = b_new, eta_new, mu_new, dev_new
        if change < tol:
            converged = True
            break

    if not converged:
        logger.debug(f"IRLS did not converge in {max_iter} iterations (deviance {dev:.6g})")
    return _assemble(b, keep, k, y, mu, family, converged, iterations, dropped)


def _assemble(b, keep, k, y, mu, family, converged, iterations, dropped) -> GlmFit:
    coefficients = np.zeros(k)
    coefficients[keep] = b[1:]
    return GlmFit(
        intercept=float(b[0]),
        coefficients=coefficients,
        deviance=max(float(np.sum(unit_deviance(y, mu, family))), 0.0),
        log_likelihood=log_likelihood(y, mu, family),
        converged=converged,
        iterations=iterations,
        family=family,
        n=y.shape[0],
        dropped=dropped,
        fitted=mu,
    )


def _llr_from_deviances(dev_null: float, dev_alt: float, n: int, family: Family) -> float:
    if family == Family.GAUSSIAN:
        if dev_null <= 0.0:
            return 0.0
        if dev_alt <= 0.0:
            return float("inf")
        return n * float(np.log(dev_null / dev_alt))
    return dev_null - dev_alt


def log_likelihood_ratio(null_fit: GlmFit, alt_fit: GlmFit, n: Optional[int] = None) -> float:
    """
    Log-likelihood ratio statistic D of nested fits.

    D = 2(l_alt - l_null) for binomial and poisson; for gaussian the variance
    is profiled out and D = n log(RSS_null / RSS_alt).

    Raises:
        NumericalError: If D < -1e-6, which signals a fit that did not reach its optimum
    """
    n = null_fit.n if n is None else n
    d = _llr_from_deviances(null_fit.deviance, alt_fit.deviance, n, null_fit.family)
    if d < -LLR_SLACK:
        raise NumericalError(
            "alternative fit has a larger deviance than the nested null fit",
            llr=d
        )
    return max(d, 0.0)


def _residualize(A: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of C after projection on the columns of A, and the collinearity mask."""
    Q, _ = np.linalg.qr(A)
    resid = C - Q @ (Q.T @ C)
    resid_norm2 = np.sum(resid ** 2, axis=0)
    centered_norm2 = np.sum((C - C.mean(axis=0)) ** 2, axis=0)
    collinear = (centered_norm2 <= 0.0) | (resid_norm2 <= COLLINEAR_TOL * centered_norm2)
    return resid, collinear


def candidate_deviances(
    X_base,
    X_cand,
    y,
    spec: GlmSpec,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> CandidateScores:
    """
    Score each candidate column added alone to a base model.

    Gaussian scores come from the closed-form projection; binomial and
    poisson candidates are refit by IRLS all at once, warm-started from the
    base fit. Candidates collinear with the base score 0. Candidates whose
    batched fit breaks down are refit one at a time; if that also fails they
    score 0 and are flagged.

    Args:
        X_base: n x k base design (k may be 0)
        X_cand: n x m candidate columns
        y: Response
        spec: GLM family

    Returns:
        CandidateScores with deviance reductions, LLR statistics and failure flags
    """
    family = Family(spec.family)
    X_base = as_design_matrix(X_base, name="X_base", allow_empty=True)
    C = as_design_matrix(X_cand, name="X_cand", allow_empty=True)
    y = as_response(y, family)
    check_rows_match(X_base, y)
    check_rows_match(C, y)
    n, m = C.shape

    base = fit_glm(X_base, y, spec, max_iter=max_iter, tol=tol)
    keep = independent_columns(X_base)
    A = np.column_stack([np.ones(n), X_base[:, keep]])

    reduction = np.zeros(m)
    llr = np.zeros(m)
    failed = np.zeros(m, dtype=bool)
    if m == 0:
        return CandidateScores(reduction, llr, failed, base.deviance)

    resid, collinear = _residualize(A, C)
    active = np.flatnonzero(~collinear)

    if family == Family.GAUSSIAN:
        r = y - base.fitted
        rss0 = float(r @ r)
        num = (resid[:, active].T @ r) ** 2
        rss = np.maximum(rss0 - num / np.sum(resid[:, active] ** 2, axis=0), 0.0)
        reduction[active] = rss0 - rss
        if rss0 > 0.0:
            exact = rss <= 0.0
            stats = np.full(active.size, np.inf)
            stats[~exact] = np.maximum(n * np.log(rss0 / rss[~exact]), 0.0)
            llr[active] = stats
        return CandidateScores(reduction, llr, failed, rss0)

    b0 = np.concatenate([[base.intercept], base.coefficients[keep]])
    dev_alt, ok = _batched_irls(A, C[:, active], y, family, b0, base.deviance, max_iter, tol)

    for pos, j in enumerate(active):
        d = base.deviance - dev_alt[pos] if ok[pos] else None
        if d is None or d < -LLR_SLACK:
            d = _single_candidate(X_base, C[:, j], y, spec, base, max_iter, tol)
        if d is None:
            failed[j] = True
            logger.warning(f"Candidate column {j} could not be fitted; scoring it 0")
            continue
        reduction[j] = max(d, 0.0)
        llr[j] = reduction[j]
    return CandidateScores(reduction, llr, failed, base.deviance)


def _single_candidate(X_base, c, y, spec, base, max_iter, tol) -> Optional[float]:
    try:
        alt = fit_glm(np.column_stack([X_base, c]), y, spec, max_iter=max_iter, tol=tol)
        return log_likelihood_ratio(base, alt)
    except (np.linalg.LinAlgError, NumericalError, FloatingPointError) as e:
        logger.debug(f"Single-candidate refit failed: {e}")
        return None


def _batched_irls(
    A: np.ndarray,
    C: np.ndarray,
    y: np.ndarray,
    family: Family,
    b0: np.ndarray,
    dev0: float,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, np.ndarray]:
    """IRLS for the models [A, c_j] of every column c_j of C at once."""
    n, m0 = A.shape
    p = C.shape[1]
    if p == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    m = m0 + 1
    B = np.tile(np.concatenate([b0, [0.0]]), (p, 1))
    eta = (A @ b0)[:, None] + np.zeros((n, p))
    mu = mean_from_eta(eta, family)
    dev = np.full(p, dev0)
    ok = np.ones(p, dtype=bool)
    done = np.zeros(p, dtype=bool)
    y_col = y[:, None]

    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for _ in range(max_iter):
                W = variance(mu, family)
                Z = eta + (y_col - mu) / W
                WC = W * C
                M = np.empty((p, m, m))
                M[:, :m0, :m0] = np.einsum("ni,nj,nk->kij", A, A, W)
                cross = A.T @ WC
                M[:, :m0, m0] = cross.T
                M[:, m0, :m0] = cross.T
                M[:, m0, m0] = np.sum(WC * C, axis=0)
                rhs = np.empty((p, m))
                rhs[:, :m0] = (A.T @ (W * Z)).T
                rhs[:, m0] = np.sum(WC * Z, axis=0)
                B_new = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]

                eta_new = A @ B_new[:, :m0].T + C * B_new[:, m0]
                mu_new = mean_from_eta(eta_new, family)
                dev_new = np.sum(unit_deviance(y_col, mu_new, family), axis=0)

                for _ in range(10):
                    worse = dev_new > dev * (1.0 + 1e-12) + 1e-12
                    if not np.any(worse):
                        break
                    B_new[worse] = 0.5 * (B_new[worse] + B[worse])
                    eta_new[:, worse] = A @ B_new[worse, :m0].T + C[:, worse] * B_new[worse, m0]
                    mu_new[:, worse] = mean_from_eta(eta_new[:, worse], family)
                    dev_new[worse] = np.sum(unit_deviance(y_col, mu_new[:, worse], family), axis=0)

                # frozen columns keep their converged state
                B_new[done] = B[done]
                eta_new[:, done] = eta[:, done]
                mu_new[:, done] = mu[:, done]
                dev_new[done] = dev[done]

                change = np.abs(dev_new - dev) / (np.abs(dev_new) + 0.1)
                B, eta, mu, dev = B_new, eta_new, mu_new, dev_new
                done |= change < tol
                if np.all(done):
                    break
    except np.linalg.LinAlgError as e:
        logger.debug(f"Batched IRLS fell back to single fits: {e}")
        return np.zeros(p), np.zeros(p, dtype=bool)

    ok &= np.isfinite(dev)
    return dev, ok


def predict_mean(fit: GlmFit, X) -> np.ndarray:
    """Mean response of a fit for rows of X (columns as in the fit)."""
    X = as_design_matrix(X, allow_empty=True)
    eta = fit.intercept + X @ fit.coefficients
    return mean_from_eta(eta, fit.family)


def prediction_error(y, mu, family: Family) -> float:
    """Misclassification rate at threshold 0.5 for binomial, mean squared error otherwise."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if Family(family) == Family.BINOMIAL:
        return float(zero_one_loss(y.astype(int), (mu >= 0.5).astype(int)))
    return float(mean_squared_error(y, mu))


def explained_variance(y, mu) -> float:
    """R-squared of predictions."""
    return float(r2_score(np.asarray(y, dtype=float), np.asarray(mu, dtype=float)))
