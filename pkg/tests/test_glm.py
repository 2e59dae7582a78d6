"""
Tests for unpenalized GLM fitting and candidate scoring.
"""
import numpy as np
import pytest

from surf_select.models.inputs import Family, GlmSpec
from surf_select.models.results import GlmFit
from surf_select.services.glm import (
    candidate_deviances,
    explained_variance,
    fit_glm,
    independent_columns,
    log_likelihood_ratio,
    predict_mean,
    prediction_error,
)
from surf_select.utils import NumericalError, ValidationError


def _binary_data(seed=1, n=200, p=4):
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((n, p))
    eta = 0.3 + X @ np.linspace(1.0, -0.5, p)
    y = gen.binomial(1, 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return X, y


def _count_data(seed=2, n=200, p=3):
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((n, p))
    y = gen.poisson(np.exp(0.5 + 0.4 * X[:, 0] - 0.3 * X[:, 1])).astype(float)
    return X, y


class TestFitGlm:
    """Tests for fit_glm."""

    def test_gaussian_exact_line(self, gaussian):
        """A noiseless line is recovered exactly."""
        fit = fit_glm(np.arange(1.0, 5.0)[:, None], np.array([2.0, 4.0, 6.0, 8.0]), gaussian)
        assert fit.coefficients[0] == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)
        assert fit.converged

    def test_binomial_score_equations(self, binomial):
        """At the MLE the score A'(y - mu) vanishes."""
        X, y = _binary_data()
        fit = fit_glm(X, y, binomial)
        A = np.column_stack([np.ones(len(y)), X])
        score = A.T @ (y - fit.fitted)
        assert fit.converged
        assert np.max(np.abs(score)) < 1e-6

    def test_poisson_score_equations(self, poisson):
        """Poisson IRLS reaches the score root."""
        X, y = _count_data()
        fit = fit_glm(X, y, poisson)
        A = np.column_stack([np.ones(len(y)), X])
        assert np.max(np.abs(A.T @ (y - fit.fitted))) < 1e-6

    def test_intercept_only(self, binomial):
        """With no columns the intercept is the logit of the mean."""
        y = np.array([1.0, 0.0, 0.0, 1.0, 1.0])
        fit = fit_glm(np.zeros((5, 0)), y, binomial)
        assert fit.intercept == pytest.approx(np.log(0.6 / 0.4), abs=1e-8)
        assert fit.coefficients.shape == (0,)

    def test_poisson_intercept_only(self, poisson):
        """Constant counts of 4 give the intercept log 4."""
        fit = fit_glm(np.zeros((4, 0)), np.full(4, 4.0), poisson)
        assert fit.intercept == pytest.approx(np.log(4.0), abs=1e-8)
        assert fit.deviance == pytest.approx(0.0, abs=1e-8)

    def test_duplicate_column_dropped(self, gaussian, rng):
        """A column equal to an earlier one is dropped with a zero coefficient."""
        x = rng.standard_normal(30)
        X = np.column_stack([x, x, rng.standard_normal(30)])
        y = 1.0 + 2.0 * x + rng.standard_normal(30) * 0.1
        fit = fit_glm(X, y, gaussian)
        assert fit.rank_deficient
        assert fit.dropped == (1,)
        assert fit.coefficients[1] == 0.0

    def test_binomial_rejects_non_binary(self, binomial):
        """Binomial responses must be 0/1."""
        with pytest.raises(ValidationError):
            fit_glm(np.ones((3, 1)), np.array([0.0, 1.0, 2.0]), binomial)

    def test_dimension_mismatch(self, gaussian):
        """Rows of X and y must agree."""
        with pytest.raises(ValidationError, match="dimension mismatch"):
            fit_glm(np.ones((4, 1)), np.ones(3), gaussian)


class TestIndependentColumns:
    """Tests for the pivoted-QR rank check."""

    def test_constant_column_is_dependent(self, rng):
        """A constant column duplicates the intercept."""
        X = np.column_stack([rng.standard_normal(10), np.full(10, 3.0)])
        assert independent_columns(X).tolist() == [0]

    def test_sum_column(self, rng):
        """A column equal to the sum of two others leaves rank 2."""
        a, b = rng.standard_normal((2, 12))
        assert len(independent_columns(np.column_stack([a, b, a + b]))) == 2


class TestLogLikelihoodRatio:
    """Tests for log_likelihood_ratio."""

    def test_gaussian_profiled(self, gaussian, rng):
        """Gaussian D is n log(RSS0 / RSS1)."""
        X = rng.standard_normal((40, 1))
        y = X[:, 0] + rng.standard_normal(40)
        null = fit_glm(np.zeros((40, 0)), y, gaussian)
        alt = fit_glm(X, y, gaussian)
        expected = 40 * np.log(null.deviance / alt.deviance)
        assert log_likelihood_ratio(null, alt) == pytest.approx(expected)

    def test_binomial_is_deviance_difference(self, binomial):
        """Binomial D is the deviance drop."""
        X, y = _binary_data()
        null = fit_glm(X[:, :1], y, binomial)
        alt = fit_glm(X[:, :2], y, binomial)
        assert log_likelihood_ratio(null, alt) == pytest.approx(null.deviance - alt.deviance)
        assert log_likelihood_ratio(null, alt) == pytest.approx(2 * (alt.log_likelihood - null.log_likelihood))

    def test_separation_reaches_null_deviance(self, binomial):
        """A perfectly separating column drives D toward 20 ln 2."""
        x = np.arange(10.0)[:, None]
        y = np.r_[np.zeros(5), np.ones(5)]
        null = fit_glm(np.zeros((10, 0)), y, binomial)
        alt = fit_glm(x, y, binomial)
        assert null.deviance == pytest.approx(20 * np.log(2.0))
        assert log_likelihood_ratio(null, alt) == pytest.approx(13.863, abs=1e-3)

    def test_negative_statistic_raises(self):
        """An alternative worse than its null signals a failed fit."""
        def fit(dev):
            return GlmFit(intercept=0.0, coefficients=np.zeros(0), deviance=dev, log_likelihood=-dev / 2,
                          converged=True, iterations=1, family=Family.BINOMIAL, n=10)
        with pytest.raises(NumericalError):
            log_likelihood_ratio(fit(10.0), fit(11.0))

    def test_tiny_negative_clamped(self):
        """Rounding-level negatives are clamped to zero."""
        def fit(dev):
            return GlmFit(intercept=0.0, coefficients=np.zeros(0), deviance=dev, log_likelihood=-dev / 2,
                          converged=True, iterations=1, family=Family.POISSON, n=10)
        assert log_likelihood_ratio(fit(10.0), fit(10.0 + 1e-9)) == 0.0


class TestCandidateDeviances:
    """Tests for batched candidate scoring."""

    @pytest.mark.parametrize("family", [Family.BINOMIAL, Family.POISSON, Family.GAUSSIAN])
    def test_matches_single_fits(self, family):
        """Batched statistics equal one-at-a-time refits."""
        spec = GlmSpec(family=family)
        X, y = _binary_data() if family == Family.BINOMIAL else _count_data(p=5)
        if family == Family.GAUSSIAN:
            y = X[:, 0] + np.random.default_rng(5).standard_normal(len(y))
        base, cand = X[:, :1], X[:, 1:]
        scores = candidate_deviances(base, cand, y, spec)
        null = fit_glm(base, y, spec)
        expected = [log_likelihood_ratio(null, fit_glm(np.column_stack([base, c]), y, spec)) for c in cand.T]
        np.testing.assert_allclose(scores.llr, expected, rtol=1e-5, atol=1e-6)
        assert not scores.failed.any()

    def test_collinear_candidate_scores_zero(self, binomial):
        """A candidate already in the base model adds nothing."""
        X, y = _binary_data()
        scores = candidate_deviances(X[:, :2], np.column_stack([X[:, 0], X[:, 2]]), y, binomial)
        assert scores.llr[0] == 0.0
        assert scores.llr[1] > 0.0

    def test_empty_base(self, gaussian, rng):
        """Scoring against the intercept-only model."""
        X = rng.standard_normal((50, 3))
        y = 3.0 * X[:, 2] + rng.standard_normal(50)
        scores = candidate_deviances(np.zeros((50, 0)), X, y, gaussian)
        assert int(np.argmax(scores.llr)) == 2

    def test_no_candidates(self, gaussian, rng):
        """An empty candidate block returns empty scores."""
        scores = candidate_deviances(rng.standard_normal((10, 1)), np.zeros((10, 0)), rng.standard_normal(10), gaussian)
        assert scores.llr.shape == (0,)


class TestPrediction:
    """Tests for prediction helpers."""

    def test_misclassification(self):
        """Binomial error is the 0.5-threshold misclassification rate."""
        err = prediction_error([1, 0, 1, 0], [0.9, 0.2, 0.4, 0.6], Family.BINOMIAL)
        assert err == pytest.approx(0.5)

    def test_mse(self):
        """Gaussian error is the mean squared error."""
        assert prediction_error([1.0, 2.0], [1.0, 4.0], Family.GAUSSIAN) == pytest.approx(2.0)

    def test_r2_perfect(self):
        """Perfect predictions explain all variance."""
        assert explained_variance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)

    def test_predict_mean_binomial(self, binomial):
        """Predictions are probabilities."""
        X, y = _binary_data()
        fit = fit_glm(X, y, binomial)
        mu = predict_mean(fit, X)
        np.testing.assert_allclose(mu, fit.fitted, atol=1e-12)
        assert np.all((mu > 0) & (mu < 1))
