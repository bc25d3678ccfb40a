import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import norm

from contracts import DegenerateError, NumericalBreakdownError, TooFewSamplesError
from processors.solvers import (
    SIGMA_FLOOR,
    KalmanState,
    bma_fit,
    kalman_filter,
    kalman_step,
    lasso_fit,
    lasso_kkt_residual,
    lasso_lambda_max,
    mixture_cdf,
    mixture_moments,
    normal_cdf,
    robust_gaussian_fit,
    standardized_coefficients,
)


# =============================================================================
# LASSO
# =============================================================================

def _problem(rng, n, p):
    X = rng.normal(size=(n, p)) * rng.uniform(0.5, 5.0, p) + rng.normal(0.0, 3.0, p)
    beta = np.where(rng.random(p) < 0.5, rng.normal(0.0, 2.0, p), 0.0)
    y = 1.5 + X @ beta + rng.normal(0.0, 1.0, n)
    return X, y


def test_lasso_satisfies_optimality_conditions():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        n = int(rng.integers(20, 80))
        p = int(rng.integers(2, 12)) if trial % 5 else int(rng.integers(n + 1, n + 20))
        X, y = _problem(rng, n, p)
        low = 0.05 if p < n else 0.3
        lam = lasso_lambda_max(X, y) * rng.uniform(low, 0.9)
        model = lasso_fit(X, y, lam)
        assert lasso_kkt_residual(model, X, y) <= 1e-8, f"trial {trial}"


def test_single_predictor_matches_soft_threshold(rng):
    x = rng.normal(3.0, 2.0, 200)
    y = 0.7 * x + rng.normal(0.0, 1.0, 200)
    xs = (x - x.mean()) / x.std()
    c = float(xs @ (y - y.mean()) / y.size)
    for lam in (0.0, 0.1 * abs(c), 0.5 * abs(c), 2.0 * abs(c)):
        model = lasso_fit(x[:, None], y, lam)
        expected = math.copysign(max(abs(c) - lam, 0.0), c)
        assert standardized_coefficients(model)[0] == pytest.approx(expected, abs=1e-10)


def test_penalty_above_lambda_max_gives_zero_solution(rng):
    X, y = _problem(rng, 60, 6)
    model = lasso_fit(X, y, lasso_lambda_max(X, y) * 1.0001)
    assert np.all(model.coefficients == 0.0)
    assert model.intercept == pytest.approx(y.mean())


def test_zero_penalty_reproduces_least_squares(rng):
    X, y = _problem(rng, 120, 5)
    model = lasso_fit(X, y, 0.0)
    design = np.column_stack([np.ones(len(y)), X])
    ols, *_ = np.linalg.lstsq(design, y, rcond=None)
    assert model.intercept == pytest.approx(ols[0], abs=1e-6)
    np.testing.assert_allclose(model.coefficients, ols[1:], atol=1e-6)


def test_constant_column_gets_zero_coefficient(rng):
    X, y = _problem(rng, 50, 3)
    X[:, 1] = 4.2
    model = lasso_fit(X, y, 0.01)
    assert model.coefficients[1] == 0.0
    assert model.predictor_scales[1] == 0.0


def test_lasso_input_checks(rng):
    X, y = _problem(rng, 9, 2)
    with pytest.raises(TooFewSamplesError):
        lasso_fit(X, y, 0.1)
    X, y = _problem(rng, 30, 2)
    X[3, 0] = np.nan
    with pytest.raises(ValueError):
        lasso_fit(X, y, 0.1)
    with pytest.raises(ValueError):
        lasso_fit(X, y, -1.0)


# =============================================================================
# ROBUST ERROR MODEL
# =============================================================================

def test_robust_fit_ignores_outliers(rng):
    residuals = rng.normal(0.3, 1.0, 2000)
    residuals[:100] += 50.0
    model = robust_gaussian_fit(residuals)
    assert model.mu == pytest.approx(0.3, abs=0.15)
    assert model.sigma == pytest.approx(1.0, abs=0.15)


def test_robust_fit_floors_sigma():
    model = robust_gaussian_fit(np.zeros(40))
    assert model.sigma == SIGMA_FLOOR


def test_robust_fit_needs_thirty_residuals():
    with pytest.raises(TooFewSamplesError):
        robust_gaussian_fit(np.arange(29, dtype=float))


# =============================================================================
# KALMAN FILTER
# =============================================================================

def test_scalar_update_matches_grid_posterior():
    prior = KalmanState([1.0], [[3.0]])
    W, V, y = 1.0, 1.0, 2.5
    step = kalman_step(prior, [[1.0]], [[1.0]], [[W]], [[V]], np.array([y]))

    grid = np.linspace(-25.0, 25.0, 2001)
    density = norm.pdf(grid, 1.0, math.sqrt(3.0 + W)) * norm.pdf(y, grid, math.sqrt(V))
    density /= trapezoid(density, grid)
    mean = trapezoid(grid * density, grid)
    variance = trapezoid((grid - mean) ** 2 * density, grid)

    assert step.posterior.mean[0] == pytest.approx(mean, abs=1e-6)
    assert step.posterior.covariance[0, 0] == pytest.approx(variance, abs=1e-6)
    assert step.log_likelihood == pytest.approx(norm.logpdf(y, 1.0, math.sqrt(3.0 + W + V)), abs=1e-12)


def test_missing_observation_is_pure_prediction():
    prior = KalmanState([2.0, 0.5], np.eye(2))
    G = np.array([[1.0, 1.0], [0.0, 1.0]])
    step = kalman_step(prior, np.eye(2), G, 0.1 * np.eye(2), np.eye(2), None)
    np.testing.assert_allclose(step.posterior.mean, [2.5, 0.5])
    np.testing.assert_allclose(step.posterior.covariance, step.prior.covariance)
    assert step.log_likelihood == 0.0


def test_partially_observed_vector_updates_observed_rows_only():
    prior = KalmanState([0.0, 0.0], np.eye(2))
    step = kalman_step(prior, np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2), np.array([2.0, np.nan]))
    assert step.observed.tolist() == [True, False]
    assert step.posterior.mean[0] == pytest.approx(1.0)
    assert step.posterior.mean[1] == pytest.approx(0.0)
    assert step.posterior.covariance[1, 1] == pytest.approx(1.0)


def test_filter_covariance_stays_symmetric(rng):
    G = np.array([[1.0, 1.0, 0.0], [0.0, 0.9, 0.1], [0.0, 0.0, 1.0]])
    F = np.array([[1.0, 0.0, 1.0]])
    observations = [np.array([v]) if i % 7 else None for i, v in enumerate(rng.normal(size=200))]
    steps = kalman_filter(KalmanState(np.zeros(3), np.eye(3)), F, G, 0.01 * np.eye(3), [[0.5]], observations)
    for step in steps:
        C = step.posterior.covariance
        np.testing.assert_array_equal(C, C.T)
        assert np.min(np.linalg.eigvalsh(C)) > 0


def test_innovation_covariance_must_be_positive_definite():
    prior = KalmanState([0.0], [[1.0]])
    with pytest.raises(NumericalBreakdownError):
        kalman_step(prior, [[1.0]], [[1.0]], [[0.0]], [[-5.0]], np.array([1.0]))


# =============================================================================
# BMA
# =============================================================================

def _members(rng, n=300):
    truth = rng.normal(20.0, 5.0, n)
    means = np.column_stack([
        truth + rng.normal(0.0, 1.0, n),
        truth + rng.normal(0.5, 2.5, n),
        truth + rng.normal(-1.0, 4.0, n),
    ])
    return means, truth


def test_bma_log_likelihood_never_decreases():
    for seed in range(50):
        means, truth = _members(np.random.default_rng(seed))
        weights = bma_fit(means, truth)
        assert np.all(np.diff(weights.log_likelihood) >= -1e-9), f"seed {seed}"


def test_bma_favours_the_sharpest_member(rng):
    means, truth = _members(rng)
    weights = bma_fit(means, truth)
    assert weights.weights.sum() == pytest.approx(1.0)
    assert np.argmax(weights.weights) == 0
    assert np.all(weights.sigmas >= SIGMA_FLOOR)


def test_bma_input_checks(rng):
    means, truth = _members(rng, n=60)
    with pytest.raises(DegenerateError):
        bma_fit(means[:, :1], truth)
    with pytest.raises(TooFewSamplesError):
        bma_fit(means[:40], truth[:40])


# =============================================================================
# DISTRIBUTIONS
# =============================================================================

def test_normal_and_mixture_cdf():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(3.0, 1.0, 2.0) == pytest.approx(norm.cdf(1.0))
    assert mixture_cdf(0.0, [-1.0, 1.0], [1.0, 1.0], [0.5, 0.5]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        normal_cdf(0.0, 0.0, 0.0)


def test_mixture_moments_total_variance():
    mean, variance = mixture_moments([0.0, 2.0], [1.0, 1.0], [0.5, 0.5])
    assert mean == pytest.approx(1.0)
    assert variance == pytest.approx(2.0)
