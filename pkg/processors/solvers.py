#!/usr/bin/env python3
"""
Numerical Solvers

Shared by every prediction-based test:
- LASSO by cyclic coordinate descent with covariance updates
- Robust Gaussian error models (median / scaled MAD)
- Kalman filter predict/update step (Joseph form)
- EM for Gaussian-mixture Bayesian model averaging
- Normal and mixture CDFs
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp, ndtr
from scipy.stats import median_abs_deviation

from contracts import (
    NotConvergedError,
    TooFewSamplesError,
    NumericalBreakdownError,
    DegenerateError,
)

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-3
LASSO_MIN_SAMPLES = 10
LASSO_MAX_SWEEPS = 10_000
LASSO_TOL = 1e-12
ROBUST_MIN_SAMPLES = 30
BMA_MIN_SAMPLES = 50
BMA_MAX_ITER = 500
BMA_TOL = 1e-8
ZERO_VARIANCE = 1e-12


# =============================================================================
# LASSO
# =============================================================================

@dataclass
class LassoModel:
    """
    LASSO fit reported on the original predictor scale.

    The penalty applies to standardized coefficients (population sd);
    columns without variance carry coefficient 0 and scale 0.
    """
    intercept: float
    coefficients: np.ndarray
    lam: float
    predictor_means: np.ndarray
    predictor_scales: np.ndarray
    n_sweeps: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.intercept + X @ self.coefficients

    @property
    def active(self) -> np.ndarray:
        return self.coefficients != 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "intercept": self.intercept,
            "coefficients": self.coefficients.tolist(),
            "lambda": self.lam,
            "predictor_means": self.predictor_means.tolist(),
            "predictor_scales": self.predictor_scales.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LassoModel":
        return cls(
            intercept=float(data["intercept"]),
            coefficients=np.asarray(data["coefficients"], dtype=float),
            lam=float(data["lambda"]),
            predictor_means=np.asarray(data["predictor_means"], dtype=float),
            predictor_scales=np.asarray(data["predictor_scales"], dtype=float),
        )


def _check_design(X: np.ndarray, y: np.ndarray) -> tuple:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("LASSO inputs must not contain missing or non-finite entries")
    if y.shape[0] < LASSO_MIN_SAMPLES:
        raise TooFewSamplesError(
            f"LASSO needs at least {LASSO_MIN_SAMPLES} samples, got {y.shape[0]}",
            context={"n": int(y.shape[0])}
        )
    return X, y


def _standardize(X: np.ndarray) -> tuple:
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    keep = scales > ZERO_VARIANCE * np.maximum(1.0, np.abs(means))
    scales = np.where(keep, scales, 0.0)
    Xs = np.zeros_like(X)
    Xs[:, keep] = (X[:, keep] - means[keep]) / scales[keep]
    return Xs, means, scales, keep


def lasso_lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty giving the all-zero solution: max_j |x~_j'(y - ybar)| / n."""
    X, y = _check_design(X, y)
    Xs, _, _, keep = _standardize(X)
    if not np.any(keep):
        return 0.0
    n = y.shape[0]
    return float(np.max(np.abs(Xs[:, keep].T @ (y - y.mean())) / n))


def lasso_fit(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = LASSO_TOL,
    max_sweeps: int = LASSO_MAX_SWEEPS,
    warm_start: Optional[np.ndarray] = None
) -> LassoModel:
    """
    Minimize (1/2n)||y - b0 - X~ b||^2 + lam * ||b||_1 over standardized predictors.

    Args:
        X: Design matrix n x p (p may exceed n)
        y: Response vector
        lam: Penalty (>= 0)
        tol: Convergence threshold relative to sd(y) on the largest
            coefficient change of a sweep
        max_sweeps: Cyclic sweep limit
        warm_start: Standardized coefficients to start from

    Returns:
        LassoModel with coefficients on the original scale

    Raises:
        TooFewSamplesError: n < 10
        NotConvergedError: Sweep limit reached
    """
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"lambda must be a non-negative finite number: {lam}")
    X, y = _check_design(X, y)
    n, p = X.shape
    Xs, means, scales, keep = _standardize(X)

    y_mean = float(y.mean())
    y_sd = float(y.std())
    beta = np.zeros(p)
    sweeps = 0

    if y_sd > 0 and np.any(keep):
        cols = np.flatnonzero(keep)
        Xa = Xs[:, cols]
        gram = Xa.T @ Xa / n
        corr = Xa.T @ (y - y_mean) / n
        b = np.zeros(cols.size) if warm_start is None else np.asarray(warm_start, float)[cols].copy()
        threshold = tol * y_sd

        converged = False
        while sweeps < max_sweeps:
            sweeps += 1
            max_change = 0.0
            for j in range(cols.size):
                gjj = gram[j, j]
                grad = corr[j] - gram[j] @ b + gjj * b[j]
                new = math.copysign(max(abs(grad) - lam, 0.0), grad) / gjj
                change = abs(new - b[j])
                if change > 0.0:
                    b[j] = new
                    max_change = max(max_change, change)
            if max_change < threshold:
                converged = True
                break
        if not converged:
            raise NotConvergedError(
                f"LASSO did not converge in {max_sweeps} sweeps",
                context={"lambda": lam, "n": n, "p": p}
            )
        beta[cols] = b

    coefficients = np.zeros(p)
    coefficients[keep] = beta[keep] / scales[keep]
    intercept = y_mean - float(coefficients @ means)
    return LassoModel(
        intercept=intercept,
        coefficients=coefficients,
        lam=float(lam),
        predictor_means=means,
        predictor_scales=scales,
        n_sweeps=sweeps,
    )


def standardized_coefficients(model: LassoModel) -> np.ndarray:
    return model.coefficients * model.predictor_scales


def lambda_grid(lam_max: float, n_lambdas: int = 30, ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced penalties from lam_max down to ratio * lam_max."""
    if lam_max <= 0:
        return np.zeros(1)
    return np.geomspace(lam_max, ratio * lam_max, n_lambdas)


def lasso_objective(model: LassoModel, X: np.ndarray, y: np.ndarray) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    residual = np.asarray(y, dtype=float) - model.predict(X)
    penalty = model.lam * float(np.sum(np.abs(standardized_coefficients(model))))
    return float(residual @ residual) / (2.0 * residual.size) + penalty


def lasso_kkt_residual(model: LassoModel, X: np.ndarray, y: np.ndarray) -> float:
    """
    Largest violation of the LASSO optimality conditions.

    Active coordinates need x~_j'r/n = lam * sign(b_j); inactive ones
    need |x~_j'r/n| <= lam.
    """
    X, y = _check_design(X, y)
    Xs, _, _, keep = _standardize(X)
    residual = y - model.predict(X)
    grad = Xs.T @ residual / y.size
    beta = standardized_coefficients(model)
    worst = abs(float(residual.mean()))
    for j in np.flatnonzero(keep):
        if beta[j] != 0.0:
            worst = max(worst, abs(grad[j] - model.lam * math.copysign(1.0, beta[j])))
        else:
            worst = max(worst, abs(grad[j]) - model.lam)
    return worst


# =============================================================================
# ROBUST ERROR MODEL
# =============================================================================

@dataclass(frozen=True)
class GaussianErrorModel:
    """Residual distribution in transformed space"""
    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"Invalid error model mu={self.mu} sigma={self.sigma}")

    def to_dict(self) -> Dict[str, float]:
        return {"mu": self.mu, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GaussianErrorModel":
        return cls(mu=float(data["mu"]), sigma=float(data["sigma"]))


def robust_sigma(values: np.ndarray, sigma_floor: float = SIGMA_FLOOR) -> float:
    """Normal-consistent MAD, floored."""
    mad = float(median_abs_deviation(np.asarray(values, dtype=float), scale="normal"))
    return max(mad, sigma_floor)


def robust_gaussian_fit(residuals: Sequence[float], sigma_floor: float = SIGMA_FLOOR) -> GaussianErrorModel:
    """
    mu = median, sigma = max(1.4826 * MAD, sigma_floor).

    Raises:
        TooFewSamplesError: Fewer than 30 residuals
    """
    r = np.asarray(residuals, dtype=float)
    r = r[np.isfinite(r)]
    if r.size < ROBUST_MIN_SAMPLES:
        raise TooFewSamplesError(
            f"Error model needs at least {ROBUST_MIN_SAMPLES} residuals, got {r.size}",
            context={"n": int(r.size)}
        )
    sigma = robust_sigma(r, sigma_floor)
    if sigma == sigma_floor:
        logger.debug(f"Error model sigma floored at {sigma_floor}")
    return GaussianErrorModel(mu=float(np.median(r)), sigma=sigma)


# =============================================================================
# KALMAN FILTER
# =============================================================================

@dataclass
class KalmanState:
    """Gaussian state belief"""
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        d = self.mean.size
        if self.covariance.shape != (d, d):
            raise ValueError(f"Covariance shape {self.covariance.shape} does not match state size {d}")


@dataclass
class KalmanStep:
    """Outcome of one predict/update cycle"""
    prior: KalmanState
    posterior: KalmanState
    forecast_mean: np.ndarray
    forecast_cov: np.ndarray
    log_likelihood: float = 0.0
    observed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def kalman_step(
    state: KalmanState,
    F: np.ndarray,
    G: np.ndarray,
    W: np.ndarray,
    V: np.ndarray,
    obs: Optional[np.ndarray] = None
) -> KalmanStep:
    """
    One step of the dynamic linear model y_t = F x_t + v, x_t = G x_{t-1} + w.

    Observation entries that are NaN (or obs=None) are skipped. The
    update uses the Joseph form and the result is symmetrized.

    Raises:
        NumericalBreakdownError: Innovation covariance not positive definite
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))

    a = G @ state.mean
    R = G @ state.covariance @ G.T + W
    R = 0.5 * (R + R.T)
    prior = KalmanState(a, R)

    f_all = F @ a
    Q_all = F @ R @ F.T + V
    Q_all = 0.5 * (Q_all + Q_all.T)

    if obs is None:
        mask = np.zeros(F.shape[0], dtype=bool)
    else:
        y = np.atleast_1d(np.asarray(obs, dtype=float))
        mask = np.isfinite(y)

    if not np.any(mask):
        return KalmanStep(prior, KalmanState(a.copy(), R.copy()), f_all, Q_all, 0.0, mask)

    Fo = F[mask]
    Vo = V[np.ix_(mask, mask)]
    innovation = y[mask] - Fo @ a
    S = Q_all[np.ix_(mask, mask)]
    try:
        chol = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalBreakdownError(
            "Innovation covariance is not positive definite",
            context={"innovation_cov": S.tolist()}
        ) from e

    gain = linalg.cho_solve(chol, Fo @ R).T
    m = a + gain @ innovation
    ikf = np.eye(a.size) - gain @ Fo
    C = ikf @ R @ ikf.T + gain @ Vo @ gain.T
    C = 0.5 * (C + C.T)

    log_det = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    quad = float(innovation @ linalg.cho_solve(chol, innovation))
    loglik = -0.5 * (innovation.size * math.log(2.0 * math.pi) + log_det + quad)
    return KalmanStep(prior, KalmanState(m, C), f_all, Q_all, loglik, mask)


def kalman_filter(
    state: KalmanState,
    F: np.ndarray,
    G: np.ndarray,
    W: np.ndarray,
    V: np.ndarray,
    observations: Sequence[Optional[np.ndarray]]
) -> List[KalmanStep]:
    """Run kalman_step over a sequence; None entries are pure predictions."""
    steps: List[KalmanStep] = []
    for obs in observations:
        step = kalman_step(state, F, G, W, V, obs)
        steps.append(step)
        state = step.posterior
    return steps


# =============================================================================
# BAYESIAN MODEL AVERAGING
# =============================================================================

@dataclass
class BmaWeights:
    """Mixture weights and per-member spreads"""
    weights: np.ndarray
    sigmas: np.ndarray
    log_likelihood: List[float] = field(default_factory=list)
    n_iter: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if self.weights.shape != self.sigmas.shape:
            raise ValueError("weights and sigmas must have the same length")

    def to_dict(self) -> Dict[str, Any]:
        return {"weights": self.weights.tolist(), "sigmas": self.sigmas.tolist(), "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BmaWeights":
        return cls(weights=data["weights"], sigmas=data["sigmas"], n_iter=int(data.get("n_iter", 0)))


def _mixture_loglik(y: np.ndarray, means: np.ndarray, weights: np.ndarray, sigmas: np.ndarray) -> tuple:
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    log_comp = (
        log_w[None, :]
        - np.log(sigmas)[None, :]
        - 0.5 * math.log(2.0 * math.pi)
        - 0.5 * ((y[:, None] - means) / sigmas[None, :]) ** 2
    )
    row = logsumexp(log_comp, axis=1)
    return float(np.sum(row)), log_comp - row[:, None]


def bma_fit(
    member_means: np.ndarray,
    actuals: np.ndarray,
    sigma_floor: float = SIGMA_FLOOR,
    max_iter: int = BMA_MAX_ITER,
    tol: float = BMA_TOL
) -> BmaWeights:
    """
    EM for sum_i ln sum_k w_k N(actual_i; mean_ik, sigma_k^2).

    Starts from equal weights and robust residual spreads. Each sigma is
    kept at or above sigma_floor, which is the constrained M-step optimum,
    so the log-likelihood never decreases.

    Raises:
        DegenerateError: Fewer than 2 members or non-finite member means
        TooFewSamplesError: Fewer than 50 rows
    """
    means = np.atleast_2d(np.asarray(member_means, dtype=float))
    y = np.asarray(actuals, dtype=float).ravel()
    if means.shape[0] != y.size:
        raise ValueError(f"member_means has {means.shape[0]} rows but actuals has {y.size}")
    n, k = means.shape
    if k < 2:
        raise DegenerateError(f"BMA needs at least 2 members, got {k}")
    if not (np.all(np.isfinite(means)) and np.all(np.isfinite(y))):
        raise DegenerateError("BMA member means and actuals must be finite")
    if n < BMA_MIN_SAMPLES:
        raise TooFewSamplesError(f"BMA needs at least {BMA_MIN_SAMPLES} rows, got {n}", context={"n": n})

    residuals = y[:, None] - means
    weights = np.full(k, 1.0 / k)
    sigmas = np.array([robust_sigma(residuals[:, j], sigma_floor) for j in range(k)])
    if np.any(sigmas == sigma_floor):
        logger.warning("BMA member interpolates actuals; spread held at the floor")

    loglik, log_resp = _mixture_loglik(y, means, weights, sigmas)
    trace = [loglik]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        resp = np.exp(log_resp)
        totals = resp.sum(axis=0)
        weights = totals / n
        weights = weights / weights.sum()
        for j in range(k):
            if totals[j] > 0:
                var = float(resp[:, j] @ residuals[:, j] ** 2) / totals[j]
                sigmas[j] = max(math.sqrt(var), sigma_floor)
        loglik, log_resp = _mixture_loglik(y, means, weights, sigmas)
        improvement = loglik - trace[-1]
        trace.append(loglik)
        if improvement < tol:
            break

    logger.debug(f"BMA EM: {iterations} iterations, loglik {trace[-1]:.6f}, weights {np.round(weights, 4).tolist()}")
    return BmaWeights(weights=weights, sigmas=sigmas.copy(), log_likelihood=trace, n_iter=iterations)


# =============================================================================
# DISTRIBUTION FUNCTIONS
# =============================================================================

def normal_cdf(x: float, mu: float = 0.0, sigma: float = 1.0) -> float:
    """P(X <= x) for X ~ N(mu, sigma^2)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive: {sigma}")
    return float(ndtr((x - mu) / sigma))


def mixture_cdf(x: float, means: Sequence[float], sigmas: Sequence[float], weights: Sequence[float]) -> float:
    """CDF of sum_k w_k N(mean_k, sigma_k^2)."""
    means = np.asarray(means, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    value = float(np.sum(weights * ndtr((x - means) / sigmas)))
    return min(max(value, 0.0), 1.0)


def mixture_moments(means: Sequence[float], sigmas: Sequence[float], weights: Sequence[float]) -> tuple:
    """Mean and variance (law of total variance) of a Gaussian mixture."""
    means = np.asarray(means, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mean = float(weights @ means)
    variance = float(weights @ (sigmas ** 2 + (means - mean) ** 2))
    return mean, variance
