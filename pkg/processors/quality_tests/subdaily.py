#!/usr/bin/env python3
"""
Subdaily Test

A dynamic linear model fuses the TPAWS hourly readings with the hourly
gridded forecast at the site. State: [local level, diurnal harmonic pair
(period 24 h), grid offset]. The TPAWS reading observes level + cosine
term; the grid observes the same plus the offset.

Scoring filters the day hour by hour, samples the daily statistic from
the filtered hourly marginals and compares the reported daily value with
those samples.
"""

import math
import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from contracts import InsufficientHistoryError, NotApplicableError, TestKind
from processors.assessment import confidence_level
from processors.core import LOCAL_HOUR_OF, Observation, SubdailySeries, WeatherVariable
from processors.interfaces import (
    CalibrationInputs,
    DayInputs,
    QualityTestInterface,
    TestId,
    TestResult,
)
from processors.solvers import SIGMA_FLOOR, KalmanState, kalman_step, robust_sigma

from .base import CalibrationSettings

logger = logging.getLogger(__name__)

SUBDAILY_TEST = TestId(TestKind.SUBDAILY)
HOURS = 24
STATE_SIZE = 4
MIN_HISTORY_DAYS = 60
LIKELIHOOD_DAYS = 90
PRIOR_DAYS = 365
W_GRID_SIZE = 5
W_GRID_RANGE = (1e-8, 1.0)  # relative to the variance of the readings
INITIAL_SPREAD = 10.0


def transition_matrix(hours_per_step: float = 1.0) -> np.ndarray:
    """G: random-walk level, rotating harmonic pair, random-walk offset."""
    angle = 2.0 * math.pi * hours_per_step / HOURS
    G = np.eye(STATE_SIZE)
    G[1:3, 1:3] = [[math.cos(angle), math.sin(angle)], [-math.sin(angle), math.cos(angle)]]
    return G


def observation_matrix() -> np.ndarray:
    """F: row 0 the TPAWS reading, row 1 the grid value."""
    return np.array([
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 1.0],
    ])


@dataclass
class DlmSpec:
    """Calibrated dynamic linear model for one station and variable"""
    station_id: str
    variable: WeatherVariable
    W: np.ndarray
    V: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    cal_mse: float
    n_days: int
    calibration_window: Tuple[date, date]
    predictive_sd: float = 0.0
    log_likelihood: float = 0.0
    kind: str = field(default="Subdaily", init=False)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        self.prior_mean = np.asarray(self.prior_mean, dtype=float)
        self.prior_cov = np.asarray(self.prior_cov, dtype=float)
        for name, matrix in (("W", self.W), ("V", self.V), ("prior_cov", self.prior_cov)):
            if np.min(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))) < -1e-10:
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def G(self) -> np.ndarray:
        return transition_matrix()

    @property
    def F(self) -> np.ndarray:
        return observation_matrix()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "station_id": self.station_id,
            "variable": self.variable.value,
            "W": self.W.tolist(),
            "V": self.V.tolist(),
            "prior_mean": self.prior_mean.tolist(),
            "prior_cov": self.prior_cov.tolist(),
            "cal_mse": self.cal_mse,
            "n_days": self.n_days,
            "calibration_window": [d.isoformat() for d in self.calibration_window],
            "predictive_sd": self.predictive_sd,
            "log_likelihood": self.log_likelihood,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DlmSpec":
        return cls(
            station_id=data["station_id"],
            variable=WeatherVariable(data["variable"]),
            W=data["W"],
            V=data["V"],
            prior_mean=data["prior_mean"],
            prior_cov=data["prior_cov"],
            cal_mse=float(data["cal_mse"]),
            n_days=int(data["n_days"]),
            calibration_window=tuple(date.fromisoformat(d) for d in data["calibration_window"]),
            predictive_sd=float(data.get("predictive_sd", 0.0)),
            log_likelihood=float(data.get("log_likelihood", 0.0)),
        )


# =============================================================================
# CALIBRATION
# =============================================================================

def _day_matrix(
    days: Sequence[date],
    tpaws: Dict[date, SubdailySeries],
    grid: Dict[date, SubdailySeries]
) -> np.ndarray:
    """(ndays * 24, 2) hourly observations, NaN where a source is silent."""
    rows = np.full((len(days) * HOURS, 2), np.nan)
    for i, day in enumerate(days):
        if day in tpaws:
            rows[i * HOURS:(i + 1) * HOURS, 0] = tpaws[day].hourly_slots()
        if day in grid:
            rows[i * HOURS:(i + 1) * HOURS, 1] = grid[day].hourly_slots()
    return rows


def _harmonic_residuals(slots: np.ndarray) -> np.ndarray:
    """Residuals from a one-harmonic daily fit; NaN where the slot is empty."""
    hours = np.arange(HOURS)
    present = np.isfinite(slots)
    residuals = np.full(HOURS, np.nan)
    if present.sum() < 4:
        return residuals
    angle = 2.0 * math.pi * hours / HOURS
    design = np.column_stack([np.ones(HOURS), np.cos(angle), np.sin(angle)])
    coef, *_ = np.linalg.lstsq(design[present], slots[present], rcond=None)
    residuals[present] = slots[present] - design[present] @ coef
    return residuals


def observation_variance(observations: np.ndarray, sigma_floor: float = SIGMA_FLOOR) -> float:
    """
    Measurement variance of one hourly source from first differences of
    its within-day harmonic residuals: var(diff) = 2 var(noise).
    """
    diffs = []
    for day in observations.reshape(-1, HOURS):
        residuals = _harmonic_residuals(day)
        d = np.diff(residuals)
        diffs.append(d[np.isfinite(d)])
    pooled = np.concatenate(diffs) if diffs else np.zeros(0)
    if pooled.size < 2:
        return sigma_floor ** 2
    return max(robust_sigma(pooled, sigma_floor) ** 2 / 2.0, sigma_floor ** 2)


def batched_log_likelihood(
    Ws: np.ndarray,
    V: np.ndarray,
    observations: np.ndarray,
    m0: np.ndarray,
    P0: np.ndarray
) -> np.ndarray:
    """
    One-step predictive log-likelihood of the hourly observations for a
    batch of process covariances Ws (B, 4, 4).
    """
    G = transition_matrix()
    F = observation_matrix()
    batch = Ws.shape[0]
    m = np.tile(m0, (batch, 1))
    P = np.tile(P0, (batch, 1, 1))
    total = np.zeros(batch)
    identity = np.eye(STATE_SIZE)
    for y in observations:
        m = m @ G.T
        P = G @ P @ G.T + Ws
        mask = np.isfinite(y)
        if not mask.any():
            continue
        Fo = F[mask]
        Vo = V[np.ix_(mask, mask)]
        innovation = y[mask] - m @ Fo.T
        S = Fo @ P @ Fo.T + Vo
        S_inv = np.linalg.inv(S)
        _, log_det = np.linalg.slogdet(S)
        quad = np.einsum("bi,bij,bj->b", innovation, S_inv, innovation)
        total += -0.5 * (mask.sum() * math.log(2.0 * math.pi) + log_det + quad)
        gain = P @ Fo.T @ S_inv
        m = m + np.einsum("bij,bj->bi", gain, innovation)
        ikf = identity - gain @ Fo
        P = ikf @ P @ ikf.transpose(0, 2, 1) + gain @ Vo @ gain.transpose(0, 2, 1)
        P = 0.5 * (P + P.transpose(0, 2, 1))
    return total


def _initial_state(observations: np.ndarray, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    first = observations[:HOURS, 0]
    level = float(np.nanmean(first)) if np.isfinite(first).any() else float(np.nanmean(observations[:, 0]))
    offsets = observations[:, 1] - observations[:, 0]
    offset = float(np.nanmean(offsets)) if np.isfinite(offsets).any() else 0.0
    return np.array([level, 0.0, 0.0, offset]), np.eye(STATE_SIZE) * INITIAL_SPREAD * scale


def calibrate_dlm(
    history: Sequence[SubdailySeries],
    grid_history: Sequence[SubdailySeries] = (),
    settings: Optional[CalibrationSettings] = None
) -> DlmSpec:
    """
    Calibrate the subdaily model from TPAWS and grid hourly history.

    V comes from differencing each source; the level, harmonic and offset
    variances of W are chosen on a 5x5x5 log grid by one-step predictive
    log-likelihood over the most recent 90 calendar days. Days without
    readings are filtered as predict-only steps. A final filtering pass
    gives the one-step error and the climatological prior for the start
    of a day, taken from the days that have readings.

    Raises:
        InsufficientHistoryError: Fewer than 60 days of TPAWS readings
    """
    tpaws = {series.date: series for series in history if series.values}
    if len(tpaws) < MIN_HISTORY_DAYS:
        raise InsufficientHistoryError(
            f"Subdaily calibration needs {MIN_HISTORY_DAYS} days of readings, got {len(tpaws)}",
            context={"days": len(tpaws)}
        )
    first = next(iter(tpaws.values()))
    station_id, variable = first.station_id, first.variable
    grid = {series.date: series for series in grid_history if series.values}
    days = sorted(tpaws)
    # absent days stay in the matrix as NaN rows so the filter predicts through them
    calendar = [days[0] + timedelta(days=k) for k in range((days[-1] - days[0]).days + 1)]

    observations = _day_matrix(calendar, tpaws, grid)
    scale = float(np.nanvar(observations[:, 0])) or 1.0
    V = np.diag([
        observation_variance(observations[:, 0]),
        observation_variance(observations[:, 1]) if np.isfinite(observations[:, 1]).any() else SIGMA_FLOOR ** 2,
    ])

    recent = observations[-LIKELIHOOD_DAYS * HOURS:]
    m0, P0 = _initial_state(recent, scale)
    levels = np.geomspace(*W_GRID_RANGE, W_GRID_SIZE) * scale
    candidates = [(wl, wh, wo) for wl in levels for wh in levels for wo in levels]
    Ws = np.array([np.diag([wl, wh, wh, wo]) for wl, wh, wo in candidates])
    loglik = batched_log_likelihood(Ws, V, recent, m0, P0)
    best = int(np.argmax(loglik))
    W = Ws[best]
    logger.debug(
        f"{station_id}: W grid best (level, harmonic, offset)={candidates[best]}, loglik={loglik[best]:.3f}"
    )

    # final pass: one-step errors and end-of-day states
    window = observations[-PRIOR_DAYS * HOURS:]
    m0, P0 = _initial_state(window, scale)
    state = KalmanState(m0, P0)
    F, G = observation_matrix(), transition_matrix()
    errors, variances, end_means, end_covs = [], [], [], []
    for t, y in enumerate(window):
        step = kalman_step(state, F, G, W, V, y)
        if np.isfinite(y[0]):
            errors.append(y[0] - step.forecast_mean[0])
            variances.append(step.forecast_cov[0, 0])
        state = step.posterior
        if t % HOURS == HOURS - 1 and t >= HOURS and np.isfinite(window[t - HOURS + 1:t + 1, 0]).any():
            end_means.append(state.mean)
            end_covs.append(state.covariance)

    if len(end_means) < 2:
        raise InsufficientHistoryError(
            f"Subdaily calibration needs readings on at least 2 of the last {PRIOR_DAYS} days",
            context={"days": len(end_means)}
        )
    end_means = np.array(end_means)
    prior_mean = end_means.mean(axis=0)
    prior_cov = np.cov(end_means, rowvar=False) + np.mean(end_covs, axis=0)
    spec = DlmSpec(
        station_id=station_id,
        variable=variable,
        W=W,
        V=V,
        prior_mean=prior_mean,
        prior_cov=0.5 * (prior_cov + prior_cov.T),
        cal_mse=float(np.mean(np.square(errors))),
        n_days=len(days),
        calibration_window=(days[0], days[-1]),
        predictive_sd=float(np.sqrt(np.median(variances))),
        log_likelihood=float(loglik[best]),
    )
    logger.info(
        f"{station_id}: subdaily model on {spec.n_days} days, one-step sd={spec.predictive_sd:.4g}, "
        f"V=({V[0, 0]:.3g}, {V[1, 1]:.3g})"
    )
    return spec


# =============================================================================
# SCORING
# =============================================================================

def filter_day(spec: DlmSpec, day: Optional[SubdailySeries], grid_day: Optional[SubdailySeries]) -> List:
    """Filtered KalmanSteps for the 24 hours of a day, from the climatological prior."""
    tpaws = day.hourly_slots() if day is not None else np.full(HOURS, np.nan)
    grid = grid_day.hourly_slots() if grid_day is not None else np.full(HOURS, np.nan)
    state = KalmanState(spec.prior_mean, spec.prior_cov)
    steps = []
    for hour in range(HOURS):
        step = kalman_step(state, spec.F, spec.G, spec.W, spec.V, np.array([tpaws[hour], grid[hour]]))
        steps.append(step)
        state = step.posterior
    return steps


def hourly_marginals(spec: DlmSpec, steps: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and variance of a TPAWS reading at each hour given the filtered state."""
    F = spec.F[0]
    means = np.array([F @ step.posterior.mean for step in steps])
    variances = np.array([F @ step.posterior.covariance @ F + spec.V[0, 0] for step in steps])
    return means, variances


def sample_daily_statistic(
    means: np.ndarray,
    variances: np.ndarray,
    variable: WeatherVariable,
    n_samples: int = 10_000,
    seed: int = 42
) -> np.ndarray:
    """
    Daily statistic of sampled hourly readings.

    Hours are drawn independently from their marginals with antithetic
    pairs. With a single hour the samples follow that hour's marginal.
    """
    means = np.atleast_1d(np.asarray(means, dtype=float))
    sds = np.sqrt(np.atleast_1d(np.asarray(variances, dtype=float)))
    rng = np.random.default_rng(seed)
    half = rng.standard_normal(((n_samples + 1) // 2, means.size))
    draws = np.concatenate([half, -half])[:n_samples]
    paths = means + draws * sds
    if variable == WeatherVariable.TMIN:
        return paths.min(axis=1)
    if variable in LOCAL_HOUR_OF and means.size == HOURS:
        return paths[:, LOCAL_HOUR_OF[variable]]
    return paths.max(axis=1)


def empirical_p1(samples: np.ndarray, value: float) -> float:
    """ECDF at value, kept within [1/(2N), 1 - 1/(2N)]."""
    n = samples.size
    p = float(np.count_nonzero(samples <= value)) / n
    return min(max(p, 0.5 / n), 1.0 - 0.5 / n)


def coverage(day: Optional[SubdailySeries], grid_day: Optional[SubdailySeries]) -> int:
    """Hours with a reading from either source."""
    present = np.zeros(HOURS, dtype=bool)
    for series in (day, grid_day):
        if series is not None:
            present |= np.isfinite(series.hourly_slots())
    return int(present.sum())


def run_subdaily_test(
    spec: DlmSpec,
    day: Optional[SubdailySeries],
    grid_day: Optional[SubdailySeries],
    reported_daily: Observation,
    n_samples: int = 10_000,
    seed: int = 42,
    min_slots: int = 18
) -> TestResult:
    """
    Score a reported daily value against the sampled daily statistic.

    Raises:
        NotApplicableError: Daily rainfall, or fewer than min_slots hours covered
        NumericalBreakdownError: From the Kalman update
    """
    if spec.variable == WeatherVariable.RAIN:
        raise NotApplicableError("subdaily test does not cover daily rainfall totals")
    covered = coverage(day, grid_day)
    if covered < min_slots:
        raise NotApplicableError(
            f"{covered}/{HOURS} hourly slots covered (< {min_slots})",
            context={"station": reported_daily.station_id, "date": reported_daily.date.isoformat()}
        )

    steps = filter_day(spec, day, grid_day)
    means, variances = hourly_marginals(spec, steps)
    samples = sample_daily_statistic(means, variances, spec.variable, n_samples, seed)
    p1 = empirical_p1(samples, reported_daily.value)
    return TestResult(
        test_id=SUBDAILY_TEST,
        applicable=True,
        p1=p1,
        cl=confidence_level(p1),
        predicted_median=float(np.median(samples)),
        predicted_sigma=float(np.std(samples)),
        cal_mse=spec.cal_mse,
        inputs_used={"slots_covered": covered, "hourly_means": means.tolist(), "n_samples": n_samples},
    )


class SubdailyTest(QualityTestInterface):
    """calibrate_dlm/run_subdaily_test behind the common interface"""

    def __init__(self, settings: Optional[CalibrationSettings] = None):
        self.settings = settings or CalibrationSettings()

    @property
    def test_id(self) -> TestId:
        return SUBDAILY_TEST

    def calibrate(self, inputs: CalibrationInputs) -> DlmSpec:
        return calibrate_dlm(inputs.subdaily_history, inputs.grid_subdaily_history, self.settings)

    def run(self, model: DlmSpec, obs: Observation, day: DayInputs) -> TestResult:
        return run_subdaily_test(
            model,
            day.subdaily_day,
            day.grid_subdaily_day,
            obs,
            n_samples=self.settings.subdaily_samples,
            seed=self.settings.seed,
            min_slots=self.settings.min_subdaily_slots,
        )

    def model_from_dict(self, data: Dict[str, Any]) -> DlmSpec:
        return DlmSpec.from_dict(data)
