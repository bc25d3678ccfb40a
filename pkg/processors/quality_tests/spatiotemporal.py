#!/usr/bin/env python3
"""
Spatiotemporal Test

1. Screening: Hampel cleaning, trend comparison, ANOVA with Tukey HSD on
   deseasonalized monthly means, and LASSO selection pick the official
   stations that behave like the TPAWS site.
2. Three linear candidate models are fitted in transformed space on
   those similar stations:
   - STAR: target lags 1-2, similar stations at lags 0-1
   - STLM: similar stations at lag 0 plus day-of-year harmonics
   - STAM: similar stations at lag 0 plus a cubic B-spline of day-of-year
3. Bayesian model averaging weights the three out-of-fold predictions;
   the test scores an observation against the resulting Gaussian mixture.
"""

import math
import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.interpolate import BSpline
from scipy.optimize import brentq
from scipy.stats import f_oneway, linregress, tukey_hsd

from contracts import (
    InsufficientOverlapError,
    NoCandidatesError,
    NotApplicableError,
    TestKind,
    TransformDomainError,
)
from processors.assessment import confidence_level
from processors.core import DailySeries, Observation, WeatherVariable
from processors.interfaces import (
    CalibrationInputs,
    DayInputs,
    QualityTestInterface,
    TestId,
    TestResult,
)
from processors.solvers import (
    SIGMA_FLOOR,
    BmaWeights,
    GaussianErrorModel,
    LassoModel,
    bma_fit,
    mixture_cdf,
    mixture_moments,
    robust_gaussian_fit,
)
from processors.transform import TransformKind, TransformSpec, fit as fit_transform, forward, inverse

from .base import CalibrationSettings, day_numbers, fit_lasso_cv, select_neighbors, window_of
from .spatial import physical_floor

logger = logging.getLogger(__name__)

SPATIOTEMPORAL_TEST = TestId(TestKind.SPATIOTEMPORAL)
YEAR_DAYS = 365.25
SPLINE_DEGREE = 3
ANOVA_ALPHA = 0.05
TREND_SE_MULTIPLIER = 3.0


# =============================================================================
# HAMPEL FILTER
# =============================================================================

@dataclass
class HampelResult:
    flags: np.ndarray
    cleaned: Union[DailySeries, np.ndarray]

    @property
    def outlier_fraction(self) -> float:
        return float(np.mean(self.flags)) if self.flags.size else 0.0


def hampel_filter(
    series: Union[DailySeries, Sequence[float]],
    window: int = 15,
    k: float = 3.0,
    sigma_floor: float = SIGMA_FLOOR
) -> HampelResult:
    """
    Flag points further than k robust sds from their window median.

    Windows are centred and truncated at the ends; flagged points are
    replaced by the window median in the cleaned output.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3: {window}")
    values = series.values.to_numpy() if isinstance(series, DailySeries) else np.asarray(series, dtype=float)
    half = window // 2
    padded = np.concatenate([np.full(half, np.nan), values, np.full(half, np.nan)])
    windows = sliding_window_view(padded, window)
    medians = np.nanmedian(windows, axis=1)
    mad = np.nanmedian(np.abs(windows - medians[:, None]), axis=1)
    scale = np.maximum(1.4826 * mad, sigma_floor)
    flags = np.abs(values - medians) > k * scale
    cleaned_values = np.where(flags, medians, values)

    if isinstance(series, DailySeries):
        cleaned = DailySeries(series.station_id, series.variable,
                              pd.Series(cleaned_values, index=series.values.index))
    else:
        cleaned = cleaned_values
    return HampelResult(flags=flags, cleaned=cleaned)


# =============================================================================
# SEASONALITY HELPERS
# =============================================================================

def day_of_year(index: pd.DatetimeIndex) -> np.ndarray:
    return np.asarray(index.dayofyear, dtype=float)


def harmonic_features(doy: np.ndarray, n_harmonics: int) -> np.ndarray:
    """sin/cos pairs of 2*pi*k*d/365.25, k = 1..n_harmonics."""
    doy = np.atleast_1d(np.asarray(doy, dtype=float))
    columns = []
    for harmonic in range(1, n_harmonics + 1):
        angle = 2.0 * math.pi * harmonic * doy / YEAR_DAYS
        columns.extend([np.sin(angle), np.cos(angle)])
    if not columns:
        return np.zeros((doy.size, 0))
    return np.column_stack(columns)


def spline_knots(n_knots: int) -> np.ndarray:
    """Clamped cubic knot vector over [0, 366] with n_knots equally spaced breakpoints."""
    breaks = np.linspace(0.0, 366.0, n_knots)
    return np.concatenate([[0.0] * SPLINE_DEGREE, breaks, [366.0] * SPLINE_DEGREE])


def spline_features(doy: np.ndarray, n_knots: int) -> np.ndarray:
    """Cubic B-spline basis of day-of-year, last function dropped (basis sums to 1)."""
    doy = np.atleast_1d(np.asarray(doy, dtype=float))
    basis = BSpline.design_matrix(doy, spline_knots(n_knots), SPLINE_DEGREE).toarray()
    return basis[:, :-1]


def deseasonalize(series: pd.Series, n_harmonics: int = 2) -> Tuple[pd.Series, np.ndarray]:
    """
    Remove the annual cycle while keeping level and trend.

    The harmonics are fitted jointly with an intercept and a linear trend;
    only the harmonic part is subtracted.
    """
    doy = day_of_year(series.index)
    t = (series.index - series.index[0]).days.to_numpy(dtype=float)
    harmonics = harmonic_features(doy, n_harmonics)
    design = np.column_stack([np.ones_like(t), t, harmonics])
    coef, *_ = np.linalg.lstsq(design, series.to_numpy(), rcond=None)
    seasonal = harmonics @ coef[2:]
    return series - seasonal, t


# =============================================================================
# SCREENING
# =============================================================================

@dataclass
class ScreeningReport:
    """Similarity diagnostics of one candidate official station"""
    candidate_id: str
    hampel_outlier_fraction: float
    trend_slope: float
    anova_group: int
    selected_by_lasso: bool
    similar: bool
    trend_slope_se: float = 0.0
    trend_compatible: bool = True
    tukey_pvalue: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _trend(series: pd.Series) -> Tuple[float, float]:
    deseasonalized, t = deseasonalize(series)
    fit = linregress(t, deseasonalized.to_numpy())
    return float(fit.slope), float(fit.stderr)


def _monthly_means(series: pd.Series) -> np.ndarray:
    deseasonalized, _ = deseasonalize(series)
    return deseasonalized.groupby(deseasonalized.index.to_period("M")).mean().to_numpy()


def _tukey_groups(labels: List[str], groups: List[np.ndarray]) -> Tuple[Dict[str, int], Dict[str, float]]:
    """
    Greedy grouping from pairwise Tukey HSD p-values; index 0 is the
    target and defines group 0. Returns labels and p-values vs the target.
    """
    if f_oneway(*groups).pvalue >= ANOVA_ALPHA:
        return {name: 0 for name in labels}, {name: 1.0 for name in labels}
    pvalues = tukey_hsd(*groups).pvalue
    assigned = {labels[0]: 0}
    representatives = [0]
    for i in range(1, len(labels)):
        for group_label, rep in enumerate(representatives):
            if pvalues[rep, i] >= ANOVA_ALPHA:
                assigned[labels[i]] = group_label
                break
        else:
            assigned[labels[i]] = len(representatives)
            representatives.append(i)
    return assigned, {labels[i]: float(pvalues[0, i]) for i in range(len(labels))}


def screen_similar_stations(
    target: DailySeries,
    candidates: Dict[str, DailySeries],
    settings: Optional[CalibrationSettings] = None
) -> List[ScreeningReport]:
    """
    Decide which candidate stations are similar to the target.

    similar = selected by LASSO AND in the target's Tukey group AND
    trend-compatible (slopes within 3 combined standard errors).
    Candidates are processed in id order, so the result does not depend
    on the order of the mapping.

    Raises:
        NoCandidatesError: No candidate overlaps the target on
            min_calibration_days days
    """
    settings = settings or CalibrationSettings()
    clean_target = hampel_filter(target).cleaned
    target_index = clean_target.values.index

    qualifying = sorted(
        cid for cid, series in candidates.items()
        if series.values.index.intersection(target_index).size >= settings.min_calibration_days
    )
    if not qualifying:
        raise NoCandidatesError(
            f"{target.station_id}: no candidate shares {settings.min_calibration_days} days with the target",
            context={"station": target.station_id, "candidates": sorted(candidates)}
        )

    cleaned: Dict[str, pd.Series] = {}
    fractions: Dict[str, float] = {}
    for cid in qualifying:
        result = hampel_filter(candidates[cid])
        cleaned[cid] = result.cleaned.values
        fractions[cid] = result.outlier_fraction

    target_slope, target_se = _trend(clean_target.values)
    trends = {cid: _trend(cleaned[cid]) for cid in qualifying}

    names = ["__target__"] + qualifying
    monthly = [_monthly_means(clean_target.values)] + [_monthly_means(cleaned[cid]) for cid in qualifying]
    groups, tukey_p = _tukey_groups(names, monthly)

    frame = pd.DataFrame({"__target__": clean_target.values, **cleaned}).dropna()
    selected = {cid: False for cid in qualifying}
    if len(frame) >= settings.cv_folds * 2:
        cv = fit_lasso_cv(frame[qualifying].to_numpy(), frame["__target__"].to_numpy(), settings,
                          days=day_numbers(frame.index))
        selected = {cid: bool(cv.model.coefficients[j] != 0.0) for j, cid in enumerate(qualifying)}

    reports = []
    for cid in qualifying:
        slope, se = trends[cid]
        compatible = abs(slope - target_slope) <= TREND_SE_MULTIPLIER * math.hypot(se, target_se)
        same_group = groups[cid] == groups["__target__"]
        reports.append(ScreeningReport(
            candidate_id=cid,
            hampel_outlier_fraction=fractions[cid],
            trend_slope=slope,
            anova_group=groups[cid],
            selected_by_lasso=selected[cid],
            similar=selected[cid] and same_group and compatible,
            trend_slope_se=se,
            trend_compatible=compatible,
            tukey_pvalue=tukey_p[cid],
        ))
    logger.info(
        f"{target.station_id}: screening kept {sum(r.similar for r in reports)}/{len(reports)} similar stations"
    )
    return reports


# =============================================================================
# CANDIDATE MODELS
# =============================================================================

MODEL_NAMES = ("STAR", "STAM", "STLM")


@dataclass
class StLinearModel:
    """One candidate model: LASSO coefficients over named features"""
    name: str
    feature_names: List[str]
    lasso: LassoModel
    error: GaussianErrorModel

    def predict(self, features: Dict[str, float]) -> float:
        row = np.array([[features[f] for f in self.feature_names]])
        return float(self.lasso.predict(row)[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "feature_names": list(self.feature_names),
            "lasso": self.lasso.to_dict(),
            "error": self.error.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StLinearModel":
        return cls(
            name=data["name"],
            feature_names=list(data["feature_names"]),
            lasso=LassoModel.from_dict(data["lasso"]),
            error=GaussianErrorModel.from_dict(data["error"]),
        )


@dataclass
class StModelSet:
    """The three candidate models and their BMA weights"""
    target_station: str
    variable: WeatherVariable
    star: StLinearModel
    stam: StLinearModel
    stlm: StLinearModel
    bma: BmaWeights
    similar_ids: List[str]
    transform: TransformSpec
    cal_mse: float
    calibration_window: Tuple[date, date]
    n_days: int
    n_harmonics: int = 2
    n_knots: int = 8
    kind: str = field(default="SpatioTemporal", init=False)

    def __post_init__(self):
        if self.bma.weights.size != 3:
            raise ValueError("BMA weights must cover the three candidate models")
        if self.cal_mse < 0:
            raise ValueError("cal_mse must be non-negative")

    @property
    def members(self) -> Tuple[StLinearModel, StLinearModel, StLinearModel]:
        return self.star, self.stam, self.stlm

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "target_station": self.target_station,
            "variable": self.variable.value,
            "star": self.star.to_dict(),
            "stam": self.stam.to_dict(),
            "stlm": self.stlm.to_dict(),
            "bma": self.bma.to_dict(),
            "similar_ids": list(self.similar_ids),
            "transform": self.transform.to_dict(),
            "cal_mse": self.cal_mse,
            "calibration_window": [d.isoformat() for d in self.calibration_window],
            "n_days": self.n_days,
            "n_harmonics": self.n_harmonics,
            "n_knots": self.n_knots,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StModelSet":
        return cls(
            target_station=data["target_station"],
            variable=WeatherVariable(data["variable"]),
            star=StLinearModel.from_dict(data["star"]),
            stam=StLinearModel.from_dict(data["stam"]),
            stlm=StLinearModel.from_dict(data["stlm"]),
            bma=BmaWeights.from_dict(data["bma"]),
            similar_ids=list(data["similar_ids"]),
            transform=TransformSpec.from_dict(data["transform"]),
            cal_mse=float(data["cal_mse"]),
            calibration_window=tuple(date.fromisoformat(d) for d in data["calibration_window"]),
            n_days=int(data["n_days"]),
            n_harmonics=int(data.get("n_harmonics", 2)),
            n_knots=int(data.get("n_knots", 8)),
        )


def _feature_names(similar_ids: Sequence[str], n_harmonics: int, n_knots: int) -> Dict[str, List[str]]:
    lag0 = [f"lag0:{sid}" for sid in similar_ids]
    lag1 = [f"lag1:{sid}" for sid in similar_ids]
    harmonics = [f"h{k}_{fn}" for k in range(1, n_harmonics + 1) for fn in ("sin", "cos")]
    splines = [f"spline_{j}" for j in range(n_knots + SPLINE_DEGREE - 2)]
    return {
        "STAR": ["target_lag1", "target_lag2"] + lag0 + lag1,
        "STAM": lag0 + splines,
        "STLM": lag0 + harmonics,
    }


def build_features(
    doy: np.ndarray,
    target_lag1: np.ndarray,
    target_lag2: np.ndarray,
    similar_lag0: Dict[str, np.ndarray],
    similar_lag1: Dict[str, np.ndarray],
    n_harmonics: int,
    n_knots: int
) -> pd.DataFrame:
    """Every feature any candidate model uses, one row per day."""
    columns: Dict[str, np.ndarray] = {
        "target_lag1": np.atleast_1d(target_lag1),
        "target_lag2": np.atleast_1d(target_lag2),
    }
    for sid in similar_lag0:
        columns[f"lag0:{sid}"] = np.atleast_1d(similar_lag0[sid])
        columns[f"lag1:{sid}"] = np.atleast_1d(similar_lag1[sid])
    harmonics = harmonic_features(doy, n_harmonics)
    for j in range(harmonics.shape[1]):
        columns[f"h{j // 2 + 1}_{'sin' if j % 2 == 0 else 'cos'}"] = harmonics[:, j]
    splines = spline_features(doy, n_knots)
    for j in range(splines.shape[1]):
        columns[f"spline_{j}"] = splines[:, j]
    return pd.DataFrame(columns)


def _transform_values(values: np.ndarray, transform: TransformSpec, floor: float) -> np.ndarray:
    if transform.is_identity:
        return np.asarray(values, dtype=float)
    return np.asarray(forward(transform, np.maximum(values, floor)), dtype=float)


def fit_st_models(
    target: DailySeries,
    similar: Dict[str, DailySeries],
    settings: Optional[CalibrationSettings] = None,
    n_harmonics: int = 2,
    n_knots: int = 8,
    fixed_lambda: Optional[float] = None
) -> StModelSet:
    """
    Fit STAR, STAM and STLM on common days and weight them by BMA.

    Args:
        target: TPAWS daily series
        similar: Series of the stations screening found similar
        settings: Calibration settings
        n_harmonics: Harmonic pairs in STLM
        n_knots: Spline breakpoints in STAM
        fixed_lambda: Use this penalty instead of cross-validation

    Raises:
        InsufficientOverlapError: No similar station, or fewer than
            min_calibration_days days with every feature present
    """
    settings = settings or CalibrationSettings()
    station = target.station_id
    if not similar:
        raise InsufficientOverlapError(f"{station}: no similar stations to build spatiotemporal models on")
    similar_ids = sorted(similar)
    variable = target.variable
    floor = physical_floor(variable)

    kind = settings.transform_kind(variable)
    transform = fit_transform(target.values.to_numpy(), kind,
                              lower_bound=floor if kind == TransformKind.LOG_SINH else None)

    start = min([target.values.index.min()] + [similar[s].values.index.min() for s in similar_ids])
    end = max([target.values.index.max()] + [similar[s].values.index.max() for s in similar_ids])
    days = pd.date_range(start, end, freq="D")
    z_target = pd.Series(_transform_values(target.values.to_numpy(), transform, floor),
                         index=target.values.index).reindex(days)
    z_similar = {
        sid: pd.Series(_transform_values(similar[sid].values.to_numpy(), transform, floor),
                       index=similar[sid].values.index).reindex(days)
        for sid in similar_ids
    }

    features = build_features(
        day_of_year(days),
        z_target.shift(1).to_numpy(),
        z_target.shift(2).to_numpy(),
        {sid: z_similar[sid].to_numpy() for sid in similar_ids},
        {sid: z_similar[sid].shift(1).to_numpy() for sid in similar_ids},
        n_harmonics,
        n_knots,
    )
    features.index = days
    features["__target__"] = z_target.to_numpy()
    frame = features.dropna()
    if len(frame) < settings.min_calibration_days:
        raise InsufficientOverlapError(
            f"{station}: {len(frame)} days with every spatiotemporal feature (< {settings.min_calibration_days})",
            context={"station": station, "days": len(frame)}
        )
    if len(frame) < settings.recommended_calibration_days:
        logger.warning(f"{station}: spatiotemporal models fitted on {len(frame)} days")

    y = frame["__target__"].to_numpy()
    names = _feature_names(similar_ids, n_harmonics, n_knots)
    members = {}
    oof_means = np.empty((len(frame), 3))
    for k, name in enumerate(MODEL_NAMES):
        cv = fit_lasso_cv(frame[names[name]].to_numpy(), y, settings, fixed_lambda=fixed_lambda,
                          days=day_numbers(frame.index))
        members[name] = StLinearModel(name, names[name], cv.model, robust_gaussian_fit(cv.oof_residuals))
        oof_means[:, k] = y - cv.oof_residuals

    bma = bma_fit(oof_means, y)
    mixture_mean = oof_means @ bma.weights
    model_set = StModelSet(
        target_station=station,
        variable=variable,
        star=members["STAR"],
        stam=members["STAM"],
        stlm=members["STLM"],
        bma=bma,
        similar_ids=similar_ids,
        transform=transform,
        cal_mse=float(np.mean((y - mixture_mean) ** 2)),
        calibration_window=window_of(frame.index),
        n_days=len(frame),
        n_harmonics=n_harmonics,
        n_knots=n_knots,
    )
    logger.info(
        f"{station}: spatiotemporal models on {model_set.n_days} days, "
        f"BMA weights STAR/STAM/STLM={np.round(bma.weights, 3).tolist()}, cal_mse={model_set.cal_mse:.4g}"
    )
    return model_set


# =============================================================================
# SCORING
# =============================================================================

@dataclass
class StInputs:
    """Values the candidate models need on the scoring day"""
    day_of_year: int
    target_lag1: Optional[float]
    target_lag2: Optional[float]
    similar_today: Dict[str, float] = field(default_factory=dict)
    similar_yesterday: Dict[str, float] = field(default_factory=dict)


def mixture_median(means: np.ndarray, sigmas: np.ndarray, weights: np.ndarray) -> float:
    lo = float(np.min(means - 10.0 * sigmas))
    hi = float(np.max(means + 10.0 * sigmas))
    return float(brentq(lambda x: mixture_cdf(x, means, sigmas, weights) - 0.5, lo, hi, xtol=1e-12))


def run_st_test(models: StModelSet, obs: Observation, todays_inputs: StInputs) -> TestResult:
    """
    Score an observation against the BMA mixture.

    Raises:
        NotApplicableError: A lag or similar-station value is missing
    """
    missing = []
    if todays_inputs.target_lag1 is None:
        missing.append("target_lag1")
    if todays_inputs.target_lag2 is None:
        missing.append("target_lag2")
    for sid in models.similar_ids:
        if todays_inputs.similar_today.get(sid) is None:
            missing.append(f"lag0:{sid}")
        if todays_inputs.similar_yesterday.get(sid) is None:
            missing.append(f"lag1:{sid}")
    if missing:
        raise NotApplicableError(
            f"missing spatiotemporal inputs: {', '.join(missing)}",
            context={"station": obs.station_id, "date": obs.date.isoformat(), "missing": missing}
        )

    floor = physical_floor(models.variable)

    def z(value: float) -> float:
        return float(_transform_values(np.array([value]), models.transform, floor)[0])

    row = build_features(
        np.array([float(todays_inputs.day_of_year)]),
        np.array([z(todays_inputs.target_lag1)]),
        np.array([z(todays_inputs.target_lag2)]),
        {sid: np.array([z(todays_inputs.similar_today[sid])]) for sid in models.similar_ids},
        {sid: np.array([z(todays_inputs.similar_yesterday[sid])]) for sid in models.similar_ids},
        models.n_harmonics,
        models.n_knots,
    ).iloc[0].to_dict()

    means = np.array([member.predict(row) for member in models.members])
    sigmas = models.bma.sigmas
    weights = models.bma.weights
    try:
        z_obs = float(forward(models.transform, obs.value))
        p1 = mixture_cdf(z_obs, means, sigmas, weights)
    except TransformDomainError as e:
        logger.debug(f"{obs.station_id} {obs.date}: {e}")
        p1 = 0.0
    median = mixture_median(means, sigmas, weights)
    return TestResult(
        test_id=SPATIOTEMPORAL_TEST,
        applicable=True,
        p1=p1,
        cl=confidence_level(p1),
        predicted_median=float(inverse(models.transform, median)),
        predicted_sigma=math.sqrt(mixture_moments(means, sigmas, weights)[1]),
        cal_mse=models.cal_mse,
        inputs_used={
            "member_means": dict(zip(MODEL_NAMES, means.tolist())),
            "weights": dict(zip(MODEL_NAMES, weights.tolist())),
            "similar_today": {sid: todays_inputs.similar_today[sid] for sid in models.similar_ids},
        },
    )


class SpatioTemporalTest(QualityTestInterface):
    """Screening + fit_st_models/run_st_test"""

    def __init__(self, settings: Optional[CalibrationSettings] = None):
        self.settings = settings or CalibrationSettings()

    @property
    def test_id(self) -> TestId:
        return SPATIOTEMPORAL_TEST

    def calibrate(self, inputs: CalibrationInputs) -> StModelSet:
        neighbors = select_neighbors(inputs.target, inputs.official_stations, self.settings.radius_km)
        chosen = [n.id for n in neighbors if n.id in inputs.official_series][:self.settings.max_neighbors]
        candidates = {sid: inputs.official_series[sid] for sid in chosen}
        reports = screen_similar_stations(inputs.target_series, candidates, self.settings)
        similar = {r.candidate_id: candidates[r.candidate_id] for r in reports if r.similar}
        return fit_st_models(inputs.target_series, similar, self.settings)

    def run(self, model: StModelSet, obs: Observation, day: DayInputs) -> TestResult:
        inputs = StInputs(
            day_of_year=day.day.timetuple().tm_yday,
            target_lag1=day.target_yesterday,
            target_lag2=day.target_two_days_ago,
            similar_today=day.official_today,
            similar_yesterday=day.official_yesterday,
        )
        return run_st_test(model, obs, inputs)

    def model_from_dict(self, data: Dict[str, Any]) -> StModelSet:
        return StModelSet.from_dict(data)
