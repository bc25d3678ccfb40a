#!/usr/bin/env python3
"""
Spatial Test

Predicts a TPAWS value from the same day's official neighbors: the
target and neighbor values are log-sinh transformed, the target is
regressed on its neighbors by LASSO with a cross-validated penalty, and
out-of-fold residuals give the error model of the prediction.
"""

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from contracts import InsufficientOverlapError, NoNeighborsError, NotApplicableError, TestKind
from processors.core import DailyContext, DailySeries, Observation, WeatherVariable, variable_limits
from processors.interfaces import (
    CalibrationInputs,
    DayInputs,
    PredictiveDistribution,
    QualityTestInterface,
    TestId,
    TestResult,
)
from processors.solvers import GaussianErrorModel, LassoModel, robust_gaussian_fit
from processors.transform import TransformKind, TransformSpec, fit as fit_transform, forward

from .base import (
    CalibrationSettings,
    aligned_frame,
    day_numbers,
    fit_lasso_cv,
    require_overlap,
    score,
    select_neighbors,
    window_of,
)

logger = logging.getLogger(__name__)

SPATIAL_TEST = TestId(TestKind.SPATIAL)
MIN_WET_DAYS = 30


@dataclass
class SpatialModel:
    """Calibrated neighbor regression for one TPAWS station"""
    target_station: str
    variable: WeatherVariable
    neighbor_ids: List[str]
    lasso: LassoModel
    transform: TransformSpec
    error: GaussianErrorModel
    calibration_window: Tuple[date, date]
    cal_mse: float
    n_days: int
    zero_mass: Optional[float] = None
    lambda_index: int = 0
    kind: str = field(default="Spatial", init=False)

    def __post_init__(self):
        if len(self.neighbor_ids) < 2:
            raise ValueError("A spatial model needs at least 2 neighbors")
        if self.cal_mse < 0:
            raise ValueError("cal_mse must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "target_station": self.target_station,
            "variable": self.variable.value,
            "neighbor_ids": list(self.neighbor_ids),
            "lasso": self.lasso.to_dict(),
            "transform": self.transform.to_dict(),
            "error": self.error.to_dict(),
            "calibration_window": [d.isoformat() for d in self.calibration_window],
            "cal_mse": self.cal_mse,
            "n_days": self.n_days,
            "zero_mass": self.zero_mass,
            "lambda_index": self.lambda_index,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        return cls(
            target_station=data["target_station"],
            variable=WeatherVariable(data["variable"]),
            neighbor_ids=list(data["neighbor_ids"]),
            lasso=LassoModel.from_dict(data["lasso"]),
            transform=TransformSpec.from_dict(data["transform"]),
            error=GaussianErrorModel.from_dict(data["error"]),
            calibration_window=tuple(date.fromisoformat(d) for d in data["calibration_window"]),
            cal_mse=float(data["cal_mse"]),
            n_days=int(data["n_days"]),
            zero_mass=None if data.get("zero_mass") is None else float(data["zero_mass"]),
            lambda_index=int(data.get("lambda_index", 0)),
        )


def physical_floor(variable: WeatherVariable) -> float:
    return variable_limits(variable, DailyContext()).lower


def calibrate_regression(
    target_series: DailySeries,
    neighbor_series: Dict[str, DailySeries],
    settings: CalibrationSettings,
    transform_kind: TransformKind,
    zero_inflated: bool,
    model_cls=SpatialModel
) -> SpatialModel:
    """
    Fit the transformed neighbor regression shared by the spatial and
    trend tests.

    Raises:
        NoNeighborsError: Fewer than 2 neighbor series, or fewer than 2
            that overlap the target on min_calibration_days days
        InsufficientOverlapError: Too few target days, or too few days
            common to target and neighbors
    """
    station = target_series.station_id
    if len(neighbor_series) < settings.min_neighbors:
        raise NoNeighborsError(
            f"{station}: {len(neighbor_series)} official neighbors (< {settings.min_neighbors})",
            context={"station": station, "neighbors": sorted(neighbor_series)}
        )

    reported = int(target_series.values.notna().sum())
    if reported < settings.min_calibration_days:
        raise InsufficientOverlapError(
            f"{station}: {reported} reported calibration days (< {settings.min_calibration_days})",
            context={"station": station, "days": reported}
        )

    frame = aligned_frame(target_series, neighbor_series, settings.min_calibration_days)
    neighbor_ids = [c for c in frame.columns if c != "__target__"]
    if len(neighbor_ids) < settings.min_neighbors:
        raise NoNeighborsError(
            f"{station}: {len(neighbor_ids)} neighbors overlap the target on "
            f"{settings.min_calibration_days} days (< {settings.min_neighbors})",
            context={"station": station, "neighbors": sorted(neighbor_series), "kept": neighbor_ids}
        )
    require_overlap(frame, settings.min_calibration_days, f"{station} calibration")
    if len(frame) < settings.recommended_calibration_days:
        logger.warning(
            f"{station}: {len(frame)} calibration days, {settings.recommended_calibration_days} recommended"
        )

    # dry days count towards the calibration period
    n_days = len(frame)
    days = day_numbers(frame.index)
    variable = target_series.variable
    floor = physical_floor(variable)
    target = frame["__target__"].to_numpy()
    zero_mass = None
    if zero_inflated:
        wet = target > floor
        zero_mass = float(np.mean(~wet))
        frame = frame[wet]
        target = target[wet]
        days = days[wet]
        if len(frame) < MIN_WET_DAYS:
            raise InsufficientOverlapError(
                f"{station}: {len(frame)} wet calibration days (< {MIN_WET_DAYS})",
                context={"station": station}
            )

    lower = floor if transform_kind == TransformKind.LOG_SINH else None
    transform = fit_transform(target, transform_kind, lower_bound=lower)
    z_target = np.asarray(forward(transform, target), dtype=float)
    X = _transform_predictors(frame[neighbor_ids].to_numpy(), transform, floor)

    cv = fit_lasso_cv(X, z_target, settings, days=days)
    error = robust_gaussian_fit(cv.oof_residuals)
    cal_mse = float(np.mean(cv.oof_residuals ** 2))

    model = model_cls(
        target_station=station,
        variable=variable,
        neighbor_ids=neighbor_ids,
        lasso=cv.model,
        transform=transform,
        error=error,
        calibration_window=window_of(frame.index),
        cal_mse=cal_mse,
        n_days=n_days,
        zero_mass=zero_mass,
        lambda_index=cv.chosen_index,
    )
    logger.info(
        f"{station}: {model.kind} model calibrated on {model.n_days} days, "
        f"{int(np.count_nonzero(cv.model.coefficients))}/{len(neighbor_ids)} neighbors active, "
        f"cal_mse={cal_mse:.4g}"
    )
    return model


def _transform_predictors(values: np.ndarray, transform: TransformSpec, floor: float) -> np.ndarray:
    if transform.is_identity:
        return np.asarray(values, dtype=float)
    # official values are quality controlled; keep them inside the support
    return np.asarray(forward(transform, np.maximum(values, floor)), dtype=float)


def calibrate_spatial(
    target_series: DailySeries,
    neighbor_series: Dict[str, DailySeries],
    settings: Optional[CalibrationSettings] = None
) -> SpatialModel:
    """
    Calibrate the spatial test for one TPAWS station.

    Args:
        target_series: TPAWS daily series
        neighbor_series: Official neighbor series (already within the radius)
        settings: Calibration settings

    Returns:
        SpatialModel

    Raises:
        NoNeighborsError: Fewer than 2 neighbors overlapping the target
        InsufficientOverlapError: Fewer than min_calibration_days common days
    """
    settings = settings or CalibrationSettings()
    variable = target_series.variable
    return calibrate_regression(
        target_series,
        neighbor_series,
        settings,
        settings.transform_kind(variable),
        zero_inflated=variable == WeatherVariable.RAIN,
    )


def regression_prediction(
    model: SpatialModel,
    values: Dict[str, float]
) -> Tuple[float, Dict[str, float], List[str]]:
    """Transformed-space mean from the available neighbor values, imputing absent ones."""
    floor = physical_floor(model.variable)
    row = np.empty(len(model.neighbor_ids))
    used: Dict[str, float] = {}
    imputed: List[str] = []
    for j, neighbor_id in enumerate(model.neighbor_ids):
        value = values.get(neighbor_id)
        if value is None or not np.isfinite(value):
            row[j] = model.lasso.predictor_means[j]
            imputed.append(neighbor_id)
        else:
            row[j] = _transform_predictors(np.array([value]), model.transform, floor)[0]
            used[neighbor_id] = float(value)
    mean = float(model.lasso.predict(row[None, :])[0]) + model.error.mu
    return mean, used, imputed


def run_spatial_test(
    model: SpatialModel,
    obs: Observation,
    todays_neighbors: Dict[str, float]
) -> TestResult:
    """
    Score an observation against the neighbor-based prediction.

    Raises:
        NotApplicableError: Fewer than 2 calibrated neighbors report today
    """
    reporting = [n for n in model.neighbor_ids
                 if todays_neighbors.get(n) is not None and np.isfinite(todays_neighbors[n])]
    if len(reporting) < 2:
        raise NotApplicableError(
            f"{len(reporting)} calibrated neighbors reporting (< 2)",
            context={"station": obs.station_id, "date": obs.date.isoformat()}
        )

    mean, used, imputed = regression_prediction(model, todays_neighbors)
    if imputed:
        logger.debug(f"{obs.station_id} {obs.date}: imputed neighbors {imputed}")
    dist = PredictiveDistribution(
        mean=mean,
        sigma=model.error.sigma,
        transform=model.transform,
        zero_mass=model.zero_mass,
        lower_bound=physical_floor(model.variable),
    )
    return score(SPATIAL_TEST, obs.value, dist, model.cal_mse, {"neighbors": used, "imputed": imputed})


class SpatialTest(QualityTestInterface):
    """Neighbor selection + calibrate_spatial/run_spatial_test"""

    def __init__(self, settings: Optional[CalibrationSettings] = None):
        self.settings = settings or CalibrationSettings()

    @property
    def test_id(self) -> TestId:
        return SPATIAL_TEST

    def neighbor_series(self, inputs: CalibrationInputs) -> Dict[str, DailySeries]:
        neighbors = select_neighbors(inputs.target, inputs.official_stations, self.settings.radius_km)
        chosen = [n.id for n in neighbors if n.id in inputs.official_series][:self.settings.max_neighbors]
        return {station_id: inputs.official_series[station_id] for station_id in chosen}

    def calibrate(self, inputs: CalibrationInputs) -> SpatialModel:
        return calibrate_spatial(inputs.target_series, self.neighbor_series(inputs), self.settings)

    def run(self, model: SpatialModel, obs: Observation, day: DayInputs) -> TestResult:
        return run_spatial_test(model, obs, day.official_today)

    def model_from_dict(self, data: Dict[str, Any]) -> SpatialModel:
        return SpatialModel.from_dict(data)
