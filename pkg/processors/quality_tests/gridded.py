#!/usr/bin/env python3
"""
Gridded Data Test

Compares a TPAWS observation with an official gridded product at the
site. The grid value is bias corrected by a repeated-median regression in
transformed space, and the regression residuals form the error model.
"""

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.stats import siegelslopes

from contracts import (
    GridProductKind,
    InsufficientOverlapError,
    NotApplicableError,
    ProductVariableMismatchError,
    TestKind,
)
from processors.assessment import product_permitted
from processors.core import DailySeries, Observation, WeatherVariable
from processors.interfaces import (
    CalibrationInputs,
    DayInputs,
    PredictiveDistribution,
    QualityTestInterface,
    TestId,
    TestResult,
)
from processors.solvers import GaussianErrorModel, robust_gaussian_fit
from processors.transform import TransformKind, TransformSpec, fit as fit_transform, forward

from .base import CalibrationSettings, aligned_frame, require_overlap, score, window_of
from .spatial import MIN_WET_DAYS, physical_floor

logger = logging.getLogger(__name__)

MAX_SLOPE_PAIRS = 500


@dataclass
class GriddedModel:
    """Bias-corrected grid prediction for one station and product"""
    target_station: str
    variable: WeatherVariable
    product: GridProductKind
    transform: TransformSpec
    error: GaussianErrorModel
    bias_slope: float
    bias_intercept: float
    cal_mse: float
    calibration_window: Tuple[date, date]
    n_days: int
    zero_mass: Optional[float] = None
    kind: str = field(default="Gridded", init=False)

    def __post_init__(self):
        if not product_permitted(self.product, self.variable):
            raise ProductVariableMismatchError(
                f"{self.product.value} is not an official source for {self.variable.value}"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "target_station": self.target_station,
            "variable": self.variable.value,
            "product": self.product.value,
            "transform": self.transform.to_dict(),
            "error": self.error.to_dict(),
            "bias_slope": self.bias_slope,
            "bias_intercept": self.bias_intercept,
            "cal_mse": self.cal_mse,
            "calibration_window": [d.isoformat() for d in self.calibration_window],
            "n_days": self.n_days,
            "zero_mass": self.zero_mass,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GriddedModel":
        return cls(
            target_station=data["target_station"],
            variable=WeatherVariable(data["variable"]),
            product=GridProductKind(data["product"]),
            transform=TransformSpec.from_dict(data["transform"]),
            error=GaussianErrorModel.from_dict(data["error"]),
            bias_slope=float(data["bias_slope"]),
            bias_intercept=float(data["bias_intercept"]),
            cal_mse=float(data["cal_mse"]),
            calibration_window=tuple(date.fromisoformat(d) for d in data["calibration_window"]),
            n_days=int(data["n_days"]),
            zero_mass=None if data.get("zero_mass") is None else float(data["zero_mass"]),
        )


def _subsample(n: int, size: int, seed: int) -> np.ndarray:
    if n <= size:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=size, replace=False))


def calibrate_gridded(
    target_series: DailySeries,
    grid_series: DailySeries,
    product: GridProductKind,
    settings: Optional[CalibrationSettings] = None
) -> GriddedModel:
    """
    Calibrate the gridded test for one station and product.

    Args:
        target_series: TPAWS daily series
        grid_series: The product extracted at the site
        product: Which official product the grid is
        settings: Calibration settings

    Raises:
        ProductVariableMismatchError: Product is not a source for the variable
        InsufficientOverlapError: Fewer than min_calibration_days common days
    """
    settings = settings or CalibrationSettings()
    variable = target_series.variable
    station = target_series.station_id
    if not product_permitted(product, variable):
        raise ProductVariableMismatchError(
            f"{product.value} is not an official source for {variable.value}",
            context={"product": product.value, "variable": variable.value}
        )

    frame = aligned_frame(target_series, {"__grid__": grid_series}, 0)
    require_overlap(frame, settings.min_calibration_days, f"{station} {product.value} calibration")
    n_days = len(frame)

    floor = physical_floor(variable)
    target = frame["__target__"].to_numpy()
    grid = np.maximum(frame["__grid__"].to_numpy(), floor)
    zero_mass = None
    if variable == WeatherVariable.RAIN:
        wet = target > floor
        zero_mass = float(np.mean(~wet))
        frame, target, grid = frame[wet], target[wet], grid[wet]
        if len(frame) < MIN_WET_DAYS:
            raise InsufficientOverlapError(f"{station}: {len(frame)} wet calibration days (< {MIN_WET_DAYS})")

    kind = settings.transform_kind(variable)
    transform = fit_transform(target, kind, lower_bound=floor if kind == TransformKind.LOG_SINH else None)
    z_target = np.asarray(forward(transform, target), dtype=float)
    z_grid = np.asarray(forward(transform, grid), dtype=float)

    picked = _subsample(z_target.size, MAX_SLOPE_PAIRS, settings.seed)
    if np.ptp(z_grid[picked]) > 0:
        slope, intercept = siegelslopes(z_target[picked], z_grid[picked])
    else:
        slope, intercept = 0.0, float(np.median(z_target))
    residuals = z_target - (intercept + slope * z_grid)
    error = robust_gaussian_fit(residuals)

    model = GriddedModel(
        target_station=station,
        variable=variable,
        product=product,
        transform=transform,
        error=error,
        bias_slope=float(slope),
        bias_intercept=float(intercept),
        cal_mse=float(np.mean(residuals ** 2)),
        calibration_window=window_of(frame.index),
        n_days=n_days,
        zero_mass=zero_mass,
    )
    logger.info(
        f"{station}: Gridded({product.value}) calibrated on {model.n_days} days, "
        f"slope={model.bias_slope:.4f} intercept={model.bias_intercept:.4f} cal_mse={model.cal_mse:.4g}"
    )
    return model


def run_gridded_test(model: GriddedModel, obs: Observation, todays_grid_value: Optional[float]) -> TestResult:
    """
    Score an observation against the bias-corrected grid value.

    Raises:
        NotApplicableError: Grid value missing for the day
    """
    if todays_grid_value is None or not np.isfinite(todays_grid_value):
        raise NotApplicableError(
            f"{model.product.value} grid value missing",
            context={"station": obs.station_id, "date": obs.date.isoformat()}
        )
    floor = physical_floor(model.variable)
    z_grid = float(forward(model.transform, max(float(todays_grid_value), floor)))
    mean = model.bias_intercept + model.bias_slope * z_grid + model.error.mu
    dist = PredictiveDistribution(
        mean=mean,
        sigma=model.error.sigma,
        transform=model.transform,
        zero_mass=model.zero_mass,
        lower_bound=floor,
    )
    test_id = TestId(TestKind.GRIDDED, model.product)
    return score(test_id, obs.value, dist, model.cal_mse, {"grid_value": float(todays_grid_value)})


class GriddedTest(QualityTestInterface):
    """One instance per product"""

    def __init__(self, product: GridProductKind, settings: Optional[CalibrationSettings] = None):
        self.product = GridProductKind(product)
        self.settings = settings or CalibrationSettings()

    @property
    def test_id(self) -> TestId:
        return TestId(TestKind.GRIDDED, self.product)

    def calibrate(self, inputs: CalibrationInputs) -> GriddedModel:
        grid_series = inputs.grid_series.get(self.product)
        if grid_series is None:
            raise InsufficientOverlapError(
                f"{inputs.target.id}: no {self.product.value} grid series at the site",
                context={"station": inputs.target.id}
            )
        return calibrate_gridded(inputs.target_series, grid_series, self.product, self.settings)

    def run(self, model: GriddedModel, obs: Observation, day: DayInputs) -> TestResult:
        return run_gridded_test(model, obs, day.grid_today.get(self.product))

    def model_from_dict(self, data: Dict[str, Any]) -> GriddedModel:
        return GriddedModel.from_dict(data)
