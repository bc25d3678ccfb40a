#!/usr/bin/env python3
"""
Trend Test

The spatial test applied to day-to-day changes: yesterday's TPAWS value
plus the change implied by the official neighbors predicts today's value.
Changes are modelled without a transform.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from contracts import NotApplicableError, TestKind
from processors.core import DailySeries, Observation
from processors.interfaces import (
    CalibrationInputs,
    DayInputs,
    PredictiveDistribution,
    TestId,
    TestResult,
)
from processors.transform import TransformKind

from .base import CalibrationSettings, score
from .spatial import SpatialModel, SpatialTest, calibrate_regression, regression_prediction

logger = logging.getLogger(__name__)

TREND_TEST = TestId(TestKind.TREND)


@dataclass
class TrendModel(SpatialModel):
    """Neighbor regression fitted on day-to-day differences"""
    kind: str = field(default="Trend", init=False)


def calibrate_trend(
    target_series: DailySeries,
    neighbor_series: Dict[str, DailySeries],
    settings: Optional[CalibrationSettings] = None
) -> TrendModel:
    """
    Calibrate the trend test on consecutive-day differences.

    Raises:
        NoNeighborsError: Fewer than 2 neighbors overlapping the target
        InsufficientOverlapError: Too few common differenced days
    """
    settings = settings or CalibrationSettings()
    target_delta = target_series.differences()
    neighbor_deltas = {sid: series.differences() for sid, series in neighbor_series.items()}
    return calibrate_regression(
        target_delta,
        neighbor_deltas,
        settings,
        TransformKind.IDENTITY,
        zero_inflated=False,
        model_cls=TrendModel,
    )


def neighbor_deltas(today: Dict[str, float], yesterday: Dict[str, float]) -> Dict[str, float]:
    """Changes of the neighbors reporting on both days."""
    deltas = {}
    for station_id, value in today.items():
        previous = yesterday.get(station_id)
        if previous is not None and np.isfinite(value) and np.isfinite(previous):
            deltas[station_id] = float(value) - float(previous)
    return deltas


def run_trend_test(
    model: TrendModel,
    obs: Observation,
    yesterday_value: Optional[float],
    todays_neighbor_deltas: Dict[str, float]
) -> TestResult:
    """
    Score today's change at the TPAWS site.

    The predictive distribution of today's value is the distribution of
    the change shifted by yesterday's observation.

    Raises:
        NotApplicableError: No previous-day value, or fewer than 2
            calibrated neighbors with a change today
    """
    if yesterday_value is None or not np.isfinite(yesterday_value):
        raise NotApplicableError(
            "previous-day TPAWS value missing",
            context={"station": obs.station_id, "date": obs.date.isoformat()}
        )
    reporting = [n for n in model.neighbor_ids if n in todays_neighbor_deltas]
    if len(reporting) < 2:
        raise NotApplicableError(
            f"{len(reporting)} calibrated neighbors with a change today (< 2)",
            context={"station": obs.station_id, "date": obs.date.isoformat()}
        )

    mean, used, imputed = regression_prediction(model, todays_neighbor_deltas)
    dist = PredictiveDistribution(mean=mean, sigma=model.error.sigma, transform=model.transform)
    observed_change = obs.value - float(yesterday_value)
    return score(
        TREND_TEST,
        observed_change,
        dist,
        model.cal_mse,
        {"neighbor_changes": used, "imputed": imputed, "yesterday": float(yesterday_value)},
        median_offset=float(yesterday_value),
    )


class TrendTest(SpatialTest):
    """Trend counterpart of SpatialTest (same neighbor selection)"""

    @property
    def test_id(self) -> TestId:
        return TREND_TEST

    def calibrate(self, inputs: CalibrationInputs) -> TrendModel:
        return calibrate_trend(inputs.target_series, self.neighbor_series(inputs), self.settings)

    def run(self, model: TrendModel, obs: Observation, day: DayInputs) -> TestResult:
        deltas = neighbor_deltas(day.official_today, day.official_yesterday)
        return run_trend_test(model, obs, day.target_yesterday, deltas)

    def model_from_dict(self, data: Dict[str, Any]) -> TrendModel:
        return TrendModel.from_dict(data)
