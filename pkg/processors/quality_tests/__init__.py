"""Prediction-based quality tests for TPAWS observations."""

from typing import Dict, List, Optional, Sequence

from contracts import GridProductKind, TestKind
from processors.interfaces import QualityTestInterface, TestId

from .base import CalibrationSettings
from .gridded import GriddedModel, GriddedTest, calibrate_gridded, run_gridded_test
from .spatial import SpatialModel, SpatialTest, calibrate_spatial, run_spatial_test
from .spatiotemporal import (
    ScreeningReport,
    SpatioTemporalTest,
    StModelSet,
    fit_st_models,
    hampel_filter,
    run_st_test,
    screen_similar_stations,
)
from .subdaily import DlmSpec, SubdailyTest, calibrate_dlm, run_subdaily_test
from .trend import TrendModel, TrendTest, calibrate_trend, run_trend_test

DEFAULT_TESTS = [
    TestId(TestKind.SPATIAL),
    TestId(TestKind.GRIDDED, GridProductKind.ERA),
    TestId(TestKind.GRIDDED, GridProductKind.NWP),
]


def build_test(test_id: TestId, settings: Optional[CalibrationSettings] = None) -> QualityTestInterface:
    """Instantiate the test implementing test_id."""
    settings = settings or CalibrationSettings()
    if test_id.kind == TestKind.SPATIAL:
        return SpatialTest(settings)
    if test_id.kind == TestKind.TREND:
        return TrendTest(settings)
    if test_id.kind == TestKind.GRIDDED:
        return GriddedTest(test_id.product, settings)
    if test_id.kind == TestKind.SPATIOTEMPORAL:
        return SpatioTemporalTest(settings)
    if test_id.kind == TestKind.SUBDAILY:
        return SubdailyTest(settings)
    raise ValueError(f"{test_id} is not a prediction-based test")


def build_tests(
    test_ids: Sequence[TestId],
    settings: Optional[CalibrationSettings] = None
) -> Dict[TestId, QualityTestInterface]:
    return {test_id: build_test(test_id, settings) for test_id in sorted(set(test_ids), key=lambda t: t.sort_key)}


def model_from_dict(data: Dict) -> object:
    """Rebuild any stored model from its dict; the "kind" key selects the class."""
    kind = data.get("kind")
    loaders = {
        "Spatial": SpatialModel.from_dict,
        "Trend": TrendModel.from_dict,
        "Gridded": GriddedModel.from_dict,
        "SpatioTemporal": StModelSet.from_dict,
        "Subdaily": DlmSpec.from_dict,
    }
    if kind not in loaders:
        raise ValueError(f"Unknown model kind: {kind!r}")
    return loaders[kind](data)


__all__: List[str] = [
    'CalibrationSettings',
    'DEFAULT_TESTS',
    'build_test',
    'build_tests',
    'model_from_dict',
    'SpatialModel',
    'SpatialTest',
    'calibrate_spatial',
    'run_spatial_test',
    'TrendModel',
    'TrendTest',
    'calibrate_trend',
    'run_trend_test',
    'GriddedModel',
    'GriddedTest',
    'calibrate_gridded',
    'run_gridded_test',
    'ScreeningReport',
    'StModelSet',
    'SpatioTemporalTest',
    'hampel_filter',
    'screen_similar_stations',
    'fit_st_models',
    'run_st_test',
    'DlmSpec',
    'SubdailyTest',
    'calibrate_dlm',
    'run_subdaily_test',
]
