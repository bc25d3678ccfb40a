#!/usr/bin/env python3
"""
Component Interfaces for the Quality Assessment Engine

Defines the contracts every quality test honours:
- TestId / TestResult / PredictiveDistribution value types
- Calibration and per-day input bundles
- QualityTestInterface, the abstract calibrate/run pair the pipeline drives
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, List, Optional, Tuple

from contracts import GridProductKind, TestKind
from processors.core import DailySeries, Observation, StationMeta, SubdailySeries, WeatherVariable
from processors.transform import TransformSpec

_TEST_ORDER = {kind: i for i, kind in enumerate(TestKind)}
_PRODUCT_ORDER = {kind: i for i, kind in enumerate(GridProductKind)}


# =============================================================================
# TEST IDENTIFIERS & RESULTS
# =============================================================================

@dataclass(frozen=True)
class TestId:
    """A test, with the product for gridded tests, e.g. Gridded(ERA)"""
    kind: TestKind
    product: Optional[GridProductKind] = None

    __test__ = False

    def __post_init__(self):
        if (self.kind == TestKind.GRIDDED) != (self.product is not None):
            raise ValueError("A product is required for, and only for, gridded tests")

    def __str__(self) -> str:
        if self.product is not None:
            return f"{self.kind.value}({self.product.value})"
        return self.kind.value

    @property
    def sort_key(self) -> Tuple[int, int]:
        return _TEST_ORDER[self.kind], _PRODUCT_ORDER[self.product] if self.product else -1

    @property
    def slug(self) -> str:
        """File-system friendly name, e.g. gridded_era"""
        if self.product is not None:
            return f"{self.kind.value.lower()}_{self.product.value.lower()}"
        return self.kind.value.lower()

    @classmethod
    def parse(cls, text: str) -> "TestId":
        """Inverse of str(); accepts "Gridded(ERA)" and "Gridded:ERA"."""
        text = text.strip()
        for open_, close in (("(", ")"), (":", "")):
            if open_ in text:
                kind, _, rest = text.partition(open_)
                product = rest[:-1] if close and rest.endswith(close) else rest
                return cls(TestKind(kind), GridProductKind(product))
        return cls(TestKind(text))


@dataclass(frozen=True)
class PredictiveDistribution:
    """
    Gaussian prediction in transformed space, optionally with a point
    mass at the variable's lower bound (rainfall).
    """
    mean: float
    sigma: float
    transform: TransformSpec = field(default_factory=TransformSpec.identity)
    zero_mass: Optional[float] = None
    lower_bound: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"Invalid predictive distribution mean={self.mean} sigma={self.sigma}")
        if self.zero_mass is not None and not (0.0 <= self.zero_mass < 1.0):
            raise ValueError(f"zero_mass must be in [0, 1): {self.zero_mass}")

    @property
    def median(self) -> float:
        """Back-transformed mean, canonical units."""
        return float(self.transform.inverse(self.mean))


@dataclass
class TestResult:
    """One test's verdict on one observation"""
    test_id: TestId
    applicable: bool
    p1: Optional[float] = None
    cl: Optional[float] = None
    predicted_median: Optional[float] = None
    predicted_sigma: Optional[float] = None
    cal_mse: Optional[float] = None
    inputs_used: Dict[str, Any] = field(default_factory=dict)
    reason: Optional[str] = None

    __test__ = False

    @classmethod
    def not_applicable(cls, test_id: TestId, reason: str) -> "TestResult":
        return cls(test_id=test_id, applicable=False, reason=reason)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "test_id": str(self.test_id),
            "applicable": self.applicable,
            "p1": self.p1,
            "cl": self.cl,
            "predicted_median": self.predicted_median,
            "predicted_sigma": self.predicted_sigma,
            "cal_mse": self.cal_mse,
            "inputs_used": self.inputs_used,
            "reason": self.reason,
        }


# =============================================================================
# INPUT BUNDLES
# =============================================================================

@dataclass
class CalibrationInputs:
    """Everything a test may need to calibrate one TPAWS station"""
    target: StationMeta
    target_series: DailySeries
    official_stations: List[StationMeta] = field(default_factory=list)
    official_series: Dict[str, DailySeries] = field(default_factory=dict)
    grid_series: Dict[GridProductKind, DailySeries] = field(default_factory=dict)
    subdaily_history: List[SubdailySeries] = field(default_factory=list)
    grid_subdaily_history: List[SubdailySeries] = field(default_factory=list)

    @property
    def variable(self) -> WeatherVariable:
        return self.target_series.variable


@dataclass
class DayInputs:
    """Official and TPAWS information available when scoring one day"""
    day: date
    official_today: Dict[str, float] = field(default_factory=dict)
    official_yesterday: Dict[str, float] = field(default_factory=dict)
    target_yesterday: Optional[float] = None
    target_two_days_ago: Optional[float] = None
    grid_today: Dict[GridProductKind, float] = field(default_factory=dict)
    subdaily_day: Optional[SubdailySeries] = None
    grid_subdaily_day: Optional[SubdailySeries] = None


# =============================================================================
# QUALITY TEST INTERFACE
# =============================================================================

class QualityTestInterface(ABC):
    """
    Abstract interface for prediction-based quality tests.

    Implementations must provide:
    - Calibration of a per-station model from official data
    - Scoring of one observation against a calibrated model
    - Model (de)serialization for the model store
    """

    @property
    @abstractmethod
    def test_id(self) -> TestId:
        pass

    @abstractmethod
    def calibrate(self, inputs: CalibrationInputs) -> Any:
        """
        Fit a model for one station.

        Args:
            inputs: Target series plus the official data around it

        Returns:
            A calibrated model exposing cal_mse and to_dict()
        """
        pass

    @abstractmethod
    def run(self, model: Any, obs: Observation, day: DayInputs) -> TestResult:
        """
        Score one observation.

        Raises:
            NotApplicableError: When the day's inputs do not satisfy the
                test's conditions
        """
        pass

    @abstractmethod
    def model_from_dict(self, data: Dict[str, Any]) -> Any:
        pass
