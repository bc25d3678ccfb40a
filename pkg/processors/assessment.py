#!/usr/bin/env python3
"""
Assessment - Confidence Levels, Applicability, Pre-assessment, Fusion

A test's confidence level is the two-sided p-value of the observation
under its predictive distribution:

    CL = 1 - 2 * |p1 - 0.5|,  p1 = P(X <= x)

Applicable tests are fused into a final confidence level by a weighted
Stouffer combination of their one-sided p-values, weights proportional
to 1 / calibration MSE.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from scipy.special import ndtr, ndtri

from contracts import GridProductKind, OutOfRangeError, TestKind
from processors.core import DomainVerdict, Observation, WeatherVariable
from processors.interfaces import PredictiveDistribution, TestId, TestResult
from processors.solvers import normal_cdf
from processors.transform import forward

logger = logging.getLogger(__name__)

P_CLAMP = 1e-10
DEFAULT_CL_THRESHOLD = 0.05

DOMAIN_TEST = TestId(TestKind.DOMAIN)
SPATIAL_TEST = TestId(TestKind.SPATIAL)
SPATIOTEMPORAL_TEST = TestId(TestKind.SPATIOTEMPORAL)

# Official gridded products per variable
PERMITTED_PRODUCTS: Dict[GridProductKind, frozenset] = {
    GridProductKind.NWP: frozenset({
        WeatherVariable.TMAX, WeatherVariable.TMIN, WeatherVariable.WIND_GUST,
        WeatherVariable.HUMIDITY_9AM, WeatherVariable.HUMIDITY_3PM,
    }),
    GridProductKind.AGCD: frozenset({
        WeatherVariable.TMAX, WeatherVariable.TMIN, WeatherVariable.RAIN,
        WeatherVariable.HUMIDITY_9AM, WeatherVariable.HUMIDITY_3PM,
    }),
    GridProductKind.ERA: frozenset({WeatherVariable.WIND_GUST}),
    GridProductKind.RADAR: frozenset({WeatherVariable.RAIN}),
}


def product_permitted(product: GridProductKind, variable: WeatherVariable) -> bool:
    return variable in PERMITTED_PRODUCTS[product]


# =============================================================================
# CONFIDENCE LEVELS
# =============================================================================

def confidence_level(p1: float) -> float:
    """
    1 - 2|p1 - 0.5|.

    Raises:
        OutOfRangeError: p1 outside [0, 1]
    """
    if not (0.0 <= p1 <= 1.0):
        raise OutOfRangeError(f"p1 must lie in [0, 1]: {p1}", context={"p1": p1})
    return 1.0 - 2.0 * abs(p1 - 0.5)


def p1_from_predictive(obs_value: float, dist: PredictiveDistribution) -> float:
    """
    P(X <= obs) under a predictive distribution.

    With a point mass m at the lower bound, an observation at the bound
    gets the mid-p value m/2 and larger values m + (1 - m) * Phi(z).

    Raises:
        TransformDomainError: Observation outside the transform's support
    """
    if dist.zero_mass is not None:
        m = dist.zero_mass
        if obs_value <= dist.lower_bound:
            return m / 2.0
        z = forward(dist.transform, obs_value)
        return m + (1.0 - m) * normal_cdf(z, dist.mean, dist.sigma)
    z = forward(dist.transform, obs_value)
    return normal_cdf(z, dist.mean, dist.sigma)


# =============================================================================
# APPLICABILITY
# =============================================================================

@dataclass
class ApplicabilityContext:
    """What is known about a station-day before any test runs"""
    variable: WeatherVariable
    calibrated_days: Dict[TestId, int] = field(default_factory=dict)
    neighbors_reporting: int = 0
    neighbor_deltas_available: int = 0
    target_yesterday_present: bool = False
    grid_values_present: Dict[GridProductKind, bool] = field(default_factory=dict)
    st_inputs_present: bool = False
    subdaily_slots_covered: int = 0


def applicability(
    ctx: ApplicabilityContext,
    min_calibration_days: int = 365,
    min_subdaily_slots: int = 18
) -> Dict[TestId, Tuple[bool, str]]:
    """
    Decide per test whether its conditions hold for the day.

    Every test needs a calibrated model backed by at least
    min_calibration_days of data; gridded tests also need a product that
    is an official source for the variable.
    """
    verdict: Dict[TestId, Tuple[bool, str]] = {}

    def calibrated(test_id: TestId) -> Optional[str]:
        days = ctx.calibrated_days.get(test_id)
        if days is None:
            return "no calibrated model"
        if days < min_calibration_days:
            return f"calibrated on {days} days (< {min_calibration_days})"
        return None

    def decide(test_id: TestId, condition: bool, reason: str) -> None:
        missing = calibrated(test_id)
        if missing is not None:
            verdict[test_id] = (False, missing)
        elif not condition:
            verdict[test_id] = (False, reason)
        else:
            verdict[test_id] = (True, "ok")

    decide(SPATIAL_TEST, ctx.neighbors_reporting >= 2,
           f"{ctx.neighbors_reporting} calibrated neighbors reporting (< 2)")
    decide(TestId(TestKind.TREND),
           ctx.target_yesterday_present and ctx.neighbor_deltas_available >= 2,
           "previous-day TPAWS value missing" if not ctx.target_yesterday_present
           else f"{ctx.neighbor_deltas_available} neighbor changes available (< 2)")
    decide(SPATIOTEMPORAL_TEST, ctx.st_inputs_present, "required lags or similar-station values missing")
    if ctx.variable != WeatherVariable.RAIN:
        decide(TestId(TestKind.SUBDAILY), ctx.subdaily_slots_covered >= min_subdaily_slots,
               f"{ctx.subdaily_slots_covered} of 24 hourly slots covered (< {min_subdaily_slots})")
    else:
        verdict[TestId(TestKind.SUBDAILY)] = (False, "no sub-daily statistic for Rain")

    for product in GridProductKind:
        test_id = TestId(TestKind.GRIDDED, product)
        if not product_permitted(product, ctx.variable):
            verdict[test_id] = (False, f"{product.value} is not an official source for {ctx.variable.value}")
            continue
        decide(test_id, ctx.grid_values_present.get(product, False), f"{product.value} grid value missing")

    return verdict


# =============================================================================
# PRE-ASSESSMENT & FUSION
# =============================================================================

def _inverse_mse(cal_mse: Optional[float]) -> float:
    if cal_mse is None:
        raise ValueError("Fusion needs the calibration MSE of every test")
    return 1.0 / max(cal_mse, 1e-300)


def pre_assess(
    spatial: Optional[TestResult],
    spatiotemporal: Optional[TestResult],
    others: Sequence[TestResult] = ()
) -> Optional[TestId]:
    """
    Choose between the spatial and spatiotemporal tests.

    Each candidate is weighted by 1/cal_mse within its own set
    {candidate} + others; the larger normalized weight wins, ties go to
    the spatiotemporal test.
    """
    spatial_ok = spatial is not None and spatial.applicable
    st_ok = spatiotemporal is not None and spatiotemporal.applicable
    if not (spatial_ok or st_ok):
        return None
    if spatial_ok and not st_ok:
        return SPATIAL_TEST
    if st_ok and not spatial_ok:
        return SPATIOTEMPORAL_TEST

    other_total = math.fsum(_inverse_mse(r.cal_mse) for r in others if r.applicable)
    w_spatial = _inverse_mse(spatial.cal_mse)
    w_st = _inverse_mse(spatiotemporal.cal_mse)
    share_spatial = w_spatial / (w_spatial + other_total)
    share_st = w_st / (w_st + other_total)
    chosen = SPATIAL_TEST if share_spatial > share_st else SPATIOTEMPORAL_TEST
    logger.debug(f"Pre-assessment: spatial share {share_spatial:.4f}, spatiotemporal share {share_st:.4f} -> {chosen}")
    return chosen


@dataclass
class Assessment:
    """Final verdict on one observation"""
    observation: Observation
    final_cl: Optional[float]
    contributing: List[Tuple[TestId, float, float]] = field(default_factory=list)
    excluded: List[Tuple[TestId, str]] = field(default_factory=list)
    domain_verdict: Optional[DomainVerdict] = None
    results: Dict[TestId, TestResult] = field(default_factory=dict)
    fused_p1: Optional[float] = None

    @property
    def is_na(self) -> bool:
        return self.final_cl is None

    def flagged(self, cl_threshold: float = DEFAULT_CL_THRESHOLD) -> bool:
        if self.domain_verdict is not None and not self.domain_verdict.passed:
            return True
        return self.final_cl is not None and self.final_cl < cl_threshold


def fuse(
    obs: Observation,
    results: Sequence[TestResult],
    weights: Optional[Sequence[float]] = None,
    excluded: Iterable[Tuple[TestId, str]] = (),
    domain_verdict: Optional[DomainVerdict] = None
) -> Assessment:
    """
    Weighted Stouffer fusion of applicable test results.

    Args:
        obs: The observation under assessment
        results: Applicable results, at most one of spatial/spatiotemporal
        weights: Raw weights (default 1/cal_mse of each result)
        excluded: (test, reason) pairs carried into the assessment
        domain_verdict: Domain test outcome; a failure forces CL 0

    Returns:
        Assessment with normalized weights; NA when no result is given
    """
    excluded = list(excluded)
    if domain_verdict is not None and not domain_verdict.passed:
        return Assessment(
            observation=obs,
            final_cl=0.0,
            contributing=[(DOMAIN_TEST, 1.0, 0.0)],
            excluded=excluded + [(r.test_id, "domain") for r in results],
            domain_verdict=domain_verdict,
            results={r.test_id: r for r in results},
            fused_p1=None,
        )

    if not results:
        return Assessment(obs, None, [], excluded, domain_verdict, {})

    kinds = {r.test_id.kind for r in results}
    if TestKind.SPATIAL in kinds and TestKind.SPATIOTEMPORAL in kinds:
        raise ValueError("Run pre_assess before fusing spatial and spatiotemporal results")
    for r in results:
        if not r.applicable or r.p1 is None:
            raise ValueError(f"Cannot fuse inapplicable result {r.test_id}")

    raw = list(weights) if weights is not None else [_inverse_mse(r.cal_mse) for r in results]
    if len(raw) != len(results) or any(not (w > 0 and math.isfinite(w)) for w in raw):
        raise ValueError("Fusion weights must be positive and finite, one per result")

    if len(results) == 1:
        only = results[0]
        return Assessment(obs, only.cl, [(only.test_id, 1.0, only.cl)], excluded,
                          domain_verdict, {only.test_id: only}, only.p1)

    total = math.fsum(raw)
    normalized = [w / total for w in raw]
    zs = [float(ndtri(min(max(r.p1, P_CLAMP), 1.0 - P_CLAMP))) for r in results]
    z_f = math.fsum(w * z for w, z in zip(normalized, zs)) / math.sqrt(math.fsum(w * w for w in normalized))
    p1_f = float(ndtr(z_f))
    final_cl = confidence_level(p1_f)

    return Assessment(
        observation=obs,
        final_cl=final_cl,
        contributing=[(r.test_id, w, r.cl) for r, w in zip(results, normalized)],
        excluded=excluded,
        domain_verdict=domain_verdict,
        results={r.test_id: r for r in results},
        fused_p1=p1_f,
    )


def assess_observation(
    obs: Observation,
    domain_verdict: DomainVerdict,
    results: Sequence[TestResult]
) -> Assessment:
    """
    Full gate for one observation: domain test, pre-assessment, fusion.

    results holds every test that was attempted, applicable or not.
    """
    applicable = [r for r in results if r.applicable]
    excluded = [(r.test_id, r.reason or "not applicable") for r in results if not r.applicable]
    attempted = {r.test_id: r for r in sorted(results, key=lambda r: r.test_id.sort_key)}
    if not domain_verdict.passed:
        assessment = fuse(obs, applicable, excluded=excluded, domain_verdict=domain_verdict)
        assessment.results = attempted
        return assessment

    by_kind = {r.test_id.kind: r for r in applicable}
    spatial = by_kind.get(TestKind.SPATIAL)
    st = by_kind.get(TestKind.SPATIOTEMPORAL)
    others = [r for r in applicable if r.test_id.kind not in (TestKind.SPATIAL, TestKind.SPATIOTEMPORAL)]

    chosen = pre_assess(spatial, st, others)
    selected = list(others)
    if chosen == SPATIAL_TEST:
        selected.append(spatial)
        if st is not None:
            excluded.append((SPATIOTEMPORAL_TEST, "pre-assessment chose Spatial"))
    elif chosen == SPATIOTEMPORAL_TEST:
        selected.append(st)
        if spatial is not None:
            excluded.append((SPATIAL_TEST, "pre-assessment chose SpatioTemporal"))
    selected.sort(key=lambda r: r.test_id.sort_key)
    excluded.sort(key=lambda item: item[0].sort_key)
    assessment = fuse(obs, selected, excluded=excluded, domain_verdict=domain_verdict)
    assessment.results = attempted
    return assessment


# =============================================================================
# TRACEBACK
# =============================================================================

@dataclass
class TracebackEntry:
    test_id: TestId
    weight: float
    cl: float
    predicted_median: Optional[float] = None
    inputs_used: Dict[str, Any] = field(default_factory=dict)


@dataclass
class TracebackReport:
    observation: Observation
    final_cl: Optional[float]
    contributing: List[TracebackEntry]
    excluded: List[Tuple[TestId, str]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "station_id": self.observation.station_id,
            "date": self.observation.date.isoformat(),
            "variable": self.observation.variable.value,
            "value": self.observation.value,
            "final_cl": "NA" if self.final_cl is None else self.final_cl,
            "contributing": [
                {
                    "test_id": str(e.test_id),
                    "weight": e.weight,
                    "cl": e.cl,
                    "predicted_median": e.predicted_median,
                    "inputs_used": e.inputs_used,
                }
                for e in self.contributing
            ],
            "excluded": [{"test_id": str(t), "reason": reason} for t, reason in self.excluded],
        }


def traceback(assessment: Assessment) -> TracebackReport:
    """Contributing tests lowest CL first (ties in test order), then exclusions."""
    entries = []
    for test_id, weight, cl in assessment.contributing:
        result = assessment.results.get(test_id)
        entries.append(TracebackEntry(
            test_id=test_id,
            weight=weight,
            cl=cl,
            predicted_median=result.predicted_median if result else None,
            inputs_used=dict(result.inputs_used) if result else {},
        ))
    entries.sort(key=lambda e: (e.cl, e.test_id.sort_key))
    excluded = sorted(assessment.excluded, key=lambda item: (item[0].sort_key, item[1]))
    return TracebackReport(assessment.observation, assessment.final_cl, entries, excluded)
