import math
from datetime import date

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from contracts import GridProductKind, OutOfRangeError, TestKind
from processors.assessment import (
    DOMAIN_TEST,
    SPATIAL_TEST,
    SPATIOTEMPORAL_TEST,
    ApplicabilityContext,
    applicability,
    assess_observation,
    confidence_level,
    fuse,
    p1_from_predictive,
    pre_assess,
    product_permitted,
    traceback,
)
from processors.core import DomainVerdict, Observation, WeatherVariable
from processors.interfaces import PredictiveDistribution, TestId, TestResult
from processors.transform import TransformKind, TransformSpec

OBS = Observation("TP001", date(2020, 1, 15), WeatherVariable.WIND_GUST, 40.0)
ERA = TestId(TestKind.GRIDDED, GridProductKind.ERA)
NWP = TestId(TestKind.GRIDDED, GridProductKind.NWP)
TREND = TestId(TestKind.TREND)


def result(test_id, p1, cal_mse=1.0, median=None):
    return TestResult(test_id, True, p1=p1, cl=confidence_level(p1), cal_mse=cal_mse, predicted_median=median)


# =============================================================================
# CONFIDENCE LEVEL
# =============================================================================

def test_confidence_level_reference_values():
    assert confidence_level(0.5) == 1.0
    assert confidence_level(0.0) == 0.0
    assert confidence_level(1.0) == 0.0
    assert confidence_level(0.8) == pytest.approx(0.4)
    assert confidence_level(0.025) == pytest.approx(0.05)


def test_confidence_level_is_symmetric():
    for p in np.linspace(0.0, 1.0, 10_001):
        assert confidence_level(float(p)) == pytest.approx(confidence_level(float(1.0 - p)), abs=1e-12)


def test_confidence_level_rejects_out_of_range():
    with pytest.raises(OutOfRangeError):
        confidence_level(1.5)
    with pytest.raises(OutOfRangeError):
        confidence_level(-1e-9)


def test_p1_of_gaussian_prediction():
    dist = PredictiveDistribution(mean=30.0, sigma=5.0)
    assert p1_from_predictive(30.0, dist) == pytest.approx(0.5)
    assert p1_from_predictive(40.0, dist) == pytest.approx(float(ndtr(2.0)))


def test_p1_with_point_mass_at_lower_bound():
    dist = PredictiveDistribution(mean=1.0, sigma=1.0, zero_mass=0.4, lower_bound=0.0)
    assert p1_from_predictive(0.0, dist) == pytest.approx(0.2)
    assert p1_from_predictive(1.0, dist) == pytest.approx(0.4 + 0.6 * 0.5)


# =============================================================================
# APPLICABILITY
# =============================================================================

def test_confidence_peaks_at_median_and_falls_with_distance(rng):
    offsets = np.linspace(0.0, 4.0, 21)
    for _ in range(25):
        a, b = rng.uniform(0.01, 1.0, 2)
        transform = TransformSpec(TransformKind.LOG_SINH, a=float(a), b=float(b))
        dist = PredictiveDistribution(mean=float(rng.normal(2.0, 1.0)), sigma=float(rng.uniform(0.1, 2.0)),
                                      transform=transform)
        assert confidence_level(p1_from_predictive(dist.median, dist)) == pytest.approx(1.0, abs=1e-9)
        for side in (1.0, -1.0):
            values = transform.inverse(dist.mean + side * dist.sigma * offsets)
            cls = [confidence_level(p1_from_predictive(float(v), dist)) for v in values]
            assert all(later <= earlier + 1e-12 for earlier, later in zip(cls, cls[1:]))


def test_official_products_per_variable():
    assert product_permitted(GridProductKind.ERA, WeatherVariable.WIND_GUST)
    assert not product_permitted(GridProductKind.ERA, WeatherVariable.TMAX)
    assert product_permitted(GridProductKind.RADAR, WeatherVariable.RAIN)
    assert not product_permitted(GridProductKind.NWP, WeatherVariable.RAIN)


def test_applicability_reasons():
    ctx = ApplicabilityContext(
        variable=WeatherVariable.WIND_GUST,
        calibrated_days={SPATIAL_TEST: 730, ERA: 200, TREND: 730},
        neighbors_reporting=1,
        target_yesterday_present=False,
        grid_values_present={GridProductKind.ERA: True},
    )
    verdict = applicability(ctx)
    assert verdict[SPATIAL_TEST][0] is False and "neighbors" in verdict[SPATIAL_TEST][1]
    assert verdict[ERA] == (False, "calibrated on 200 days (< 365)")
    assert verdict[TREND][0] is False and "previous-day" in verdict[TREND][1]
    assert verdict[NWP] == (False, "no calibrated model")
    radar = TestId(TestKind.GRIDDED, GridProductKind.RADAR)
    assert verdict[radar][0] is False and "not an official source" in verdict[radar][1]


def test_applicability_all_conditions_met():
    ctx = ApplicabilityContext(
        variable=WeatherVariable.TMAX,
        calibrated_days={SPATIAL_TEST: 730, TestId(TestKind.SUBDAILY): 400},
        neighbors_reporting=3,
        subdaily_slots_covered=20,
    )
    verdict = applicability(ctx)
    assert verdict[SPATIAL_TEST] == (True, "ok")
    assert verdict[TestId(TestKind.SUBDAILY)] == (True, "ok")


def test_no_subdaily_test_for_rain():
    ctx = ApplicabilityContext(variable=WeatherVariable.RAIN,
                               calibrated_days={TestId(TestKind.SUBDAILY): 900}, subdaily_slots_covered=24)
    assert applicability(ctx)[TestId(TestKind.SUBDAILY)][0] is False


# =============================================================================
# PRE-ASSESSMENT
# =============================================================================

def test_pre_assessment_prefers_smaller_calibration_error():
    spatial = result(SPATIAL_TEST, 0.4, cal_mse=1.0)
    st = result(SPATIOTEMPORAL_TEST, 0.4, cal_mse=2.0)
    assert pre_assess(spatial, st, [result(ERA, 0.5, 3.0)]) == SPATIAL_TEST
    st = result(SPATIOTEMPORAL_TEST, 0.4, cal_mse=0.5)
    assert pre_assess(spatial, st, [result(ERA, 0.5, 3.0)]) == SPATIOTEMPORAL_TEST


def test_pre_assessment_tie_goes_to_spatiotemporal():
    spatial = result(SPATIAL_TEST, 0.4, cal_mse=1.0)
    st = result(SPATIOTEMPORAL_TEST, 0.6, cal_mse=1.0)
    assert pre_assess(spatial, st) == SPATIOTEMPORAL_TEST


def test_pre_assessment_ignores_order_of_other_tests(rng):
    for _ in range(50):
        spatial = result(SPATIAL_TEST, 0.5, cal_mse=float(rng.uniform(0.1, 5.0)))
        st = result(SPATIOTEMPORAL_TEST, 0.5, cal_mse=float(rng.uniform(0.1, 5.0)))
        others = [result(test_id, 0.5, cal_mse=float(rng.uniform(0.1, 5.0))) for test_id in (ERA, NWP, TREND)]
        others.append(TestResult.not_applicable(TestId(TestKind.SUBDAILY), "no hourly readings"))
        chosen = pre_assess(spatial, st, others)
        for _ in range(3):
            order = rng.permutation(len(others))
            assert pre_assess(spatial, st, [others[i] for i in order]) == chosen


def test_pre_assessment_with_one_or_no_candidate():
    assert pre_assess(None, None) is None
    assert pre_assess(result(SPATIAL_TEST, 0.5), None) == SPATIAL_TEST
    na = TestResult.not_applicable(SPATIAL_TEST, "no neighbours")
    assert pre_assess(na, result(SPATIOTEMPORAL_TEST, 0.5)) == SPATIOTEMPORAL_TEST


# =============================================================================
# FUSION
# =============================================================================

def test_single_test_fusion_is_exact():
    only = result(ERA, 0.0123)
    assessment = fuse(OBS, [only])
    assert assessment.final_cl == only.cl
    assert assessment.fused_p1 == only.p1
    assert assessment.contributing == [(ERA, 1.0, only.cl)]


def test_fusion_matches_weighted_stouffer():
    results = [result(SPATIAL_TEST, 0.1, cal_mse=1.0), result(ERA, 0.3, cal_mse=4.0)]
    assessment = fuse(OBS, results)
    w = np.array([1.0, 0.25]) / 1.25
    z = (w[0] * ndtri(0.1) + w[1] * ndtri(0.3)) / math.sqrt(np.sum(w ** 2))
    assert assessment.fused_p1 == pytest.approx(float(ndtr(z)), abs=1e-12)
    assert assessment.final_cl == pytest.approx(confidence_level(float(ndtr(z))), abs=1e-12)
    assert sum(weight for _, weight, _ in assessment.contributing) == pytest.approx(1.0)


def test_fusion_is_invariant_to_weight_scaling():
    results = [result(SPATIAL_TEST, 0.2), result(ERA, 0.7), result(NWP, 0.9)]
    a = fuse(OBS, results, weights=[1.0, 2.0, 3.0])
    b = fuse(OBS, results, weights=[10.0, 20.0, 30.0])
    assert a.final_cl == pytest.approx(b.final_cl, abs=1e-12)


def test_extreme_p_values_are_clamped():
    assessment = fuse(OBS, [result(SPATIAL_TEST, 0.0), result(ERA, 0.0)])
    assert math.isfinite(assessment.fused_p1)
    assert assessment.final_cl < 1e-9


def test_fusion_with_nothing_applicable_is_na():
    assessment = fuse(OBS, [], excluded=[(SPATIAL_TEST, "no neighbours")])
    assert assessment.is_na
    assert not assessment.flagged(0.05)


def test_fusion_rejects_both_spatial_candidates():
    with pytest.raises(ValueError):
        fuse(OBS, [result(SPATIAL_TEST, 0.5), result(SPATIOTEMPORAL_TEST, 0.5)])


def test_domain_failure_forces_zero():
    verdict = DomainVerdict(False, "upper", 540.0)
    assessment = fuse(OBS, [result(ERA, 0.5)], domain_verdict=verdict)
    assert assessment.final_cl == 0.0
    assert assessment.contributing == [(DOMAIN_TEST, 1.0, 0.0)]
    assert assessment.flagged(0.05)


def test_assess_observation_applies_pre_assessment():
    results = [
        result(SPATIAL_TEST, 0.3, cal_mse=1.0),
        result(SPATIOTEMPORAL_TEST, 0.4, cal_mse=3.0),
        result(ERA, 0.6, cal_mse=2.0),
        TestResult.not_applicable(NWP, "NWP grid value missing"),
    ]
    assessment = assess_observation(OBS, DomainVerdict(True), results)
    assert [t for t, _, _ in assessment.contributing] == [SPATIAL_TEST, ERA]
    assert (SPATIOTEMPORAL_TEST, "pre-assessment chose Spatial") in assessment.excluded
    assert (NWP, "NWP grid value missing") in assessment.excluded
    assert set(assessment.results) == {SPATIAL_TEST, SPATIOTEMPORAL_TEST, ERA, NWP}


def test_assess_observation_without_applicable_tests_is_na():
    results = [TestResult.not_applicable(SPATIAL_TEST, "no neighbours")]
    assessment = assess_observation(OBS, DomainVerdict(True), results)
    assert assessment.final_cl is None
    assert traceback(assessment).to_dict()["final_cl"] == "NA"


# =============================================================================
# TRACEBACK
# =============================================================================

def test_traceback_lists_lowest_confidence_first():
    results = [result(SPATIAL_TEST, 0.01, median=22.0), result(ERA, 0.45, median=39.0), result(NWP, 0.3)]
    report = traceback(fuse(OBS, results, excluded=[(TREND, "previous-day TPAWS value missing")]))
    assert [e.test_id for e in report.contributing] == [SPATIAL_TEST, NWP, ERA]
    assert report.contributing[0].predicted_median == 22.0
    data = report.to_dict()
    assert data["contributing"][0]["test_id"] == "Spatial"
    assert data["excluded"] == [{"test_id": "Trend", "reason": "previous-day TPAWS value missing"}]


def test_traceback_ties_follow_test_order():
    results = [result(NWP, 0.2), result(SPATIAL_TEST, 0.2)]
    report = traceback(fuse(OBS, results))
    assert [e.test_id for e in report.contributing] == [SPATIAL_TEST, NWP]
