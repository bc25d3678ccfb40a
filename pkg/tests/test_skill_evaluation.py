from datetime import date, timedelta

import pytest

from contracts import GridProductKind, MisalignedError, TestKind
from processors.assessment import Assessment
from processors.core import DomainVerdict, Observation, WeatherVariable
from processors.interfaces import TestId, TestResult
from processors.skill_evaluation import (
    MERGED,
    Band,
    ConfusionCounts,
    TruthLabel,
    default_bands,
    evaluate,
    format_skill_table,
    run_experiment,
    skill_columns,
)
from processors.synthetic_network import InjectionSpec, SyntheticConfig

START = date(2020, 1, 1)
ERA = TestId(TestKind.GRIDDED, GridProductKind.ERA)


def _assessment(offset, final_cl, era_cl=None, domain_ok=True):
    obs = Observation("TP001", START + timedelta(days=offset), WeatherVariable.WIND_GUST, 40.0)
    results = {}
    if era_cl is not None:
        results[ERA] = TestResult(ERA, True, p1=era_cl / 2.0, cl=era_cl, cal_mse=1.0)
    return Assessment(obs, final_cl, domain_verdict=DomainVerdict(domain_ok), results=results)


def _label(offset, contaminated, true_value=40.0):
    return TruthLabel("TP001", START + timedelta(days=offset), contaminated, true_value)


def test_confusion_counts():
    counts = ConfusionCounts()
    for contaminated, flagged in [(True, True), (True, False), (False, True), (False, False), (False, False),
                                  (True, None)]:
        counts.record(contaminated, flagged)
    assert (counts.hits, counts.misses, counts.false_alarms, counts.correct_negatives, counts.na) == (1, 1, 1, 2, 1)
    assert counts.hit_rate == pytest.approx(0.5)
    assert counts.false_alarm_rate == pytest.approx(1.0 / 3.0)
    assert ConfusionCounts().hit_rate is None


def test_bands_are_a_partition():
    bands = default_bands(WeatherVariable.WIND_GUST)
    for value in (0.0, 24.999, 25.0, 60.0, 60.001, 300.0):
        assert sum(b.contains(value) for b in bands) == 1
    assert default_bands(WeatherVariable.TMAX) == []


def test_evaluate_counts_merged_flags():
    assessments = [_assessment(0, 0.01), _assessment(1, 0.5), _assessment(2, 0.01), _assessment(3, None),
                   _assessment(4, 0.9, domain_ok=False)]
    labels = [_label(0, True), _label(1, True), _label(2, False), _label(3, True), _label(4, False, 10.0)]
    stats = evaluate(assessments, labels, bands=default_bands(WeatherVariable.WIND_GUST))
    assert stats.counts.to_dict() == {"hits": 1, "misses": 1, "false_alarms": 2, "correct_negatives": 0, "na": 1}
    assert stats.per_band["<25"] == (None, 1.0)
    assert stats.to_dict()["per_band"]["<25"]["hit_rate"] == "NA"


def test_evaluate_rejects_misaligned_inputs():
    with pytest.raises(MisalignedError):
        evaluate([_assessment(0, 0.5)], [_label(1, False)])
    with pytest.raises(MisalignedError):
        evaluate([_assessment(0, 0.5)], [_label(0, False, 10.0)], bands=[Band("high", 20.0, 30.0)])


def test_skill_columns_per_test_and_merged():
    assessments = [_assessment(0, 0.01, era_cl=0.2), _assessment(1, 0.5, era_cl=0.01), _assessment(2, 0.5)]
    labels = [_label(0, True), _label(1, False), _label(2, False)]
    columns = skill_columns(assessments, labels, [ERA])
    assert list(columns) == ["ERA", MERGED]
    assert columns["ERA"].hit_rate == 0.0
    assert columns["ERA"].false_alarm_rate == 1.0
    assert columns["ERA"].counts.na == 1
    assert columns[MERGED].hit_rate == 1.0

    table = format_skill_table(columns, len(assessments))
    assert "Hit rate (%) All" in table
    assert "NA assessments (merged): 0 of 3" in table


@pytest.mark.slow
def test_small_wind_gust_experiment():
    config = SyntheticConfig(n_stations=25, n_tpaws=3, bounding_box=(-33.0, -31.0, 115.0, 117.0),
                             grid_cell_deg=1.0, seed=11)
    report = run_experiment(config, InjectionSpec.wind_gust_default(seed=5))
    assert list(report.columns) == ["Spatial", "NWP", "ERA", MERGED]
    merged = report.columns[MERGED]
    assert report.n_assessments == 3 * 730
    assert merged.hit_rate is not None and merged.hit_rate > 0.5
    assert merged.false_alarm_rate < 0.25
    assert set(report.to_dict()["columns"]) == {"Spatial", "NWP", "ERA", MERGED}
