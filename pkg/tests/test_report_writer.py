from datetime import date

import pytest

from contracts import GridProductKind, ParseError, TestKind
from processors.assessment import confidence_level, fuse
from processors.core import DomainVerdict, Observation, WeatherVariable
from processors.interfaces import TestId, TestResult
from utils.report_writer import (
    build_assessment_report,
    generate_run_log,
    load_assessment_report,
    render_report,
    write_assessment_report,
)

ERA = TestId(TestKind.GRIDDED, GridProductKind.ERA)
SPATIAL = TestId(TestKind.SPATIAL)


def _obs(station_id, day, value=40.0):
    return Observation(station_id, date(2020, 1, day), WeatherVariable.WIND_GUST, value)


def _result(test_id, p1, median=30.0):
    return TestResult(test_id, True, p1=p1, cl=confidence_level(p1), cal_mse=1.0, predicted_median=median)


@pytest.fixture
def assessments():
    suspect = fuse(_obs("TP002", 15), [_result(SPATIAL, 0.9999), _result(ERA, 0.995)])
    ordinary = fuse(_obs("TP001", 15, 31.0), [_result(SPATIAL, 0.6)])
    na = fuse(_obs("TP001", 14), [], excluded=[(SPATIAL, "no official observations")])
    return [suspect, ordinary, na]


def test_report_orders_and_counts(assessments):
    report = build_assessment_report(assessments, 0.05)
    assert report["variable"] == "WindGust"
    assert (report["n_assessments"], report["n_flagged"], report["n_na"]) == (3, 1, 1)
    keys = [(r["station_id"], r["date"]) for r in report["assessments"]]
    assert keys == [("TP001", "2020-01-14"), ("TP001", "2020-01-15"), ("TP002", "2020-01-15")]
    na_record = report["assessments"][0]
    assert na_record["final_cl"] == "NA"
    assert na_record["excluded"] == [{"test_id": "Spatial", "reason": "no official observations"}]
    suspect = report["assessments"][2]
    assert [e["test_id"] for e in suspect["contributing"]] == ["Spatial", "Gridded(ERA)"]


def test_report_file_is_reproducible(tmp_path, assessments):
    first = write_assessment_report(tmp_path / "a.json", build_assessment_report(assessments))
    second = write_assessment_report(tmp_path / "b.json", build_assessment_report(list(reversed(assessments))))
    assert first.read_bytes() == second.read_bytes()
    loaded = load_assessment_report(first)
    assert loaded["n_flagged"] == 1
    expected = build_assessment_report(assessments)["assessments"][2]["final_cl"]
    assert loaded["assessments"][2]["final_cl"] == expected


def test_load_rejects_other_files(tmp_path):
    with pytest.raises(ParseError):
        load_assessment_report(tmp_path / "absent.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_assessment_report(tmp_path / "bad.json")
    (tmp_path / "other.json").write_text('{"report_version": 99}')
    with pytest.raises(ParseError):
        load_assessment_report(tmp_path / "other.json")


def test_render_text_and_json(assessments):
    report = build_assessment_report(assessments)
    text = render_report(report, "text")
    assert "3 observations, 1 flagged, 1 NA" in text
    assert "TP002 2020-01-15 WindGust = 40.00" in text
    assert "[SUSPECT]" in text
    assert "- Spatial: no official observations" in text
    assert render_report(report, "json").startswith("{\n")
    with pytest.raises(ValueError):
        render_report(report, "xml")


def test_domain_failure_is_rendered():
    failed = fuse(_obs("TP001", 15, 400.0), [], domain_verdict=DomainVerdict(False, "upper", 300.0))
    report = build_assessment_report([failed])
    assert report["assessments"][0]["domain"] == {"passed": False, "reason": "domain: value violates upper limit 300"}
    assert "domain test failed: domain: value violates upper limit 300" in render_report(report)


def test_run_log_contents(tmp_path):
    path = generate_run_log(tmp_path, "calibrate_WindGust", {
        "command": "calibrate",
        "variable": "WindGust",
        "parameters": {"radius_km": 200.0},
        "stations": [f"TP{k:03d}" for k in range(25)],
        "tests": {"Spatial": {"calibrated": 24, "failed": 1}},
        "warnings": ["TP007 Spatial: fewer than 2 neighbours"],
        "status": "PARTIAL",
    })
    text = path.read_text(encoding="utf-8")
    assert path.name == "calibrate_WindGust_run.log"
    assert "Radius Km: 200.0" in text
    assert "... and 5 more" in text
    assert "Spatial: calibrated 24, failed 1" in text
    assert "TP007 Spatial: fewer than 2 neighbours" in text
    assert "Run completed with issues" in text
