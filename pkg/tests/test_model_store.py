import pytest

from contracts import NotCalibratedError, TestKind, VersionError
from processors.core import WeatherVariable
from processors.interfaces import TestId
from processors.quality_tests import SpatialModel, calibrate_spatial, calibrate_trend
from utils import canonical_json
from utils.model_store import SCHEMA_VERSION, ModelStore

SPATIAL = TestId(TestKind.SPATIAL)
TREND = TestId(TestKind.TREND)


@pytest.fixture
def models(temperature_network):
    target, neighbors = temperature_network["target"], temperature_network["neighbors"]
    return {SPATIAL: calibrate_spatial(target, neighbors), TREND: calibrate_trend(target, neighbors)}


def test_save_and_load_round_trip(tmp_path, models):
    store = ModelStore(tmp_path / "models")
    path = store.save("TP001", WeatherVariable.TMAX, SPATIAL, models[SPATIAL])
    assert path == tmp_path / "models" / "TP001" / "Tmax" / "spatial.json"

    record = store.load_record("TP001", WeatherVariable.TMAX, SPATIAL)
    assert record["schema_version"] == SCHEMA_VERSION
    assert record["test_id"] == "Spatial"
    assert record["calibration_window"][0] == models[SPATIAL].calibration_window[0].isoformat()

    loaded = store.load("TP001", WeatherVariable.TMAX, SPATIAL)
    assert isinstance(loaded, SpatialModel)
    assert loaded.to_dict() == models[SPATIAL].to_dict()


def test_missing_record_is_not_calibrated(tmp_path):
    store = ModelStore(tmp_path)
    with pytest.raises(NotCalibratedError) as excinfo:
        store.load("TP001", WeatherVariable.TMAX, SPATIAL)
    assert excinfo.value.context["path"].endswith("spatial.json")


def test_other_schema_version_is_rejected(tmp_path, models):
    store = ModelStore(tmp_path)
    path = store.save("TP001", WeatherVariable.TMAX, SPATIAL, models[SPATIAL])
    record = canonical_json.loads(path.read_text())
    record["schema_version"] = SCHEMA_VERSION + 1
    path.write_text(canonical_json.dumps(record))
    with pytest.raises(VersionError) as excinfo:
        store.load("TP001", WeatherVariable.TMAX, SPATIAL)
    assert excinfo.value.context["found"] == SCHEMA_VERSION + 1


def test_resave_is_byte_identical(tmp_path, models):
    store = ModelStore(tmp_path)
    path = store.save("TP001", WeatherVariable.TMAX, TREND, models[TREND])
    before = path.read_bytes()
    store.resave("TP001", WeatherVariable.TMAX, TREND)
    assert path.read_bytes() == before
    assert not list(path.parent.glob(".*.tmp"))


def test_save_all_and_station_listing(tmp_path, models):
    store = ModelStore(tmp_path)
    paths = store.save_all(WeatherVariable.TMAX, {"TP001": models})
    assert [p.name for p in paths] == ["spatial.json", "trend.json"]
    assert store.test_ids("TP001", WeatherVariable.TMAX) == [SPATIAL, TREND]
    assert store.test_ids("TP002", WeatherVariable.TMAX) == []

    gridded = TestId.parse("Gridded(ERA)")
    loaded, missing = store.load_station("TP001", WeatherVariable.TMAX, [SPATIAL, gridded])
    assert list(loaded) == [SPATIAL]
    assert missing[0][0] == gridded
    assert "Gridded(ERA)" in missing[0][1]
