from datetime import date

import numpy as np
import pytest

from contracts import ConfigError, GridProductKind, ParseError, StationSource
from processors.core import WeatherVariable
from processors.skill_evaluation import TruthLabel
from utils.data_readers import (
    load_network,
    read_daily,
    read_grid,
    read_labels,
    read_nwp_forecasts,
    read_stations,
    read_subdaily,
    write_grid,
    write_labels,
)
from utils.grid_products import GridProduct
from utils.run_config import RunConfig


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# =============================================================================
# STATIONS
# =============================================================================

def test_read_stations(tmp_path):
    path = _write(tmp_path / "stations.csv",
                  "id,lat,lon,elev_m,source\nOF001,-31.9,115.8,20,Official\nTP001,-31.95,115.86,15,tpaws\n")
    stations = read_stations(path)
    assert [s.id for s in stations] == ["OF001", "TP001"]
    assert stations[1].source == StationSource.TPAWS


def test_bad_station_lines_are_all_reported(tmp_path):
    path = _write(tmp_path / "stations.csv",
                  "id,lat,lon,elev_m,source\n"
                  "OF001,95.0,115.8,20,Official\n"
                  "OF002,-31.9,abc,20,Official\n"
                  "OF003,-31.9,115.8,20,Amateur\n"
                  "OF004,-31.9,115.8,20,Official\n"
                  "OF004,-31.8,115.8,20,Official\n")
    with pytest.raises(ParseError) as excinfo:
        read_stations(path)
    lines = [entry["line"] for entry in excinfo.value.context["lines"]]
    assert lines == [2, 3, 4, 6]
    assert "Latitude" in excinfo.value.message


def test_wrong_header_and_missing_file(tmp_path):
    with pytest.raises(ParseError):
        read_stations(_write(tmp_path / "s.csv", "id,lat,lon\nA,1,2\n"))
    with pytest.raises(ParseError):
        read_stations(tmp_path / "absent.csv")


# =============================================================================
# DAILY
# =============================================================================

def test_read_daily_converts_declared_unit(tmp_path):
    path = _write(tmp_path / "gust.csv",
                  "# unit: m/s\nstation_id,date,value\nTP001,2020-01-02,10\nTP001,2020-01-01,5\nTP002,2020-01-01,1\n")
    series = read_daily(path, WeatherVariable.WIND_GUST)
    assert sorted(series) == ["TP001", "TP002"]
    assert series["TP001"].value_on(date(2020, 1, 1)) == pytest.approx(18.0)
    assert series["TP001"].value_on(date(2020, 1, 2)) == pytest.approx(36.0)
    assert list(series["TP001"].values.index.date) == [date(2020, 1, 1), date(2020, 1, 2)]


def test_read_daily_rejects_bad_rows(tmp_path):
    path = _write(tmp_path / "tmax.csv",
                  "station_id,date,value\n"
                  "TP001,2020-01-01,\n"
                  "TP001,2020-1-2,20\n"
                  "TP001,2020-01-03,21\n"
                  "TP001,2020-01-03,22\n")
    with pytest.raises(ParseError) as excinfo:
        read_daily(path, WeatherVariable.TMAX)
    reasons = {entry["line"]: entry["reason"] for entry in excinfo.value.context["lines"]}
    assert reasons[2] == "empty value"
    assert "YYYY-MM-DD" in reasons[3]
    assert "duplicate" in reasons[5]


def test_unconvertible_unit_is_a_parse_error(tmp_path):
    path = _write(tmp_path / "tmax.csv", "# unit: degF\nstation_id,date,value\nTP001,2020-01-01,80\n")
    with pytest.raises(ParseError):
        read_daily(path, WeatherVariable.TMAX)


# =============================================================================
# SUB-DAILY
# =============================================================================

def test_read_subdaily_groups_by_local_day(tmp_path):
    rows = [f"TP001,2020-01-15T{h:02d}:00:00+08:00,{20 + h}" for h in range(24)]
    rows.append("TP001,2020-01-16T00:30:00+08:00,19")
    path = _write(tmp_path / "hourly.csv", "station_id,timestamp,value\n" + "\n".join(rows) + "\n")
    series = read_subdaily(path, WeatherVariable.TMAX)["TP001"]
    assert [s.date for s in series] == [date(2020, 1, 15), date(2020, 1, 16)]
    assert len(series[0].values) == 24
    assert np.isfinite(series[0].hourly_slots()).all()


def test_subdaily_timestamps_must_increase_and_carry_offset(tmp_path):
    path = _write(tmp_path / "hourly.csv",
                  "station_id,timestamp,value\n"
                  "TP001,2020-01-15T10:00:00+08:00,20\n"
                  "TP001,2020-01-15T09:00:00+08:00,21\n"
                  "TP001,2020-01-15T11:00:00,22\n")
    with pytest.raises(ParseError) as excinfo:
        read_subdaily(path, WeatherVariable.TMAX)
    assert [entry["line"] for entry in excinfo.value.context["lines"]] == [3, 4]


# =============================================================================
# GRIDS
# =============================================================================

def _grid():
    values = np.array([[[1.5, np.nan], [3.25, 4.0]], [[5.0, 6.0], [7.0, 8.125]]])
    return GridProduct(GridProductKind.ERA, WeatherVariable.WIND_GUST, -32.0, 115.0, 0.25, 2, 2,
                       [date(2020, 1, 1), date(2020, 1, 2)], values)


def test_grid_file_round_trip(tmp_path):
    grid = _grid()
    again = read_grid(write_grid(grid, tmp_path / "era.grid"))
    assert again.product == GridProductKind.ERA
    assert again.dates == grid.dates
    np.testing.assert_array_equal(again.values, grid.values)


def test_grid_value_count_must_match(tmp_path):
    path = write_grid(_grid(), tmp_path / "era.grid")
    path.write_text(path.read_text() + "9.0\n")
    with pytest.raises(ParseError) as excinfo:
        read_grid(path)
    assert excinfo.value.context["expected"] == 8


def test_grid_dates_must_increase(tmp_path):
    path = write_grid(_grid(), tmp_path / "era.grid")
    path.write_text(path.read_text().replace("2020-01-01,2020-01-02", "2020-01-02,2020-01-01"))
    with pytest.raises(ParseError):
        read_grid(path)


# =============================================================================
# LABELS & NWP
# =============================================================================

def test_labels_round_trip(tmp_path):
    labels = [TruthLabel("TP002", date(2020, 1, 1), False, 30.5), TruthLabel("TP001", date(2020, 1, 2), True, 41.0)]
    again = read_labels(write_labels(labels, tmp_path / "labels.csv"))
    assert again == sorted(labels, key=lambda lb: lb.key)


def test_read_nwp_forecasts_in_utc(tmp_path):
    path = _write(tmp_path / "nwp.csv",
                  "station_id,issued,valid,value\n"
                  "TP001,2020-01-14T08:00:00+08:00,2020-01-14T09:00:00+08:00,30\n"
                  "TP001,2020-01-14T08:00:00+08:00,2020-01-14T10:00:00+08:00,31\n")
    [forecast] = read_nwp_forecasts(path, WeatherVariable.TMAX)["TP001"]
    assert forecast.issued.hour == 0
    assert forecast.values == [30.0, 31.0]


# =============================================================================
# NETWORK
# =============================================================================

def test_load_network(tmp_path):
    _write(tmp_path / "stations.csv", "id,lat,lon,elev_m,source\nOF001,-31.9,115.8,20,Official\n"
                                      "TP001,-31.95,115.86,15,TPAWS\n")
    _write(tmp_path / "official.csv", "station_id,date,value\nOF001,2020-01-01,40\n")
    _write(tmp_path / "tpaws.csv", "station_id,date,value\nTP001,2020-01-01,42\n")
    grid = _grid()
    grid.origin_lat, grid.origin_lon = -32.0, 115.75
    write_grid(grid, tmp_path / "era.grid")
    config = RunConfig(stations=tmp_path / "stations.csv", official_daily=tmp_path / "official.csv",
                       tpaws_daily=tmp_path / "tpaws.csv", grid={GridProductKind.ERA: tmp_path / "era.grid"},
                       variable=WeatherVariable.WIND_GUST)
    network = load_network(config)
    assert network.tpaws_ids == ["TP001"]
    assert GridProductKind.ERA in network.grids
    assert network.official_on(date(2020, 1, 1)) == {"OF001": 40.0}


def test_load_network_rejects_unknown_station(tmp_path):
    _write(tmp_path / "stations.csv", "id,lat,lon,elev_m,source\nOF001,-31.9,115.8,20,Official\n")
    _write(tmp_path / "official.csv", "station_id,date,value\nOF001,2020-01-01,40\n")
    _write(tmp_path / "tpaws.csv", "station_id,date,value\nTP404,2020-01-01,42\n")
    config = RunConfig(stations=tmp_path / "stations.csv", official_daily=tmp_path / "official.csv",
                       tpaws_daily=tmp_path / "tpaws.csv")
    with pytest.raises(ConfigError):
        load_network(config)
