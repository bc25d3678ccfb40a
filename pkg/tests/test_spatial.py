from dataclasses import fields
from datetime import timedelta

import numpy as np
import pandas as pd
import pytest

from contracts import InsufficientOverlapError, NoNeighborsError, NotApplicableError
from processors.core import Observation, WeatherVariable
from processors.quality_tests import CalibrationSettings, SpatialModel, calibrate_spatial, run_spatial_test
from processors.quality_tests.base import day_numbers, fold_labels, haversine_km, select_neighbors
from processors.quality_tests.trend import TrendModel, calibrate_trend, neighbor_deltas, run_trend_test

from conftest import CAL_DAYS, CAL_START, make_series

LAST_DAY = CAL_START + timedelta(days=CAL_DAYS - 1)


def _obs(value, variable=WeatherVariable.TMAX, day=LAST_DAY):
    return Observation("TP001", day, variable, value)


# =============================================================================
# NEIGHBOURS & FOLDS
# =============================================================================

def test_haversine_known_distance():
    # one degree of latitude
    assert haversine_km(0.0, 0.0, 1.0, 0.0) == pytest.approx(111.195, abs=0.01)
    assert haversine_km(-31.9, 115.8, -31.9, 115.8) == 0.0


def test_neighbors_are_official_and_nearest_first(temperature_network):
    stations = temperature_network["stations"]
    target = stations[0]
    neighbors = select_neighbors(target, stations, radius_km=200.0)
    assert sorted(n.id for n in neighbors) == ["OF001", "OF002", "OF003", "OF004"]
    assert all(n.is_official for n in neighbors)
    distances = [haversine_km(target.latitude, target.longitude, n.latitude, n.longitude) for n in neighbors]
    assert distances == sorted(distances)
    assert select_neighbors(target, stations, radius_km=1.0) == []


def test_fold_labels_are_day_number_modulo():
    assert fold_labels(np.arange(7), 3).tolist() == [0, 1, 2, 0, 1, 2, 0]


def test_fold_of_a_day_survives_dropped_rows():
    index = pd.date_range(CAL_START, periods=20, freq="D")
    full = fold_labels(day_numbers(index), 5)
    kept = np.array([d % 3 != 0 for d in range(20)])
    assert fold_labels(day_numbers(index)[kept], 5).tolist() == full[kept].tolist()
    assert day_numbers(index[kept]).tolist()[:3] == [0, 1, 3]
    assert day_numbers(index, start=CAL_START - timedelta(days=2)).tolist()[:2] == [2, 3]


# =============================================================================
# SPATIAL TEST
# =============================================================================

def test_spatial_prediction_tracks_neighbours(temperature_network):
    model = calibrate_spatial(temperature_network["target"], temperature_network["neighbors"])
    assert isinstance(model, SpatialModel)
    assert model.n_days == CAL_DAYS
    assert model.transform.is_identity
    assert 0.5 < model.error.sigma < 1.5

    today = {sid: s.value_on(LAST_DAY) for sid, s in temperature_network["neighbors"].items()}
    truth = temperature_network["target"].value_on(LAST_DAY)
    typical = run_spatial_test(model, _obs(truth), today)
    assert typical.applicable and typical.cl > 0.001
    assert typical.predicted_median == pytest.approx(truth, abs=5.0)

    spike = run_spatial_test(model, _obs(truth + 20.0), today)
    assert spike.cl < 1e-6
    assert spike.p1 > 0.5


def test_identical_neighbour_gives_tiny_spread(temperature_network):
    target = temperature_network["target"]
    twin = make_series("OF009", target.values.to_numpy())
    other = temperature_network["neighbors"]["OF001"]
    model = calibrate_spatial(target, {"OF009": twin, "OF001": other})
    assert model.error.sigma < 5e-3 * float(np.std(target.values))


def test_missing_neighbours_are_imputed(temperature_network):
    model = calibrate_spatial(temperature_network["target"], temperature_network["neighbors"])
    today = {sid: s.value_on(LAST_DAY) for sid, s in temperature_network["neighbors"].items()}
    partial = {sid: today[sid] for sid in sorted(today)[:2]}
    result = run_spatial_test(model, _obs(25.0), partial)
    assert sorted(result.inputs_used["imputed"]) == sorted(today)[2:]

    with pytest.raises(NotApplicableError):
        run_spatial_test(model, _obs(25.0), {sorted(today)[0]: 25.0})


def test_spatial_calibration_needs_two_neighbours(temperature_network):
    one = dict(list(temperature_network["neighbors"].items())[:1])
    with pytest.raises(NoNeighborsError):
        calibrate_spatial(temperature_network["target"], one)


def test_neighbours_without_overlap_leave_too_few(temperature_network):
    neighbors = dict(temperature_network["neighbors"])
    for sid in ("OF002", "OF003", "OF004"):
        neighbors[sid] = neighbors[sid].between(None, CAL_START + timedelta(days=100))
    with pytest.raises(NoNeighborsError) as excinfo:
        calibrate_spatial(temperature_network["target"], neighbors)
    assert excinfo.value.context["kept"] == ["OF001"]


def test_spatial_calibration_needs_a_year_of_overlap(temperature_network):
    short = temperature_network["target"].between(None, CAL_START + timedelta(days=200))
    with pytest.raises(InsufficientOverlapError):
        calibrate_spatial(short, temperature_network["neighbors"])


def test_spatial_model_dict_round_trip(temperature_network):
    model = calibrate_spatial(temperature_network["target"], temperature_network["neighbors"])
    again = SpatialModel.from_dict(model.to_dict())
    assert again.to_dict() == model.to_dict()


def test_rain_uses_point_mass_at_zero(rng):
    days = CAL_DAYS
    storm = rng.gamma(0.6, 8.0, days) * (rng.random(days) < 0.45)
    neighbors = {
        f"OF00{k}": make_series(f"OF00{k}", np.maximum(storm + rng.normal(0.0, 0.5, days) * (storm > 0), 0.0),
                                WeatherVariable.RAIN)
        for k in range(1, 4)
    }
    target = make_series("TP001", np.maximum(storm + rng.normal(0.0, 0.5, days) * (storm > 0), 0.0),
                         WeatherVariable.RAIN)
    model = calibrate_spatial(target, neighbors, CalibrationSettings())
    assert model.zero_mass is not None and 0.3 < model.zero_mass < 0.8
    assert not model.transform.is_identity

    today = {sid: 0.0 for sid in neighbors}
    dry = run_spatial_test(model, _obs(0.0, WeatherVariable.RAIN), today)
    assert dry.p1 == pytest.approx(model.zero_mass / 2.0)


# =============================================================================
# TREND TEST
# =============================================================================

def test_neighbor_deltas_need_both_days():
    deltas = neighbor_deltas({"A": 20.0, "B": 18.0, "C": 15.0}, {"A": 19.0, "C": 17.5})
    assert deltas == {"A": 1.0, "C": -2.5}


def test_trend_scores_change_from_yesterday(temperature_network):
    target = temperature_network["target"]
    neighbors = temperature_network["neighbors"]
    model = calibrate_trend(target, neighbors)
    assert isinstance(model, TrendModel)
    assert model.kind == "Trend"

    yesterday = LAST_DAY - timedelta(days=1)
    deltas = neighbor_deltas({sid: s.value_on(LAST_DAY) for sid, s in neighbors.items()},
                             {sid: s.value_on(yesterday) for sid, s in neighbors.items()})
    previous = target.value_on(yesterday)
    typical = run_trend_test(model, _obs(target.value_on(LAST_DAY)), previous, deltas)
    assert typical.cl > 0.001
    assert typical.predicted_median == pytest.approx(target.value_on(LAST_DAY), abs=5.0)
    jump = run_trend_test(model, _obs(target.value_on(LAST_DAY) + 15.0), previous, deltas)
    assert jump.cl < 1e-4


def test_trend_from_zero_yesterday_matches_spatial_scoring(temperature_network):
    neighbors = temperature_network["neighbors"]
    trend = calibrate_trend(temperature_network["target"], neighbors)
    spatial = SpatialModel(**{f.name: getattr(trend, f.name) for f in fields(SpatialModel) if f.init})

    yesterday = LAST_DAY - timedelta(days=1)
    deltas = neighbor_deltas({sid: s.value_on(LAST_DAY) for sid, s in neighbors.items()},
                             {sid: s.value_on(yesterday) for sid, s in neighbors.items()})
    for change in (-6.0, -1.0, 0.0, 2.5, 9.0):
        by_trend = run_trend_test(trend, _obs(change), 0.0, deltas)
        by_spatial = run_spatial_test(spatial, _obs(change), deltas)
        assert by_trend.p1 == pytest.approx(by_spatial.p1, rel=1e-12, abs=1e-15)
        assert by_trend.cl == pytest.approx(by_spatial.cl, rel=1e-12, abs=1e-15)
        assert by_trend.predicted_median == pytest.approx(by_spatial.predicted_median)


def test_trend_needs_yesterday(temperature_network):
    model = calibrate_trend(temperature_network["target"], temperature_network["neighbors"])
    with pytest.raises(NotApplicableError):
        run_trend_test(model, _obs(25.0), None, {"OF001": 1.0, "OF002": 0.5})
    with pytest.raises(NotApplicableError):
        run_trend_test(model, _obs(25.0), 24.0, {"OF001": 1.0})


def test_default_transforms_per_variable():
    settings = CalibrationSettings()
    assert settings.transform_kind(WeatherVariable.WIND_GUST).value == "LogSinh"
    assert settings.transform_kind(WeatherVariable.TMAX).value == "Identity"
