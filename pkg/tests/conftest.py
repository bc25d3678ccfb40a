"""Shared fixtures: small deterministic networks and series."""

from datetime import date

import numpy as np
import pandas as pd
import pytest

from contracts import StationSource
from processors.core import DailySeries, StationMeta, WeatherVariable
from utils.data_readers import write_daily

CAL_START = date(2018, 1, 1)
CAL_DAYS = 730


def daily_index(start: date = CAL_START, days: int = CAL_DAYS) -> pd.DatetimeIndex:
    return pd.date_range(start, periods=days, freq="D")


def make_series(station_id, values, variable=WeatherVariable.TMAX, start=CAL_START) -> DailySeries:
    values = np.asarray(values, dtype=float)
    return DailySeries(station_id, variable, pd.Series(values, index=daily_index(start, values.size)))


def seasonal_signal(days: int = CAL_DAYS, mean: float = 25.0, amplitude: float = 6.0) -> np.ndarray:
    t = np.arange(days)
    return mean + amplitude * np.cos(2.0 * np.pi * t / 365.25)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def temperature_network(rng):
    """
    One TPAWS station and four official neighbours sharing a common
    daily anomaly; each station adds its own 0.8 degC noise.
    """
    common = seasonal_signal() + rng.normal(0.0, 3.0, CAL_DAYS)
    stations = [StationMeta("TP001", -31.95, 115.86, 20.0, StationSource.TPAWS)]
    neighbors = {}
    for k, (dlat, dlon) in enumerate([(0.1, 0.0), (-0.1, 0.05), (0.0, 0.12), (0.08, -0.1)]):
        sid = f"OF00{k + 1}"
        stations.append(StationMeta(sid, -31.95 + dlat, 115.86 + dlon, 15.0, StationSource.OFFICIAL))
        neighbors[sid] = make_series(sid, common + 0.5 * k + rng.normal(0.0, 0.8, CAL_DAYS))
    target = make_series("TP001", common + rng.normal(0.0, 0.8, CAL_DAYS))
    return {"stations": stations, "target": target, "neighbors": neighbors, "common": common}


@pytest.fixture
def run_config(tmp_path, temperature_network):
    """Run configuration file over temperature_network written to disk."""
    lines = ["id,lat,lon,elev_m,source"]
    for meta in temperature_network["stations"]:
        lines.append(f"{meta.id},{meta.latitude},{meta.longitude},{meta.elevation},{meta.source.value}")
    (tmp_path / "stations.csv").write_text("\n".join(lines) + "\n")
    write_daily(temperature_network["neighbors"], tmp_path / "official.csv")
    write_daily({"TP001": temperature_network["target"]}, tmp_path / "tpaws.csv")
    path = tmp_path / "run.conf"
    path.write_text(
        "stations = stations.csv\n"
        "official_daily = official.csv\n"
        "tpaws_daily = tpaws.csv\n"
        "variable = Tmax\n"
        "enabled_tests = Spatial, Trend\n"
        "model_store = models\n"
        "output_dir = out\n"
        "log_dir = logs\n"
    )
    return path
