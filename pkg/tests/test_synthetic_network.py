import numpy as np
import pandas as pd
import pytest

from contracts import CovarianceNotPDError, GridProductKind, InjectionSign
from processors.core import DailyContext, WeatherVariable, variable_limits
from processors.pipeline import NetworkData
from processors.synthetic_network import (
    InjectionSpec,
    SyntheticConfig,
    correlation_factor,
    exponential_covariance,
    inject_errors,
    synthesize_network,
)

from conftest import make_series

SMALL = SyntheticConfig(n_stations=20, n_tpaws=3, bounding_box=(-33.0, -31.0, 115.0, 117.0), grid_cell_deg=1.0)


@pytest.fixture(scope="module")
def small_network():
    return synthesize_network(SMALL)


def test_network_layout(small_network):
    assert sorted(small_network.tpaws) == ["TP001", "TP002", "TP003"]
    assert len(small_network.official) == 17
    assert set(small_network.grids) == {GridProductKind.ERA, GridProductKind.NWP}
    series = small_network.tpaws["TP001"]
    assert len(series) == len(SMALL.dates) == 1461
    assert SMALL.split_date.year == 2018


def test_values_respect_physical_limits(small_network):
    limits = variable_limits(WeatherVariable.WIND_GUST, DailyContext())
    for series in list(small_network.official.values()) + list(small_network.tpaws.values()):
        assert series.values.min() >= limits.lower
        assert series.values.max() <= limits.upper


def test_same_config_same_network(small_network):
    again = synthesize_network(SMALL)
    for sid, series in small_network.official.items():
        pd.testing.assert_series_equal(series.values, again.official[sid].values)
    np.testing.assert_array_equal(small_network.grids[GridProductKind.ERA].values,
                                  again.grids[GridProductKind.ERA].values)


def test_different_seed_differs(small_network):
    other = synthesize_network(SyntheticConfig(**{**SMALL.__dict__, "seed": 43}))
    assert not np.allclose(other.tpaws["TP001"].values.to_numpy(), small_network.tpaws["TP001"].values.to_numpy())


def test_nearby_stations_are_correlated(small_network):
    anomalies = small_network.anomalies
    corr = np.corrcoef(anomalies, rowvar=False)
    # 2 degrees across at a 300 km range: every pair shares a good part of its anomaly
    assert np.min(corr) > 0.2


def test_network_view(small_network):
    network = small_network.to_network()
    assert isinstance(network, NetworkData)
    assert network.tpaws_ids == ["TP001", "TP002", "TP003"]
    replaced = small_network.to_network({"TP001": small_network.tpaws["TP001"]})
    assert replaced.tpaws_ids == ["TP001"]


def test_hourly_series_peak_at_daily_value():
    config = SyntheticConfig(**{**SMALL.__dict__, "n_stations": 6, "n_tpaws": 1, "hourly": True})
    network = synthesize_network(config)
    days = network.tpaws_subdaily["TP001"]
    assert len(days) == len(config.dates)
    first = days[0]
    assert len(first.values) == 24
    assert first.values[15] == pytest.approx(network.tpaws["TP001"].values.iloc[0])
    assert "TP001" in network.grid_subdaily


def test_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(n_stations=10, n_tpaws=10)
    with pytest.raises(ValueError):
        SyntheticConfig(years=3)
    with pytest.raises(ValueError):
        SyntheticConfig(ar_coefficient=1.0)


def test_exponential_covariance_and_factor():
    points = np.array([[-32.0, 116.0], [-32.1, 116.0], [-33.0, 117.0]])
    cov = exponential_covariance(points, 300.0)
    np.testing.assert_allclose(np.diag(cov), 1.0)
    np.testing.assert_array_equal(cov, cov.T)
    assert cov[0, 1] > cov[0, 2]
    factor = correlation_factor(cov)
    np.testing.assert_allclose(factor @ factor.T, cov + 1e-6 * np.eye(3), atol=1e-12)

    with pytest.raises(CovarianceNotPDError):
        correlation_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


# =============================================================================
# INJECTION
# =============================================================================

def _clean_series(n=4000):
    return make_series("TP001", np.full(n, 40.0), WeatherVariable.WIND_GUST)


def test_injection_fraction_and_magnitudes():
    spec = InjectionSpec(fraction=0.3, magnitude_low=10.0, magnitude_high=20.0, seed=3)
    dirty, labels = inject_errors(_clean_series(), spec)
    assert labels.mean() == pytest.approx(0.3, abs=0.03)
    delta = dirty.values - 40.0
    assert np.all(delta[~labels] == 0.0)
    assert delta[labels].between(10.0, 20.0).all()


def test_injection_signs():
    negative = InjectionSpec(0.5, 5.0, 6.0, sign=InjectionSign.NEGATIVE)
    dirty, labels = inject_errors(_clean_series(), negative)
    assert (dirty.values[labels] < 40.0).all()

    both = InjectionSpec(0.5, 5.0, 6.0, sign=InjectionSign.BOTH)
    dirty, labels = inject_errors(_clean_series(), both)
    delta = dirty.values[labels] - 40.0
    assert (delta > 0).any() and (delta < 0).any()


def test_injection_is_reproducible_per_station():
    spec = InjectionSpec.wind_gust_default()
    _, first = inject_errors(_clean_series(), spec)
    _, second = inject_errors(_clean_series(), spec)
    pd.testing.assert_series_equal(first, second)
    _, other = inject_errors(make_series("TP002", np.full(4000, 40.0), WeatherVariable.WIND_GUST), spec)
    assert not np.array_equal(first.to_numpy(), other.to_numpy())


def test_injection_spec_validation_and_dict():
    spec = InjectionSpec.wind_gust_default()
    assert (spec.magnitude_low, spec.magnitude_high) == (18.0, 52.56)
    assert InjectionSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        InjectionSpec(fraction=1.0, magnitude_low=1.0, magnitude_high=2.0)
    with pytest.raises(ValueError):
        InjectionSpec(fraction=0.1, magnitude_low=3.0, magnitude_high=2.0)
