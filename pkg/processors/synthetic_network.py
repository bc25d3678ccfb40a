#!/usr/bin/env python3
"""
Synthetic Network

Generates a self-consistent official + TPAWS network for one variable:
- daily field = climatology + seasonal harmonic + spatially correlated
  AR(1) anomaly (exponential correlation, Cholesky factor) + station noise
- gridded products = the same field on a lattice, smoothed, biased by
  half the station noise sd (NWP also carries its own forecast error)
- optional hourly series = daily values modulated by a diurnal harmonic

Also injects additive errors into TPAWS series with truth labels.
"""

import math
import logging
import zlib
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.ndimage import uniform_filter

from contracts import CovarianceNotPDError, GridProductKind, InjectionSign, StationSource
from processors.assessment import PERMITTED_PRODUCTS
from processors.core import (
    LOCAL_HOUR_OF,
    DailyContext,
    DailySeries,
    StationMeta,
    SubdailySeries,
    WeatherVariable,
    variable_limits,
)
from processors.pipeline import NetworkData
from processors.quality_tests.base import haversine_km
from utils.grid_products import GridProduct, grid_series_at

logger = logging.getLogger(__name__)

NUGGET = 1e-6
DIURNAL_PEAK_HOUR = 15
DIURNAL_TROUGH_HOUR = 5
SEASONAL_PEAK_DOY = 15


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of a synthetic network (defaults: wind gust, 100 stations, 4 years)"""
    n_stations: int = 100
    n_tpaws: int = 10
    bounding_box: Tuple[float, float, float, float] = (-34.0, -30.0, 115.0, 119.0)
    years: int = 4
    start_year: int = 2016
    variable: WeatherVariable = WeatherVariable.WIND_GUST
    spatial_range_km: float = 300.0
    noise_sd: float = 2.0
    seasonal_amplitude: float = 6.0
    climate_mean: float = 40.0
    anomaly_sd: float = 10.0
    ar_coefficient: float = 0.5
    grid_cell_deg: float = 0.5
    grid_smoothing: int = 3
    nwp_error_sd: float = 3.0
    diurnal_amplitude: float = 8.0
    hourly: bool = False
    seed: int = 42

    def __post_init__(self):
        if not 0 < self.n_tpaws < self.n_stations:
            raise ValueError(f"Need 0 < n_tpaws < n_stations, got {self.n_tpaws} and {self.n_stations}")
        if self.years < 4:
            raise ValueError("At least 4 years: 2 for calibration and 2 for evaluation")
        lat_min, lat_max, lon_min, lon_max = self.bounding_box
        if not (lat_min < lat_max and lon_min < lon_max):
            raise ValueError(f"Invalid bounding box {self.bounding_box}")
        if not (self.spatial_range_km > 0 and self.noise_sd > 0 and self.anomaly_sd > 0):
            raise ValueError("spatial_range_km, noise_sd and anomaly_sd must be positive")
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise ValueError(f"ar_coefficient must be in [0, 1): {self.ar_coefficient}")

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.date_range(date(self.start_year, 1, 1), date(self.start_year + self.years, 1, 1) - timedelta(days=1))

    @property
    def split_date(self) -> date:
        """First day of the evaluation half."""
        return date(self.start_year + self.years // 2, 1, 1)


@dataclass
class SyntheticNetwork:
    """Generated stations, series and products plus the underlying anomalies"""
    config: SyntheticConfig
    stations: List[StationMeta]
    official: Dict[str, DailySeries]
    tpaws: Dict[str, DailySeries]
    grids: Dict[GridProductKind, GridProduct]
    anomalies: np.ndarray  # (ndays, n_stations) in station order
    tpaws_subdaily: Dict[str, List[SubdailySeries]] = field(default_factory=dict)
    grid_subdaily: Dict[str, List[SubdailySeries]] = field(default_factory=dict)

    def to_network(self, tpaws: Optional[Dict[str, DailySeries]] = None) -> NetworkData:
        """NetworkData view, optionally with replaced (contaminated) TPAWS series."""
        return NetworkData(
            variable=self.config.variable,
            stations=self.stations,
            official=self.official,
            tpaws=tpaws if tpaws is not None else self.tpaws,
            grids=self.grids,
            tpaws_subdaily=self.tpaws_subdaily,
            grid_subdaily=self.grid_subdaily,
        )


# =============================================================================
# FIELD GENERATION
# =============================================================================

def exponential_covariance(points: np.ndarray, range_km: float) -> np.ndarray:
    """exp(-d / range) between (lat, lon) points, unit variance."""
    n = points.shape[0]
    cov = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            d = haversine_km(points[i, 0], points[i, 1], points[j, 0], points[j, 1])
            cov[i, j] = cov[j, i] = math.exp(-d / range_km)
    return cov


def correlation_factor(cov: np.ndarray, nugget: float = NUGGET) -> np.ndarray:
    """
    Lower Cholesky factor of cov with a relative nugget on the diagonal.

    Raises:
        CovarianceNotPDError: Factorization fails even with the nugget
    """
    jittered = cov + nugget * np.eye(cov.shape[0])
    try:
        return linalg.cholesky(jittered, lower=True)
    except linalg.LinAlgError as e:
        raise CovarianceNotPDError(
            "Station covariance is not positive definite; increase spatial_range_km or the nugget",
            context={"size": int(cov.shape[0]), "nugget": nugget}
        ) from e


def _lattice(config: SyntheticConfig) -> Tuple[float, float, int, int, np.ndarray]:
    lat_min, lat_max, lon_min, lon_max = config.bounding_box
    cell = config.grid_cell_deg
    nrows = int(math.floor((lat_max - lat_min) / cell)) + 1
    ncols = int(math.floor((lon_max - lon_min) / cell)) + 1
    lats = lat_min + cell * np.arange(nrows)
    lons = lon_min + cell * np.arange(ncols)
    nodes = np.array([(la, lo) for la in lats for lo in lons])
    return lat_min, lon_min, nrows, ncols, nodes


def _place_stations(config: SyntheticConfig, rng: np.random.Generator) -> List[StationMeta]:
    lat_min, lat_max, lon_min, lon_max = config.bounding_box
    n_official = config.n_stations - config.n_tpaws
    stations = []
    for i in range(n_official):
        stations.append(StationMeta(
            id=f"BOM{i + 1:03d}",
            latitude=float(rng.uniform(lat_min, lat_max)),
            longitude=float(rng.uniform(lon_min, lon_max)),
            elevation=float(rng.uniform(0.0, 500.0)),
            source=StationSource.OFFICIAL,
        ))
    # TPAWS sites stay in the interior so every one has official neighbors
    margin_lat = 0.2 * (lat_max - lat_min)
    margin_lon = 0.2 * (lon_max - lon_min)
    for i in range(config.n_tpaws):
        stations.append(StationMeta(
            id=f"TP{i + 1:03d}",
            latitude=float(rng.uniform(lat_min + margin_lat, lat_max - margin_lat)),
            longitude=float(rng.uniform(lon_min + margin_lon, lon_max - margin_lon)),
            elevation=float(rng.uniform(0.0, 500.0)),
            source=StationSource.TPAWS,
        ))
    return stations


def _ar1_field(factor: np.ndarray, ndays: int, phi: float, rng: np.random.Generator) -> np.ndarray:
    innovations = rng.standard_normal((ndays, factor.shape[0])) @ factor.T
    field_values = np.empty_like(innovations)
    field_values[0] = innovations[0]
    scale = math.sqrt(1.0 - phi * phi)
    for t in range(1, ndays):
        field_values[t] = phi * field_values[t - 1] + scale * innovations[t]
    return field_values


def _hourly_day(
    station_id: str,
    day: date,
    daily_value: float,
    variable: WeatherVariable,
    amplitude: float,
    rng: np.random.Generator,
    noise_sd: float
) -> SubdailySeries:
    """Hourly readings whose daily statistic is the given daily value."""
    hours = np.arange(24)
    if variable == WeatherVariable.TMIN:
        shape = (1.0 - np.cos(2.0 * math.pi * (hours - DIURNAL_TROUGH_HOUR) / 24.0)) / 2.0
        values = daily_value + amplitude * shape
    else:
        peak = LOCAL_HOUR_OF.get(variable, DIURNAL_PEAK_HOUR)
        shape = (1.0 - np.cos(2.0 * math.pi * (hours - peak) / 24.0)) / 2.0
        values = daily_value - amplitude * shape
    values = values + rng.normal(0.0, noise_sd, 24) * (shape > 0)
    stamps = [datetime(day.year, day.month, day.day, h, tzinfo=timezone.utc) for h in hours]
    return SubdailySeries(station_id, day, variable, stamps, values.tolist())


def synthesize_network(config: Optional[SyntheticConfig] = None) -> SyntheticNetwork:
    """
    Generate a synthetic network; identical configs give identical output.

    Raises:
        CovarianceNotPDError: Joint station/lattice covariance cannot be factorized
    """
    config = config or SyntheticConfig()
    rng = np.random.default_rng(config.seed)
    variable = config.variable
    stations = _place_stations(config, rng)
    days = config.dates
    ndays = len(days)

    lat0, lon0, nrows, ncols, nodes = _lattice(config)
    points = np.vstack([[[s.latitude, s.longitude] for s in stations], nodes])
    logger.info(
        f"Synthesizing {variable.value}: {len(stations)} stations, {nrows}x{ncols} lattice, {ndays} days"
    )
    factor = correlation_factor(exponential_covariance(points, config.spatial_range_km))
    anomaly = config.anomaly_sd * _ar1_field(factor, ndays, config.ar_coefficient, rng)

    doy = np.asarray(days.dayofyear, dtype=float)
    seasonal = config.climate_mean + config.seasonal_amplitude * np.cos(
        2.0 * math.pi * (doy - SEASONAL_PEAK_DOY) / 365.25
    )
    nstations = len(stations)
    station_truth = seasonal[:, None] + anomaly[:, :nstations]
    observed = station_truth + rng.normal(0.0, config.noise_sd, station_truth.shape)

    official: Dict[str, DailySeries] = {}
    tpaws: Dict[str, DailySeries] = {}
    for j, station in enumerate(stations):
        limits = variable_limits(variable, DailyContext(elevation=station.elevation))
        values = np.clip(observed[:, j], limits.lower, limits.upper)
        series = DailySeries(station.id, variable, pd.Series(values, index=days))
        (official if station.is_official else tpaws)[station.id] = series

    lattice_truth = (seasonal[:, None] + anomaly[:, nstations:]).reshape(ndays, nrows, ncols)
    grids = {}
    bias = 0.5 * config.noise_sd
    limits = variable_limits(variable, DailyContext())
    for product in sorted(PERMITTED_PRODUCTS, key=lambda p: p.value):
        if variable not in PERMITTED_PRODUCTS[product]:
            continue
        values = lattice_truth.copy()
        if product == GridProductKind.NWP:
            values = values + rng.normal(0.0, config.nwp_error_sd, values.shape)
        values = uniform_filter(values, size=(1, config.grid_smoothing, config.grid_smoothing), mode="nearest")
        values = np.clip(values + bias, limits.lower, limits.upper)
        grids[product] = GridProduct(
            product=product,
            variable=variable,
            origin_lat=lat0,
            origin_lon=lon0,
            cell_size=config.grid_cell_deg,
            nrows=nrows,
            ncols=ncols,
            dates=[d.date() for d in days],
            values=values,
        )

    network = SyntheticNetwork(config, stations, official, tpaws, grids, anomaly[:, :nstations])
    if config.hourly:
        _add_hourly(network, rng)
    return network


def _add_hourly(network: SyntheticNetwork, rng: np.random.Generator) -> None:
    config = network.config
    grid = next(iter(network.grids.values()), None)
    for station in network.stations:
        if station.is_official:
            continue
        series = network.tpaws[station.id]
        network.tpaws_subdaily[station.id] = [
            _hourly_day(station.id, ts.date(), float(v), config.variable, config.diurnal_amplitude,
                        rng, 0.25 * config.noise_sd)
            for ts, v in series.values.items()
        ]
        if grid is not None:
            at_site = grid_series_at(grid, station.id, station.latitude, station.longitude)
            network.grid_subdaily[station.id] = [
                _hourly_day(station.id, ts.date(), float(v), config.variable, config.diurnal_amplitude,
                            rng, 0.25 * config.noise_sd)
                for ts, v in at_site.values.items()
            ]


# =============================================================================
# ERROR INJECTION
# =============================================================================

@dataclass(frozen=True)
class InjectionSpec:
    """Additive error contamination of a fraction of days"""
    fraction: float
    magnitude_low: float
    magnitude_high: float
    sign: InjectionSign = InjectionSign.POSITIVE
    seed: int = 7

    def __post_init__(self):
        if not 0.0 <= self.fraction < 1.0:
            raise ValueError(f"fraction must be in [0, 1): {self.fraction}")
        if self.magnitude_low > self.magnitude_high:
            raise ValueError("magnitude_low must not exceed magnitude_high")

    @classmethod
    def wind_gust_default(cls, seed: int = 7) -> "InjectionSpec":
        """+5 to +14.6 m/s on about 10% of days, in km/h."""
        return cls(fraction=0.10, magnitude_low=18.0, magnitude_high=52.56, sign=InjectionSign.POSITIVE, seed=seed)

    def to_dict(self) -> Dict[str, object]:
        return {
            "fraction": self.fraction,
            "magnitude_low": self.magnitude_low,
            "magnitude_high": self.magnitude_high,
            "sign": self.sign.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "InjectionSpec":
        return cls(
            fraction=float(data["fraction"]),
            magnitude_low=float(data["magnitude_low"]),
            magnitude_high=float(data["magnitude_high"]),
            sign=InjectionSign(data.get("sign", InjectionSign.POSITIVE.value)),
            seed=int(data.get("seed", 7)),
        )


def inject_errors(series: DailySeries, spec: InjectionSpec) -> Tuple[DailySeries, pd.Series]:
    """
    Contaminate each day independently with probability spec.fraction.

    The generator is seeded from (spec.seed, station id) so the outcome of
    one station does not depend on the others.

    Returns:
        (contaminated series, boolean labels indexed like the series)
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, zlib.crc32(series.station_id.encode())]))
    n = len(series)
    hit = rng.random(n) < spec.fraction
    magnitude = rng.uniform(spec.magnitude_low, spec.magnitude_high, n)
    if spec.sign == InjectionSign.POSITIVE:
        signs = np.ones(n)
    elif spec.sign == InjectionSign.NEGATIVE:
        signs = -np.ones(n)
    else:
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)

    values = series.values.to_numpy().copy()
    values[hit] += signs[hit] * magnitude[hit]
    labels = pd.Series(hit, index=series.values.index, name=series.station_id)
    logger.debug(f"{series.station_id}: injected errors into {int(hit.sum())}/{n} days")
    return DailySeries(series.station_id, series.variable, pd.Series(values, index=series.values.index)), labels
