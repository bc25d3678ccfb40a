#!/usr/bin/env python3
"""
Core Domain Types - Variables, Units, Stations, Observations, Domain Test

Everything downstream works in canonical units fixed at ingest:
degC for temperatures, mm (per day) for rainfall, km/h for wind gusts,
% for relative humidity.

The domain test gates all further testing: an observation outside the
physical limits of its variable gets a final confidence level of 0.
"""

import math
import logging
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from contracts import StationSource, IncompatibleUnitsError, QualityControlError

logger = logging.getLogger(__name__)


# =============================================================================
# VARIABLES & UNITS
# =============================================================================

class WeatherVariable(str, Enum):
    """Daily weather variables assessed by the framework"""
    TMAX = "Tmax"
    TMIN = "Tmin"
    RAIN = "Rain"
    WIND_GUST = "WindGust"
    HUMIDITY_9AM = "Humidity9am"
    HUMIDITY_3PM = "Humidity3pm"

    @property
    def canonical_unit(self) -> str:
        return CANONICAL_UNITS[self]

    @property
    def is_temperature(self) -> bool:
        return self in (WeatherVariable.TMAX, WeatherVariable.TMIN)

    @property
    def is_humidity(self) -> bool:
        return self in (WeatherVariable.HUMIDITY_9AM, WeatherVariable.HUMIDITY_3PM)


CANONICAL_UNITS: Dict[WeatherVariable, str] = {
    WeatherVariable.TMAX: "degC",
    WeatherVariable.TMIN: "degC",
    WeatherVariable.RAIN: "mm",
    WeatherVariable.WIND_GUST: "km/h",
    WeatherVariable.HUMIDITY_9AM: "%",
    WeatherVariable.HUMIDITY_3PM: "%",
}

# Spellings accepted in unit declarations
UNIT_ALIASES: Dict[str, str] = {
    "degc": "degC", "c": "degC", "°c": "degC", "celsius": "degC",
    "mm": "mm", "mm/day": "mm", "mm/d": "mm",
    "km/h": "km/h", "kmh": "km/h", "kph": "km/h",
    "m/s": "m/s", "ms-1": "m/s", "m s-1": "m/s",
    "kn": "kn", "knot": "kn", "knots": "kn",
    "%": "%", "percent": "%",
}

# (from, to) -> scale; conversions are multiplicative, inverse pairs divide
_SCALES: Dict[Tuple[str, str], float] = {
    ("m/s", "km/h"): 3.6,
    ("kn", "km/h"): 1.852,
}


def normalize_unit(unit: str) -> str:
    """Map a unit spelling onto its canonical token."""
    key = unit.strip().lower()
    if key not in UNIT_ALIASES:
        raise IncompatibleUnitsError(f"Unknown unit: {unit!r}", context={"unit": unit})
    return UNIT_ALIASES[key]


def convert_units(value: float, from_unit: str, to_unit: str) -> float:
    """
    Convert a value between compatible units.

    Args:
        value: Value expressed in from_unit
        from_unit: Source unit (e.g. "m/s")
        to_unit: Target unit (e.g. "km/h")

    Returns:
        Value expressed in to_unit

    Raises:
        IncompatibleUnitsError: If the units measure different quantities
            or are not supported (degrees Fahrenheit is not)
    """
    src = normalize_unit(from_unit)
    dst = normalize_unit(to_unit)
    if src == dst:
        return float(value)
    if (src, dst) in _SCALES:
        return float(value) * _SCALES[(src, dst)]
    if (dst, src) in _SCALES:
        return float(value) / _SCALES[(dst, src)]
    # chain through km/h for speed units (m/s <-> kn)
    if (src, "km/h") in _SCALES and (dst, "km/h") in _SCALES:
        return convert_units(convert_units(value, src, "km/h"), "km/h", dst)
    raise IncompatibleUnitsError(
        f"Cannot convert {from_unit} to {to_unit}",
        context={"from": from_unit, "to": to_unit}
    )


# =============================================================================
# STATIONS & OBSERVATIONS
# =============================================================================

@dataclass(frozen=True)
class StationMeta:
    """A weather station, official or third-party"""
    id: str
    latitude: float
    longitude: float
    elevation: float
    source: StationSource

    def __post_init__(self):
        if not self.id:
            raise ValueError("Station id cannot be empty")
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValueError(f"Latitude must be between -90 and 90: {self.latitude}")
        if not (-180.0 <= self.longitude <= 180.0):
            raise ValueError(f"Longitude must be between -180 and 180: {self.longitude}")
        if not math.isfinite(self.elevation):
            raise ValueError("Elevation must be finite")

    @property
    def is_official(self) -> bool:
        return self.source == StationSource.OFFICIAL


@dataclass(frozen=True)
class Observation:
    """A single daily value reported by a station"""
    station_id: str
    date: date
    variable: WeatherVariable
    value: float
    quality_hint: Optional[str] = None  # "Raw" | "OfficialQCed"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(
                f"Observation value must be finite ({self.station_id} {self.date}); "
                "represent missing data by absence"
            )


@dataclass(frozen=True)
class PhysicalLimits:
    """Inclusive physically possible range, canonical units"""
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"lower ({self.lower}) must not exceed upper ({self.upper})")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class DailyContext:
    """Same-day information the domain test needs"""
    elevation: float = 0.0
    same_day_tmin: Optional[float] = None
    same_day_tmax: Optional[float] = None


@dataclass
class DailySeries:
    """
    Daily values of one variable at one station.

    values is a float pandas Series indexed by a sorted, unique,
    day-normalized DatetimeIndex; missing days are absent rows.
    """
    station_id: str
    variable: WeatherVariable
    values: pd.Series

    def __post_init__(self):
        series = self.values.astype(float)
        series.index = pd.DatetimeIndex(series.index).normalize()
        series = series[np.isfinite(series.to_numpy())]
        if series.index.has_duplicates:
            raise ValueError(f"Duplicate dates in series for {self.station_id}")
        self.values = series.sort_index()
        self.values.name = self.station_id

    @classmethod
    def from_pairs(
        cls,
        station_id: str,
        variable: WeatherVariable,
        pairs: List[Tuple[date, float]]
    ) -> "DailySeries":
        index = pd.DatetimeIndex([pd.Timestamp(d) for d, _ in pairs])
        return cls(station_id, variable, pd.Series([v for _, v in pairs], index=index, dtype=float))

    def __len__(self) -> int:
        return len(self.values)

    def value_on(self, day: date) -> Optional[float]:
        """Value on a calendar day, or None when absent."""
        key = pd.Timestamp(day)
        if key in self.values.index:
            return float(self.values.loc[key])
        return None

    def between(self, start: Optional[date], end: Optional[date]) -> "DailySeries":
        """Inclusive date window."""
        values = self.values
        if start is not None:
            values = values[values.index >= pd.Timestamp(start)]
        if end is not None:
            values = values[values.index <= pd.Timestamp(end)]
        return DailySeries(self.station_id, self.variable, values.copy())

    def differences(self) -> "DailySeries":
        """Day-to-day changes y_t - y_{t-1}, only where both days are present."""
        full = self.values.asfreq("D")
        delta = (full - full.shift(1)).dropna()
        return DailySeries(self.station_id, self.variable, delta)

    def observation(self, day: date) -> Optional[Observation]:
        value = self.value_on(day)
        if value is None:
            return None
        return Observation(self.station_id, day, self.variable, value)


@dataclass
class SubdailySeries:
    """Readings of one variable at one station within one local day"""
    station_id: str
    date: date
    variable: WeatherVariable
    timestamps: List[datetime] = field(default_factory=list)
    values: List[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise ValueError("timestamps and values must have the same length")
        for earlier, later in zip(self.timestamps, self.timestamps[1:]):
            if not later > earlier:
                raise ValueError(f"Timestamps must be strictly increasing ({self.station_id} {self.date})")
        for ts in self.timestamps:
            if ts.date() != self.date:
                raise ValueError(f"Timestamp {ts.isoformat()} is outside local day {self.date}")

    def hourly_slots(self) -> np.ndarray:
        """24 hourly slot values (mean of readings within the hour), NaN where empty."""
        slots = np.full(24, np.nan)
        if not self.values:
            return slots
        hours = np.array([ts.hour for ts in self.timestamps])
        values = np.asarray(self.values, dtype=float)
        for hour in np.unique(hours):
            slots[hour] = float(np.mean(values[hours == hour]))
        return slots


# =============================================================================
# DOMAIN TEST
# =============================================================================

HIGH_ELEVATION_M = 1000.0
TEMPERATURE_UPPER = 60.0
TEMPERATURE_LOWER = -30.0
TEMPERATURE_LOWER_HIGH_ELEVATION = -40.0

_STATIC_LIMITS: Dict[WeatherVariable, PhysicalLimits] = {
    WeatherVariable.RAIN: PhysicalLimits(0.0, 2000.0),
    WeatherVariable.WIND_GUST: PhysicalLimits(3.6, 540.0),
    WeatherVariable.HUMIDITY_9AM: PhysicalLimits(0.0, 100.0),
    WeatherVariable.HUMIDITY_3PM: PhysicalLimits(0.0, 100.0),
}


def _temperature_floor(elevation: float) -> float:
    if elevation > HIGH_ELEVATION_M:
        return TEMPERATURE_LOWER_HIGH_ELEVATION
    return TEMPERATURE_LOWER


def variable_limits(variable: WeatherVariable, ctx: DailyContext) -> PhysicalLimits:
    """
    Physical limits of a variable for one station-day.

    Tmax is bounded below by the same day's Tmin and Tmin above by
    min(60, Tmax); when the other temperature is missing the bound falls
    back to the static limit of that temperature row.
    """
    if not math.isfinite(ctx.elevation):
        raise ValueError("DailyContext.elevation must be finite")

    if variable == WeatherVariable.TMAX:
        lower = ctx.same_day_tmin if ctx.same_day_tmin is not None else _temperature_floor(ctx.elevation)
        # a same-day Tmin above 60 collapses the interval onto the upper limit
        return PhysicalLimits(min(lower, TEMPERATURE_UPPER), TEMPERATURE_UPPER)

    if variable == WeatherVariable.TMIN:
        upper = TEMPERATURE_UPPER
        if ctx.same_day_tmax is not None:
            upper = min(TEMPERATURE_UPPER, ctx.same_day_tmax)
        lower = _temperature_floor(ctx.elevation)
        return PhysicalLimits(min(lower, upper), upper)

    return _STATIC_LIMITS[variable]


@dataclass(frozen=True)
class DomainVerdict:
    """Outcome of the domain test"""
    passed: bool
    bound: Optional[str] = None  # "lower" | "upper"
    limit: Optional[float] = None

    @property
    def reason(self) -> str:
        if self.passed:
            return "within physical limits"
        return f"domain: value violates {self.bound} limit {self.limit:g}"


def domain_test(obs: Observation, ctx: DailyContext) -> DomainVerdict:
    """
    Check an observation against the physical limits of its variable.

    Boundary values pass. A Fail short-circuits every other test.
    """
    if not math.isfinite(obs.value):
        raise QualityControlError("Observation value must be finite", error_code="NON_FINITE_VALUE")

    if obs.variable == WeatherVariable.TMAX and ctx.same_day_tmin is not None:
        # coupled bound checked directly so Tmax < Tmin always fails
        if obs.value < ctx.same_day_tmin:
            return DomainVerdict(False, "lower", ctx.same_day_tmin)
        if obs.value > TEMPERATURE_UPPER:
            return DomainVerdict(False, "upper", TEMPERATURE_UPPER)
        return DomainVerdict(True)

    limits = variable_limits(obs.variable, ctx)
    if obs.value < limits.lower:
        return DomainVerdict(False, "lower", limits.lower)
    if obs.value > limits.upper:
        return DomainVerdict(False, "upper", limits.upper)
    return DomainVerdict(True)


# =============================================================================
# DAILY STATISTICS FROM HOURLY VALUES
# =============================================================================

LOCAL_HOUR_OF = {
    WeatherVariable.HUMIDITY_9AM: 9,
    WeatherVariable.HUMIDITY_3PM: 15,
}


def daily_statistic(hourly: np.ndarray, variable: WeatherVariable) -> Optional[float]:
    """
    The daily value a variable reports, from 24 local hourly values.

    Max for Tmax and WindGust, min for Tmin, the 09:00/15:00 value for
    humidity; daily rainfall is a total and has no hourly counterpart here.
    Returns None when the needed hours are missing.
    """
    hourly = np.asarray(hourly, dtype=float)
    if variable in LOCAL_HOUR_OF:
        value = hourly[LOCAL_HOUR_OF[variable]]
        return None if not np.isfinite(value) else float(value)
    finite = hourly[np.isfinite(hourly)]
    if finite.size == 0:
        return None
    if variable in (WeatherVariable.TMAX, WeatherVariable.WIND_GUST):
        return float(finite.max())
    if variable == WeatherVariable.TMIN:
        return float(finite.min())
    if variable == WeatherVariable.RAIN:
        return float(finite.sum())
    raise ValueError(f"No daily statistic for {variable}")
