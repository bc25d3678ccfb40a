#!/usr/bin/env python3
"""
Gridded Official Products

A GridProduct holds daily fields on a regular latitude/longitude lattice.
Cell (0, 0) is centred on (origin_lat, origin_lon); row index grows
northward and column index eastward. Site values are bilinear
interpolations of the four surrounding cell centres.
"""

import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import List, Optional, Sequence, Tuple

import numpy as np

from contracts import GridProductKind, OutOfBoundsError
from processors.core import DailySeries, WeatherVariable, daily_statistic

logger = logging.getLogger(__name__)

NWP_ISSUANCE_HOURS = (0, 6, 12, 18)


@dataclass
class GridProduct:
    """Daily fields of one product and variable"""
    product: GridProductKind
    variable: WeatherVariable
    origin_lat: float
    origin_lon: float
    cell_size: float
    nrows: int
    ncols: int
    dates: List[date]
    values: np.ndarray  # (ndates, nrows, ncols), NaN for missing cells

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (len(self.dates), self.nrows, self.ncols)
        if self.values.shape != expected:
            raise ValueError(f"Grid values have shape {self.values.shape}, expected {expected}")
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive: {self.cell_size}")
        if any(later <= earlier for earlier, later in zip(self.dates, self.dates[1:])):
            raise ValueError("Grid dates must be strictly increasing")
        self._date_index = {d: i for i, d in enumerate(self.dates)}

    @property
    def bounding_box(self) -> Tuple[float, float, float, float]:
        """(lat_min, lat_max, lon_min, lon_max) of the cell edges."""
        half = self.cell_size / 2.0
        return (
            self.origin_lat - half,
            self.origin_lat + (self.nrows - 1) * self.cell_size + half,
            self.origin_lon - half,
            self.origin_lon + (self.ncols - 1) * self.cell_size + half,
        )

    def contains(self, lat: float, lon: float) -> bool:
        lat_min, lat_max, lon_min, lon_max = self.bounding_box
        return lat_min <= lat <= lat_max and lon_min <= lon <= lon_max

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return self.origin_lat + row * self.cell_size, self.origin_lon + col * self.cell_size

    def date_position(self, day: date) -> Optional[int]:
        return self._date_index.get(day)


def _fractional_position(grid: GridProduct, lat: float, lon: float) -> Tuple[float, float]:
    if not grid.contains(lat, lon):
        raise OutOfBoundsError(
            f"Site ({lat}, {lon}) lies outside the {grid.product.value} grid",
            context={"lat": lat, "lon": lon, "bounding_box": list(grid.bounding_box)}
        )
    row = (lat - grid.origin_lat) / grid.cell_size
    col = (lon - grid.origin_lon) / grid.cell_size
    # half-cell margin at the edges uses the edge cells
    return min(max(row, 0.0), grid.nrows - 1.0), min(max(col, 0.0), grid.ncols - 1.0)


def bilinear(field_values: np.ndarray, row: float, col: float) -> Optional[float]:
    """Bilinear interpolation at a fractional (row, col); None if a used corner is missing."""
    nrows, ncols = field_values.shape
    r0 = min(int(np.floor(row)), max(nrows - 2, 0))
    c0 = min(int(np.floor(col)), max(ncols - 2, 0))
    r1 = min(r0 + 1, nrows - 1)
    c1 = min(c0 + 1, ncols - 1)
    dr = row - r0
    dc = col - c0

    corners = (
        ((1 - dr) * (1 - dc), field_values[r0, c0]),
        ((1 - dr) * dc, field_values[r0, c1]),
        (dr * (1 - dc), field_values[r1, c0]),
        (dr * dc, field_values[r1, c1]),
    )
    total = 0.0
    for weight, value in corners:
        if weight == 0.0:
            continue
        if not np.isfinite(value):
            return None
        total += weight * value
    return float(total)


def extract_grid_value(grid: GridProduct, lat: float, lon: float, day: date) -> Optional[float]:
    """
    Value of a grid at a site on one day.

    Returns:
        The interpolated value, exactly the cell value at a cell centre;
        None when the date is absent or a needed cell is missing

    Raises:
        OutOfBoundsError: Site outside the grid's bounding box
    """
    row, col = _fractional_position(grid, lat, lon)
    position = grid.date_position(day)
    if position is None:
        return None
    return bilinear(grid.values[position], row, col)


def grid_series_at(grid: GridProduct, station_id: str, lat: float, lon: float) -> DailySeries:
    """Daily series of a grid extracted at a site (missing days dropped)."""
    row, col = _fractional_position(grid, lat, lon)
    pairs = []
    for position, day in enumerate(grid.dates):
        value = bilinear(grid.values[position], row, col)
        if value is not None:
            pairs.append((day, value))
    return DailySeries.from_pairs(station_id, grid.variable, pairs)


# =============================================================================
# NWP FORECAST SELECTION
# =============================================================================

@dataclass
class NwpForecast:
    """Hourly site forecasts from one NWP issuance"""
    issued: datetime  # UTC
    valid_times: List[datetime] = field(default_factory=list)  # UTC
    values: List[float] = field(default_factory=list)


def local_day_bounds(day: date, utc_offset_hours: float) -> Tuple[datetime, datetime]:
    """UTC start and end of a local calendar day (fixed offset, no DST)."""
    start_local = datetime(day.year, day.month, day.day, tzinfo=timezone(timedelta(hours=utc_offset_hours)))
    start = start_local.astimezone(timezone.utc)
    return start, start + timedelta(days=1)


def select_issuance(forecasts: Sequence[NwpForecast], day: date, utc_offset_hours: float) -> Optional[NwpForecast]:
    """Most recent issuance at or before the local day's start whose lead times cover the whole day."""
    start, end = local_day_bounds(day, utc_offset_hours)
    best = None
    for forecast in forecasts:
        if forecast.issued.hour not in NWP_ISSUANCE_HOURS or forecast.issued > start:
            continue
        if not forecast.valid_times or min(forecast.valid_times) > start or max(forecast.valid_times) < end - timedelta(hours=1):
            continue
        if best is None or forecast.issued > best.issued:
            best = forecast
    return best


def nwp_daily_value(
    forecasts: Sequence[NwpForecast],
    day: date,
    variable: WeatherVariable,
    utc_offset_hours: float = 0.0
) -> Optional[float]:
    """
    Daily statistic of the variable from the selected issuance's hourly
    forecasts over the local day.
    """
    forecast = select_issuance(forecasts, day, utc_offset_hours)
    if forecast is None:
        return None
    start, end = local_day_bounds(day, utc_offset_hours)
    hourly = np.full(24, np.nan)
    for valid, value in zip(forecast.valid_times, forecast.values):
        if start <= valid < end:
            hourly[int((valid - start).total_seconds() // 3600)] = value
    return daily_statistic(hourly, variable)
