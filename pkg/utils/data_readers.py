#!/usr/bin/env python3
"""
Data Readers

Text formats for stations, daily and sub-daily observations, gridded
products and truth labels. Every reader rejects bad input rather than
coercing it: one ParseError lists every offending line with its number.

Daily and sub-daily files may declare their unit on a comment line
(`# unit: m/s`); values are converted to the variable's canonical unit.
"""

import io
import re
import math
import logging
from collections import defaultdict
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from contracts import ConfigError, GridProductKind, IncompatibleUnitsError, ParseError, StationSource
from processors.core import (
    DailySeries,
    StationMeta,
    SubdailySeries,
    WeatherVariable,
    convert_units,
    normalize_unit,
)
from processors.pipeline import NetworkData
from processors.skill_evaluation import TruthLabel
from utils.grid_products import GridProduct, NwpForecast, nwp_daily_value
from utils.run_config import RunConfig

logger = logging.getLogger(__name__)

STATION_COLUMNS = ["id", "lat", "lon", "elev_m", "source"]
DAILY_COLUMNS = ["station_id", "date", "value"]
SUBDAILY_COLUMNS = ["station_id", "timestamp", "value"]
LABEL_COLUMNS = ["station_id", "date", "contaminated", "true_value"]
ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
UNIT_LINE = re.compile(r"^#\s*unit\s*:\s*(.+?)\s*$", re.IGNORECASE)
NAN_TOKEN = "NaN"


# =============================================================================
# CSV PLUMBING
# =============================================================================

def _read_table(path: Path, columns: Sequence[str]) -> Tuple[pd.DataFrame, List[int], Optional[str]]:
    """
    Data rows as strings plus their 1-based file line numbers and the
    declared unit (if any).
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"File not found: {path}", context={"path": str(path)})
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()

    unit = None
    kept: List[str] = []
    numbers: List[int] = []
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            match = UNIT_LINE.match(stripped)
            if match:
                unit = match.group(1)
            continue
        kept.append(line)
        numbers.append(number)

    if not kept:
        raise ParseError(f"{path}: missing header", context={"path": str(path)})
    header = [c.strip() for c in kept[0].split(",")]
    if header != list(columns):
        raise ParseError(
            f"{path}: header must be {','.join(columns)}, got {','.join(header)}",
            context={"path": str(path), "line": numbers[0]}
        )
    try:
        frame = pd.read_csv(
            io.StringIO("\n".join(kept)),
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except pd.errors.ParserError as e:
        raise ParseError(f"{path}: {e}", context={"path": str(path)}) from e
    frame = frame.fillna("").apply(lambda col: col.str.strip())
    return frame, numbers[1:], unit


def _raise_bad_lines(path: Path, problems: List[Tuple[int, str]]) -> None:
    if problems:
        problems = sorted(problems)
        listing = "; ".join(f"line {n}: {reason}" for n, reason in problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        raise ParseError(
            f"{path}: {len(problems)} bad line(s): {listing}{more}",
            context={"path": str(path), "lines": [{"line": n, "reason": r} for n, r in problems]}
        )


def _finite_numbers(frame: pd.DataFrame, column: str, numbers: List[int], problems: List[Tuple[int, str]]) -> pd.Series:
    parsed = pd.to_numeric(frame[column].replace("", np.nan), errors="coerce")
    for i in np.flatnonzero(~np.isfinite(parsed.to_numpy(dtype=float))):
        raw = frame[column].iloc[i]
        problems.append((numbers[i], f"{column} {raw!r} is not a finite number" if raw else f"empty {column}"))
    return parsed


def _unit_factor(path: Path, unit: Optional[str], variable: WeatherVariable) -> float:
    if unit is None:
        return 1.0
    try:
        return convert_units(1.0, normalize_unit(unit), variable.canonical_unit)
    except IncompatibleUnitsError as e:
        raise ParseError(f"{path}: unit {unit!r} cannot be converted to {variable.canonical_unit}: {e.message}",
                         context={"path": str(path), "unit": unit}) from e


# =============================================================================
# STATIONS
# =============================================================================

def read_stations(path: Path) -> List[StationMeta]:
    """
    Read `id,lat,lon,elev_m,source`.

    Raises:
        ParseError: Listing every bad line (bad numbers, latitude or
            longitude out of range, unknown source, duplicate id)
    """
    frame, numbers, _ = _read_table(path, STATION_COLUMNS)
    problems: List[Tuple[int, str]] = []
    lat = _finite_numbers(frame, "lat", numbers, problems)
    lon = _finite_numbers(frame, "lon", numbers, problems)
    elev = _finite_numbers(frame, "elev_m", numbers, problems)
    sources = {s.value.lower(): s for s in StationSource}

    stations: List[StationMeta] = []
    first_seen: Dict[str, int] = {}
    for i, row in enumerate(frame.itertuples(index=False)):
        number = numbers[i]
        if not row.id:
            problems.append((number, "empty id"))
            continue
        if row.id in first_seen:
            problems.append((number, f"duplicate station id {row.id!r} (first on line {first_seen[row.id]})"))
            continue
        first_seen[row.id] = number
        source = sources.get(row.source.lower())
        if source is None:
            problems.append((number, f"unknown source {row.source!r}"))
            continue
        if not (math.isfinite(lat.iloc[i]) and math.isfinite(lon.iloc[i]) and math.isfinite(elev.iloc[i])):
            continue
        try:
            stations.append(StationMeta(row.id, float(lat.iloc[i]), float(lon.iloc[i]), float(elev.iloc[i]), source))
        except ValueError as e:
            problems.append((number, str(e)))

    _raise_bad_lines(path, problems)
    logger.info(f"Read {len(stations)} stations from {path}")
    return stations


# =============================================================================
# DAILY OBSERVATIONS
# =============================================================================

def read_daily(path: Path, variable: WeatherVariable) -> Dict[str, DailySeries]:
    """
    Read `station_id,date,value` into one series per station.

    Missing days are simply absent. Values are converted from the declared
    unit to the canonical unit of the variable.

    Raises:
        ParseError: Bad dates (not YYYY-MM-DD), empty or non-finite values,
            duplicate (station, date), or an unconvertible unit
    """
    variable = WeatherVariable(variable)
    frame, numbers, unit = _read_table(path, DAILY_COLUMNS)
    factor = _unit_factor(path, unit, variable)
    problems: List[Tuple[int, str]] = []

    values = _finite_numbers(frame, "value", numbers, problems)
    well_formed = frame["date"].str.fullmatch(ISO_DATE)
    dates = pd.to_datetime(frame["date"].where(well_formed), format="%Y-%m-%d", errors="coerce")
    for i in np.flatnonzero(dates.isna().to_numpy()):
        problems.append((numbers[i], f"date {frame['date'].iloc[i]!r} is not YYYY-MM-DD"))
    for i in np.flatnonzero((frame["station_id"] == "").to_numpy()):
        problems.append((numbers[i], "empty station_id"))

    seen: Dict[Tuple[str, pd.Timestamp], int] = {}
    for i, (sid, day) in enumerate(zip(frame["station_id"], dates)):
        if pd.isna(day) or not sid:
            continue
        if (sid, day) in seen:
            problems.append((numbers[i], f"duplicate ({sid}, {day.date()}) (first on line {seen[(sid, day)]})"))
        else:
            seen[(sid, day)] = numbers[i]

    _raise_bad_lines(path, problems)

    table = pd.DataFrame({"station_id": frame["station_id"], "date": dates, "value": values * factor})
    result = {
        sid: DailySeries(sid, variable, group.set_index("date")["value"])
        for sid, group in table.groupby("station_id", sort=True)
    }
    if unit is not None:
        logger.info(f"{path}: converted {unit} to {variable.canonical_unit} (x{factor:g})")
    logger.info(f"Read {len(table)} daily {variable.value} values for {len(result)} stations from {path}")
    return result


def write_daily(series: Dict[str, DailySeries], path: Path, unit: Optional[str] = None) -> Path:
    """Write series as `station_id,date,value` with %.17g values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if unit is not None:
        lines.append(f"# unit: {unit}")
    lines.append(",".join(DAILY_COLUMNS))
    for sid in sorted(series):
        for ts, value in series[sid].values.items():
            lines.append(f"{sid},{ts.date().isoformat()},{value:.17g}")
    with open(path, 'w', encoding='utf-8') as f:
        f.write("\n".join(lines) + "\n")
    return path


# =============================================================================
# SUB-DAILY OBSERVATIONS
# =============================================================================

def read_subdaily(path: Path, variable: WeatherVariable) -> Dict[str, List[SubdailySeries]]:
    """
    Read `station_id,timestamp,value` with ISO-8601 timestamps carrying
    a UTC offset. Each reading belongs to the local day of its own
    timestamp; a station's readings must be strictly increasing in time.

    Raises:
        ParseError: Naive or malformed timestamps, non-monotone timestamps,
            bad values
    """
    variable = WeatherVariable(variable)
    frame, numbers, unit = _read_table(path, SUBDAILY_COLUMNS)
    factor = _unit_factor(path, unit, variable)
    problems: List[Tuple[int, str]] = []
    values = _finite_numbers(frame, "value", numbers, problems)

    readings: Dict[Tuple[str, date], List[Tuple[datetime, float]]] = defaultdict(list)
    last_seen: Dict[str, Tuple[datetime, int]] = {}
    for i, (sid, raw) in enumerate(zip(frame["station_id"], frame["timestamp"])):
        number = numbers[i]
        try:
            ts = datetime.fromisoformat(raw)
        except ValueError:
            problems.append((number, f"timestamp {raw!r} is not ISO-8601"))
            continue
        if ts.tzinfo is None or ts.utcoffset() is None:
            problems.append((number, f"timestamp {raw!r} has no UTC offset"))
            continue
        previous = last_seen.get(sid)
        if previous is not None and not ts > previous[0]:
            problems.append((number, f"timestamp {raw} not after line {previous[1]} for {sid}"))
            continue
        last_seen[sid] = (ts, number)
        if math.isfinite(values.iloc[i]):
            readings[(sid, ts.date())].append((ts, float(values.iloc[i]) * factor))

    _raise_bad_lines(path, problems)

    result: Dict[str, List[SubdailySeries]] = defaultdict(list)
    for (sid, day) in sorted(readings):
        pairs = readings[(sid, day)]
        result[sid].append(SubdailySeries(sid, day, variable, [t for t, _ in pairs], [v for _, v in pairs]))
    logger.info(f"Read sub-daily {variable.value} for {len(result)} stations from {path}")
    return dict(result)


# =============================================================================
# GRIDDED PRODUCTS
# =============================================================================

GRID_HEADER_KEYS = ["product", "variable", "origin_lat", "origin_lon", "cell_size", "nrows", "ncols", "dates"]


def read_grid(path: Path) -> GridProduct:
    """
    Read a gridded product.

    Format: `key = value` header lines (product, variable, origin_lat,
    origin_lon, cell_size, nrows, ncols, dates as a comma list, optional
    unit), then a `values:` line followed by whitespace-separated values,
    row-major per date, with NaN for missing cells.

    Raises:
        ParseError: Missing keys, out-of-order dates, wrong value count
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"File not found: {path}", context={"path": str(path)})
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()

    header: Dict[str, str] = {}
    body: List[str] = []
    in_values = False
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if in_values:
            body.extend(stripped.split())
            continue
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.lower() == "values:":
            in_values = True
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ParseError(f"{path}: line {number}: expected key = value", context={"line": number})
        header[key.strip().lower()] = value.strip()

    missing = [k for k in GRID_HEADER_KEYS if k not in header]
    if missing or not in_values:
        raise ParseError(f"{path}: missing {', '.join(missing) or 'values section'}", context={"path": str(path)})

    try:
        product = GridProductKind(header["product"])
        variable = WeatherVariable(header["variable"])
        origin_lat = float(header["origin_lat"])
        origin_lon = float(header["origin_lon"])
        cell_size = float(header["cell_size"])
        nrows = int(header["nrows"])
        ncols = int(header["ncols"])
        dates = [date.fromisoformat(d.strip()) for d in header["dates"].split(",") if d.strip()]
    except ValueError as e:
        raise ParseError(f"{path}: bad header value: {e}", context={"path": str(path)}) from e

    if any(later <= earlier for earlier, later in zip(dates, dates[1:])):
        raise ParseError(f"{path}: dates must be strictly increasing", context={"path": str(path)})
    expected = len(dates) * nrows * ncols
    if len(body) != expected:
        raise ParseError(
            f"{path}: {len(body)} values, expected nrows*ncols*ndates = {expected}",
            context={"path": str(path), "found": len(body), "expected": expected}
        )
    try:
        values = np.array([math.nan if token == NAN_TOKEN else float(token) for token in body], dtype=float)
    except ValueError as e:
        raise ParseError(f"{path}: bad value: {e}", context={"path": str(path)}) from e
    if np.any(np.isinf(values)):
        raise ParseError(f"{path}: infinite values are not allowed", context={"path": str(path)})

    factor = _unit_factor(path, header.get("unit"), variable)
    return GridProduct(
        product=product,
        variable=variable,
        origin_lat=origin_lat,
        origin_lon=origin_lon,
        cell_size=cell_size,
        nrows=nrows,
        ncols=ncols,
        dates=dates,
        values=values.reshape(len(dates), nrows, ncols) * factor,
    )


def write_grid(grid: GridProduct, path: Path) -> Path:
    """Write a grid in the format read_grid accepts; values round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"product = {grid.product.value}",
        f"variable = {grid.variable.value}",
        f"origin_lat = {grid.origin_lat:.17g}",
        f"origin_lon = {grid.origin_lon:.17g}",
        f"cell_size = {grid.cell_size:.17g}",
        f"nrows = {grid.nrows}",
        f"ncols = {grid.ncols}",
        f"dates = {','.join(d.isoformat() for d in grid.dates)}",
        "values:",
    ]
    for field_values in grid.values:
        for row in field_values:
            lines.append(" ".join(NAN_TOKEN if not np.isfinite(v) else f"{v:.17g}" for v in row))
    with open(path, 'w', encoding='utf-8') as f:
        f.write("\n".join(lines) + "\n")
    return path


# =============================================================================
# TRUTH LABELS
# =============================================================================

def write_labels(labels: Iterable[TruthLabel], path: Path) -> Path:
    """Write TruthLabel records as `station_id,date,contaminated,true_value`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(LABEL_COLUMNS)]
    for label in sorted(labels, key=lambda lb: lb.key):
        lines.append(f"{label.station_id},{label.date.isoformat()},{int(label.contaminated)},{label.true_value:.17g}")
    with open(path, 'w', encoding='utf-8') as f:
        f.write("\n".join(lines) + "\n")
    return path


def read_labels(path: Path) -> List[TruthLabel]:
    """Read truth labels written by write_labels."""
    frame, numbers, _ = _read_table(path, LABEL_COLUMNS)
    problems: List[Tuple[int, str]] = []
    true_values = _finite_numbers(frame, "true_value", numbers, problems)
    labels = []
    for i, row in enumerate(frame.itertuples(index=False)):
        if row.contaminated not in ("0", "1"):
            problems.append((numbers[i], f"contaminated must be 0 or 1, got {row.contaminated!r}"))
            continue
        if not ISO_DATE.match(row.date):
            problems.append((numbers[i], f"date {row.date!r} is not YYYY-MM-DD"))
            continue
        if math.isfinite(true_values.iloc[i]):
            labels.append(TruthLabel(row.station_id, date.fromisoformat(row.date), row.contaminated == "1",
                                     float(true_values.iloc[i])))
    _raise_bad_lines(path, problems)
    return labels


# =============================================================================
# NWP SITE FORECASTS
# =============================================================================

NWP_COLUMNS = ["station_id", "issued", "valid", "value"]


def read_nwp_forecasts(path: Path, variable: WeatherVariable) -> Dict[str, List[NwpForecast]]:
    """
    Read `station_id,issued,valid,value` site forecasts; both times are
    ISO-8601 with an offset and are stored in UTC.

    Raises:
        ParseError: Naive or malformed times, valid time before issue time
    """
    variable = WeatherVariable(variable)
    frame, numbers, unit = _read_table(path, NWP_COLUMNS)
    factor = _unit_factor(path, unit, variable)
    problems: List[Tuple[int, str]] = []
    values = _finite_numbers(frame, "value", numbers, problems)

    grouped: Dict[Tuple[str, datetime], List[Tuple[datetime, float]]] = defaultdict(list)
    for i, row in enumerate(frame.itertuples(index=False)):
        try:
            issued = datetime.fromisoformat(row.issued)
            valid = datetime.fromisoformat(row.valid)
        except ValueError:
            problems.append((numbers[i], "issued/valid is not ISO-8601"))
            continue
        if issued.tzinfo is None or valid.tzinfo is None:
            problems.append((numbers[i], "issued/valid has no UTC offset"))
            continue
        if valid < issued:
            problems.append((numbers[i], "valid time before issue time"))
            continue
        if math.isfinite(values.iloc[i]):
            grouped[(row.station_id, issued.astimezone(timezone.utc))].append(
                (valid.astimezone(timezone.utc), float(values.iloc[i]) * factor)
            )
    _raise_bad_lines(path, problems)

    result: Dict[str, List[NwpForecast]] = defaultdict(list)
    for (sid, issued) in sorted(grouped):
        pairs = sorted(grouped[(sid, issued)])
        result[sid].append(NwpForecast(issued, [t for t, _ in pairs], [v for _, v in pairs]))
    return dict(result)


def nwp_site_series(
    station_id: str,
    forecasts: Sequence[NwpForecast],
    variable: WeatherVariable,
    utc_offset_hours: float
) -> DailySeries:
    """Daily NWP values at a site for every local day an issuance covers."""
    days = set()
    for forecast in forecasts:
        for valid in forecast.valid_times:
            days.add((valid + timedelta(hours=utc_offset_hours)).date())
    pairs = []
    for day in sorted(days):
        value = nwp_daily_value(forecasts, day, variable, utc_offset_hours)
        if value is not None:
            pairs.append((day, value))
    return DailySeries.from_pairs(station_id, variable, pairs)


# =============================================================================
# NETWORK
# =============================================================================

PARTNER_VARIABLE = {
    WeatherVariable.TMAX: WeatherVariable.TMIN,
    WeatherVariable.TMIN: WeatherVariable.TMAX,
}


def load_network(config: RunConfig) -> NetworkData:
    """
    Read every input a RunConfig names into NetworkData.

    Raises:
        ParseError: Any malformed input file
        ConfigError: A TPAWS series for a station missing from the station list
    """
    variable = config.variable
    stations = read_stations(config.stations)
    known = {s.id for s in stations}
    official = read_daily(config.official_daily, variable)
    tpaws = read_daily(config.tpaws_daily, variable)
    unknown = sorted((set(official) | set(tpaws)) - known)
    if unknown:
        raise ConfigError(f"Series for stations not in {config.stations}: {', '.join(unknown[:10])}",
                          context={"unknown": unknown})

    grids: Dict[GridProductKind, GridProduct] = {}
    for product, grid_path in sorted(config.grid.items(), key=lambda item: item[0].value):
        grid = read_grid(grid_path)
        if grid.product != product or grid.variable != variable:
            raise ConfigError(
                f"{grid_path} holds {grid.product.value} {grid.variable.value}, "
                f"expected {product.value} {variable.value}",
                context={"path": str(grid_path)}
            )
        grids[product] = grid

    site_products: Dict[str, Dict[GridProductKind, DailySeries]] = {}
    if config.nwp_forecasts is not None:
        for sid, forecasts in read_nwp_forecasts(config.nwp_forecasts, variable).items():
            site_products[sid] = {
                GridProductKind.NWP: nwp_site_series(sid, forecasts, variable, config.offset_for(sid))
            }

    partner: Dict[str, DailySeries] = {}
    if config.partner_daily is not None and variable in PARTNER_VARIABLE:
        partner = read_daily(config.partner_daily, PARTNER_VARIABLE[variable])

    return NetworkData(
        variable=variable,
        stations=stations,
        official=official,
        tpaws=tpaws,
        grids=grids,
        tpaws_subdaily=read_subdaily(config.tpaws_subdaily, variable) if config.tpaws_subdaily else {},
        grid_subdaily=read_subdaily(config.grid_subdaily, variable) if config.grid_subdaily else {},
        partner_temperature=partner,
        site_products=site_products,
    )
