#!/usr/bin/env python3
"""
Assessment Pipeline

Runs the full quality assessment over a network held in memory:
- Calibrates every enabled test for every TPAWS station
- For each station-day: domain test, applicability, each test's run,
  pre-assessment, fusion
- Station jobs run on a thread pool with a progress bar; results are
  reduced in (station id, date) order
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import date, timedelta
from functools import cached_property
from threading import Lock
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from contracts import (
    GridProductKind,
    NotApplicableError,
    OutOfBoundsError,
    QualityControlError,
    TestKind,
    UsageError,
)
from processors.assessment import (
    ApplicabilityContext,
    DEFAULT_CL_THRESHOLD,
    Assessment,
    applicability,
    assess_observation,
)
from processors.core import (
    DailyContext,
    DailySeries,
    StationMeta,
    SubdailySeries,
    WeatherVariable,
    domain_test,
)
from processors.interfaces import CalibrationInputs, DayInputs, QualityTestInterface, TestId, TestResult
from processors.quality_tests import DEFAULT_TESTS, CalibrationSettings, build_tests
from processors.quality_tests.subdaily import coverage
from utils.grid_products import GridProduct, grid_series_at

logger = logging.getLogger(__name__)

Window = Tuple[Optional[date], Optional[date]]


@dataclass
class NetworkData:
    """
    Everything known about one variable across the network.

    official / tpaws map station id to daily series; grids hold the
    gridded products; site_products holds per-station product series
    (NWP site forecasts) that take precedence over grid extraction;
    partner_temperature carries the other temperature
    of each station so the domain test can couple Tmax and Tmin.
    """
    variable: WeatherVariable
    stations: List[StationMeta]
    official: Dict[str, DailySeries] = field(default_factory=dict)
    tpaws: Dict[str, DailySeries] = field(default_factory=dict)
    grids: Dict[GridProductKind, GridProduct] = field(default_factory=dict)
    tpaws_subdaily: Dict[str, List[SubdailySeries]] = field(default_factory=dict)
    grid_subdaily: Dict[str, List[SubdailySeries]] = field(default_factory=dict)
    partner_temperature: Dict[str, DailySeries] = field(default_factory=dict)
    site_products: Dict[str, Dict[GridProductKind, DailySeries]] = field(default_factory=dict)
    _grid_cache: Dict[str, Dict[GridProductKind, DailySeries]] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self._by_id = {s.id: s for s in self.stations}

    def station(self, station_id: str) -> StationMeta:
        return self._by_id[station_id]

    @property
    def official_stations(self) -> List[StationMeta]:
        return [s for s in self.stations if s.is_official]

    @property
    def tpaws_ids(self) -> List[str]:
        return sorted(sid for sid in self.tpaws if sid in self._by_id)

    def select_tpaws(self, station_ids: Optional[Iterable[str]] = None) -> List[str]:
        """
        Sorted TPAWS station ids to process (all of them when None).

        Raises:
            UsageError: A requested id has no TPAWS observations
        """
        if not station_ids:
            return self.tpaws_ids
        ids = sorted(set(station_ids))
        unknown = [sid for sid in ids if sid not in self.tpaws or sid not in self._by_id]
        if unknown:
            raise UsageError(
                f"No TPAWS observations for station(s): {', '.join(unknown)}",
                context={"unknown": unknown}
            )
        return ids

    @cached_property
    def official_frame(self) -> pd.DataFrame:
        """Official values, one column per station, one row per reported day."""
        if not self.official:
            return pd.DataFrame()
        return pd.DataFrame({sid: series.values for sid, series in sorted(self.official.items())})

    def grid_series(self, station_id: str) -> Dict[GridProductKind, DailySeries]:
        """Grid products extracted at a station; products not covering the site are skipped."""
        cache = self._grid_cache
        if station_id not in cache:
            meta = self.station(station_id)
            extracted = dict(self.site_products.get(station_id, {}))
            for product, grid in sorted(self.grids.items(), key=lambda item: item[0].value):
                if product in extracted:
                    continue
                try:
                    extracted[product] = grid_series_at(grid, station_id, meta.latitude, meta.longitude)
                except OutOfBoundsError as e:
                    logger.warning(f"{station_id}: {e.message}")
            cache[station_id] = extracted
        return cache[station_id]

    def official_on(self, day: date) -> Dict[str, float]:
        frame = self.official_frame
        key = pd.Timestamp(day)
        if frame.empty or key not in frame.index:
            return {}
        return {sid: float(v) for sid, v in frame.loc[key].dropna().items()}

    def subdaily_on(self, station_id: str, day: date, grid: bool = False) -> Optional[SubdailySeries]:
        source = self.grid_subdaily if grid else self.tpaws_subdaily
        for series in source.get(station_id, []):
            if series.date == day:
                return series
        return None

    def calibration_inputs(self, station_id: str, window: Window = (None, None)) -> CalibrationInputs:
        start, end = window

        def within(series: SubdailySeries) -> bool:
            return (start is None or series.date >= start) and (end is None or series.date <= end)

        return CalibrationInputs(
            target=self.station(station_id),
            target_series=self.tpaws[station_id].between(start, end),
            official_stations=self.official_stations,
            official_series={sid: s.between(start, end) for sid, s in self.official.items()},
            grid_series={p: s.between(start, end) for p, s in self.grid_series(station_id).items()},
            subdaily_history=[s for s in self.tpaws_subdaily.get(station_id, []) if within(s)],
            grid_subdaily_history=[s for s in self.grid_subdaily.get(station_id, []) if within(s)],
        )

    def day_inputs(self, station_id: str, day: date) -> DayInputs:
        target = self.tpaws[station_id]
        yesterday = day - timedelta(days=1)
        grid_today = {}
        for product, series in self.grid_series(station_id).items():
            value = series.value_on(day)
            if value is not None:
                grid_today[product] = value
        return DayInputs(
            day=day,
            official_today=self.official_on(day),
            official_yesterday=self.official_on(yesterday),
            target_yesterday=target.value_on(yesterday),
            target_two_days_ago=target.value_on(day - timedelta(days=2)),
            grid_today=grid_today,
            subdaily_day=self.subdaily_on(station_id, day),
            grid_subdaily_day=self.subdaily_on(station_id, day, grid=True),
        )

    def daily_context(self, station_id: str, day: date) -> DailyContext:
        partner = self.partner_temperature.get(station_id)
        partner_value = partner.value_on(day) if partner is not None else None
        return DailyContext(
            elevation=self.station(station_id).elevation,
            same_day_tmin=partner_value if self.variable == WeatherVariable.TMAX else None,
            same_day_tmax=partner_value if self.variable == WeatherVariable.TMIN else None,
        )


@dataclass
class CalibrationRun:
    """Calibrated models per station plus the (station, test) failures"""
    models: Dict[str, Dict[TestId, Any]] = field(default_factory=dict)
    failures: List[Tuple[str, TestId, str]] = field(default_factory=list)

    def calibrated_count(self) -> int:
        return sum(len(m) for m in self.models.values())


class AssessmentEngine:
    """
    Calibrates and runs the enabled tests over a network.

    Features:
    - Per (station, test) error collection during calibration
    - Applicability decided before any test runs
    - Deterministic output order regardless of worker count
    """

    def __init__(
        self,
        settings: Optional[CalibrationSettings] = None,
        test_ids: Sequence[TestId] = DEFAULT_TESTS,
        max_workers: int = 1,
        show_progress: bool = False
    ):
        self.settings = settings or CalibrationSettings()
        self.tests: Dict[TestId, QualityTestInterface] = build_tests(test_ids, self.settings)
        self.max_workers = max(1, int(max_workers))
        self.show_progress = show_progress
        self._state_lock = Lock()

    # =========================================================================
    # CALIBRATION
    # =========================================================================

    def calibrate_station(
        self,
        network: NetworkData,
        station_id: str,
        window: Window = (None, None)
    ) -> Tuple[Dict[TestId, Any], List[Tuple[str, TestId, str]]]:
        inputs = network.calibration_inputs(station_id, window)
        models: Dict[TestId, Any] = {}
        failures: List[Tuple[str, TestId, str]] = []
        for test_id, test in self.tests.items():
            if test_id.kind == TestKind.GRIDDED and test_id.product not in inputs.grid_series:
                failures.append((station_id, test_id, "no grid series at the site"))
                continue
            try:
                models[test_id] = test.calibrate(inputs)
            except QualityControlError as e:
                logger.warning(f"{station_id}: {test_id} not calibrated ({e.error_code}: {e.message})")
                failures.append((station_id, test_id, f"{e.error_code}: {e.message}"))
        return models, failures

    def calibrate(
        self,
        network: NetworkData,
        window: Window = (None, None),
        station_ids: Optional[Iterable[str]] = None
    ) -> CalibrationRun:
        """Calibrate every enabled test for every TPAWS station."""
        ids = network.select_tpaws(station_ids)
        logger.info(f"Calibrating {len(self.tests)} tests for {len(ids)} stations, window {window}")
        run = CalibrationRun()
        results: Dict[str, Tuple[Dict[TestId, Any], List]] = {}

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_station = {
                executor.submit(self.calibrate_station, network, sid, window): sid for sid in ids
            }
            for future in tqdm(
                as_completed(future_to_station),
                total=len(future_to_station),
                desc="Calibrating stations",
                disable=not self.show_progress
            ):
                sid = future_to_station[future]
                with self._state_lock:
                    results[sid] = future.result()

        for sid in ids:
            models, failures = results[sid]
            run.models[sid] = models
            run.failures.extend(failures)
        logger.info(f"Calibrated {run.calibrated_count()} models, {len(run.failures)} failures")
        return run

    # =========================================================================
    # ASSESSMENT
    # =========================================================================

    def _applicability_context(
        self,
        network: NetworkData,
        models: Dict[TestId, Any],
        day_inputs: DayInputs
    ) -> ApplicabilityContext:
        ctx = ApplicabilityContext(
            variable=network.variable,
            calibrated_days={tid: int(getattr(model, "n_days", 0)) for tid, model in models.items()},
            target_yesterday_present=day_inputs.target_yesterday is not None,
            grid_values_present={p: True for p in day_inputs.grid_today},
            subdaily_slots_covered=coverage(day_inputs.subdaily_day, day_inputs.grid_subdaily_day),
        )
        spatial = models.get(TestId(TestKind.SPATIAL))
        if spatial is not None:
            ctx.neighbors_reporting = sum(n in day_inputs.official_today for n in spatial.neighbor_ids)
        trend = models.get(TestId(TestKind.TREND))
        if trend is not None:
            ctx.neighbor_deltas_available = sum(
                n in day_inputs.official_today and n in day_inputs.official_yesterday for n in trend.neighbor_ids
            )
        st = models.get(TestId(TestKind.SPATIOTEMPORAL))
        if st is not None:
            ctx.st_inputs_present = (
                day_inputs.target_yesterday is not None
                and day_inputs.target_two_days_ago is not None
                and all(s in day_inputs.official_today and s in day_inputs.official_yesterday
                        for s in st.similar_ids)
            )
        return ctx

    def assess_day(
        self,
        network: NetworkData,
        models: Dict[TestId, Any],
        station_id: str,
        day: date
    ) -> Optional[Assessment]:
        """Assess one station-day; None when the station did not report."""
        obs = network.tpaws[station_id].observation(day)
        if obs is None:
            return None
        verdict = domain_test(obs, network.daily_context(station_id, day))
        day_inputs = network.day_inputs(station_id, day)
        decisions = applicability(
            self._applicability_context(network, models, day_inputs),
            self.settings.min_calibration_days,
            self.settings.min_subdaily_slots,
        )

        results: List[TestResult] = []
        for test_id, test in self.tests.items():
            ok, reason = decisions.get(test_id, (False, "not enabled"))
            if not ok or not verdict.passed:
                results.append(TestResult.not_applicable(test_id, reason if not ok else "domain"))
                continue
            try:
                results.append(test.run(models[test_id], obs, day_inputs))
            except NotApplicableError as e:
                results.append(TestResult.not_applicable(test_id, e.message))
        return assess_observation(obs, verdict, results)

    def assess_station(
        self,
        network: NetworkData,
        models: Dict[TestId, Any],
        station_id: str,
        days: Sequence[date]
    ) -> List[Assessment]:
        assessments = []
        for day in days:
            assessment = self.assess_day(network, models, station_id, day)
            if assessment is not None:
                assessments.append(assessment)
        return assessments

    def assess(
        self,
        network: NetworkData,
        calibration: CalibrationRun,
        days: Sequence[date],
        station_ids: Optional[Iterable[str]] = None
    ) -> List[Assessment]:
        """Assess every reported station-day, ordered by (station id, date)."""
        ids = network.select_tpaws(station_ids)
        days = sorted(days)
        logger.info(f"Assessing {len(ids)} stations over {len(days)} days")
        per_station: Dict[str, List[Assessment]] = {}

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_station = {
                executor.submit(self.assess_station, network, calibration.models.get(sid, {}), sid, days): sid
                for sid in ids
            }
            for future in tqdm(
                as_completed(future_to_station),
                total=len(future_to_station),
                desc="Assessing stations",
                disable=not self.show_progress
            ):
                sid = future_to_station[future]
                with self._state_lock:
                    per_station[sid] = future.result()

        assessments = [a for sid in ids for a in per_station[sid]]
        flagged = sum(a.flagged(DEFAULT_CL_THRESHOLD) for a in assessments)
        logger.info(f"Assessed {len(assessments)} observations, {flagged} below CL {DEFAULT_CL_THRESHOLD}")
        return assessments


def date_range(start: date, end: date) -> List[date]:
    return [d.date() for d in pd.date_range(start, end, freq="D")]
