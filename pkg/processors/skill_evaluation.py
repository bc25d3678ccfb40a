#!/usr/bin/env python3
"""
Skill Evaluation

Hit and false-alarm rates of the assessment against truth labels, per
test and merged, overall and by value band of the true observation; and
the end-to-end synthetic experiment (calibrate on the first half of the
years, contaminate and assess the second half).
"""

import math
import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd

from contracts import MisalignedError, TestKind
from processors.assessment import DEFAULT_CL_THRESHOLD, Assessment
from processors.core import DailySeries, WeatherVariable
from processors.interfaces import TestId
from processors.pipeline import AssessmentEngine, CalibrationRun, date_range
from processors.quality_tests import DEFAULT_TESTS, CalibrationSettings
from processors.synthetic_network import InjectionSpec, SyntheticConfig, inject_errors, synthesize_network

logger = logging.getLogger(__name__)

MERGED = "Merged"


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True)
class Band:
    """Value interval of the true observation"""
    name: str
    low: float
    high: float
    low_inclusive: bool = True
    high_inclusive: bool = True

    def contains(self, value: float) -> bool:
        above = value >= self.low if self.low_inclusive else value > self.low
        below = value <= self.high if self.high_inclusive else value < self.high
        return above and below


WIND_BANDS = [
    Band("<25", -math.inf, 25.0, low_inclusive=False, high_inclusive=False),
    Band("25-60", 25.0, 60.0),
    Band(">60", 60.0, math.inf, low_inclusive=False, high_inclusive=False),
]


def default_bands(variable: WeatherVariable) -> List[Band]:
    return list(WIND_BANDS) if variable == WeatherVariable.WIND_GUST else []


@dataclass(frozen=True)
class TruthLabel:
    station_id: str
    date: date
    contaminated: bool
    true_value: float

    @property
    def key(self) -> Tuple[str, date]:
        return self.station_id, self.date


@dataclass
class ConfusionCounts:
    """Flag outcomes; NA assessments are counted apart from the rates"""
    hits: int = 0
    misses: int = 0
    false_alarms: int = 0
    correct_negatives: int = 0
    na: int = 0

    def record(self, contaminated: bool, flagged: Optional[bool]) -> None:
        if flagged is None:
            self.na += 1
        elif contaminated:
            if flagged:
                self.hits += 1
            else:
                self.misses += 1
        elif flagged:
            self.false_alarms += 1
        else:
            self.correct_negatives += 1

    @property
    def contaminated(self) -> int:
        return self.hits + self.misses

    @property
    def clean(self) -> int:
        return self.false_alarms + self.correct_negatives

    @property
    def hit_rate(self) -> Optional[float]:
        return self.hits / self.contaminated if self.contaminated else None

    @property
    def false_alarm_rate(self) -> Optional[float]:
        return self.false_alarms / self.clean if self.clean else None

    def to_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)


@dataclass
class SkillStats:
    """Rates overall and per band; None stands for NA (empty denominator)"""
    counts: ConfusionCounts
    per_band_counts: Dict[str, ConfusionCounts] = field(default_factory=dict)

    @property
    def hit_rate(self) -> Optional[float]:
        return self.counts.hit_rate

    @property
    def false_alarm_rate(self) -> Optional[float]:
        return self.counts.false_alarm_rate

    @property
    def per_band(self) -> Dict[str, Tuple[Optional[float], Optional[float]]]:
        return {name: (c.hit_rate, c.false_alarm_rate) for name, c in self.per_band_counts.items()}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hit_rate": _na(self.hit_rate),
            "false_alarm_rate": _na(self.false_alarm_rate),
            "counts": self.counts.to_dict(),
            "per_band": {
                name: {
                    "hit_rate": _na(c.hit_rate),
                    "false_alarm_rate": _na(c.false_alarm_rate),
                    "counts": c.to_dict(),
                }
                for name, c in self.per_band_counts.items()
            },
        }


def _na(value: Optional[float]) -> Union[float, str]:
    return "NA" if value is None else value


# =============================================================================
# EVALUATION
# =============================================================================

FlagRule = Callable[[Assessment], Optional[bool]]


def merged_flag(cl_threshold: float) -> FlagRule:
    """Final CL below threshold or a domain Fail; None when the assessment is NA."""
    def rule(assessment: Assessment) -> Optional[bool]:
        if assessment.is_na:
            return None
        return assessment.flagged(cl_threshold)
    return rule


def single_test_flag(test_id: TestId, cl_threshold: float) -> FlagRule:
    """One test on its own: its CL below threshold or a domain Fail; None when it did not apply."""
    def rule(assessment: Assessment) -> Optional[bool]:
        if assessment.domain_verdict is not None and not assessment.domain_verdict.passed:
            return True
        result = assessment.results.get(test_id)
        if result is None or not result.applicable or result.cl is None:
            return None
        return result.cl < cl_threshold
    return rule


def evaluate(
    assessments: Sequence[Assessment],
    labels: Sequence[TruthLabel],
    cl_threshold: float = DEFAULT_CL_THRESHOLD,
    bands: Sequence[Band] = (),
    flag_rule: Optional[FlagRule] = None
) -> SkillStats:
    """
    Count hits and false alarms.

    Assessments and labels must cover exactly the same (station, date)
    keys. Bands partition by the true (pre-injection) value.

    Raises:
        MisalignedError: Keys differ, or a true value falls in no band
    """
    rule = flag_rule or merged_flag(cl_threshold)
    by_key = {label.key: label for label in labels}
    assessed = {(a.observation.station_id, a.observation.date): a for a in assessments}
    if len(by_key) != len(labels) or len(assessed) != len(assessments) or set(by_key) != set(assessed):
        missing = sorted(set(by_key) - set(assessed))[:5]
        extra = sorted(set(assessed) - set(by_key))[:5]
        raise MisalignedError(
            "Assessments and labels are not aligned by (station, date)",
            context={
                "labels": len(labels),
                "assessments": len(assessments),
                "unassessed": [f"{s} {d}" for s, d in missing],
                "unlabelled": [f"{s} {d}" for s, d in extra],
            }
        )

    stats = SkillStats(ConfusionCounts(), {band.name: ConfusionCounts() for band in bands})
    for key in sorted(by_key):
        label = by_key[key]
        flagged = rule(assessed[key])
        stats.counts.record(label.contaminated, flagged)
        if bands:
            band = next((b for b in bands if b.contains(label.true_value)), None)
            if band is None:
                raise MisalignedError(f"True value {label.true_value} of {key[0]} {key[1]} falls in no band")
            stats.per_band_counts[band.name].record(label.contaminated, flagged)
    return stats


# =============================================================================
# EXPERIMENT
# =============================================================================

def column_name(test_id: TestId) -> str:
    """Report column of a test: the product for gridded tests, e.g. ERA."""
    if test_id.kind == TestKind.GRIDDED:
        return test_id.product.value
    return test_id.kind.value


@dataclass
class ExperimentReport:
    """Skill per test column plus the merged column"""
    columns: Dict[str, SkillStats]
    cl_threshold: float
    config: SyntheticConfig
    injection: InjectionSpec
    n_assessments: int
    calibration_failures: List[Tuple[str, str, str]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cl_threshold": self.cl_threshold,
            "variable": self.config.variable.value,
            "seed": self.config.seed,
            "injection": self.injection.to_dict(),
            "n_assessments": self.n_assessments,
            "columns": {name: stats.to_dict() for name, stats in self.columns.items()},
            "calibration_failures": [list(f) for f in self.calibration_failures],
        }

    def format_table(self) -> str:
        return format_skill_table(self.columns, self.n_assessments)


def skill_columns(
    assessments: Sequence[Assessment],
    labels: Sequence[TruthLabel],
    test_ids: Iterable[TestId],
    cl_threshold: float = DEFAULT_CL_THRESHOLD,
    bands: Sequence[Band] = ()
) -> Dict[str, SkillStats]:
    """Skill of each test on its own, in test order, then the merged verdict."""
    columns: Dict[str, SkillStats] = {}
    for test_id in sorted(test_ids, key=lambda t: t.sort_key):
        columns[column_name(test_id)] = evaluate(
            assessments, labels, cl_threshold, bands, single_test_flag(test_id, cl_threshold)
        )
    columns[MERGED] = evaluate(assessments, labels, cl_threshold, bands)
    return columns


def format_skill_table(columns: Dict[str, SkillStats], n_assessments: int) -> str:
    """Hit / false-alarm rates (%) by band, one column per test plus Merged."""
    names = list(columns)
    band_names = ["All"] + list(next(iter(columns.values())).per_band_counts) if names else ["All"]
    header = f"{'':<24}" + "".join(f"{n:>10}" for n in names)
    lines = [header, "-" * len(header)]
    for label, attribute in (("Hit rate (%)", "hit_rate"), ("False alarm rate (%)", "false_alarm_rate")):
        for band in band_names:
            cells = []
            for name in names:
                stats = columns[name]
                counts = stats.counts if band == "All" else stats.per_band_counts[band]
                value = getattr(counts, attribute)
                cells.append(f"{'NA' if value is None else f'{100.0 * value:.1f}':>10}")
            lines.append(f"{label + ' ' + band:<24}" + "".join(cells))
    merged = columns.get(MERGED)
    if merged is not None:
        lines.append("")
        lines.append(f"NA assessments (merged): {merged.counts.na} of {n_assessments}")
    return "\n".join(lines)


def contaminate_evaluation_half(
    tpaws: Dict[str, DailySeries],
    split_date: date,
    injection: InjectionSpec
) -> Tuple[Dict[str, DailySeries], List[TruthLabel]]:
    """Inject errors from split_date on; earlier days stay clean."""
    contaminated: Dict[str, DailySeries] = {}
    labels: List[TruthLabel] = []
    for sid in sorted(tpaws):
        series = tpaws[sid]
        calibration = series.between(None, split_date - timedelta(days=1))
        evaluation = series.between(split_date, None)
        dirty, flags = inject_errors(evaluation, injection)
        combined = pd.concat([calibration.values, dirty.values])
        contaminated[sid] = DailySeries(sid, series.variable, combined)
        for ts, is_dirty in flags.items():
            labels.append(TruthLabel(sid, ts.date(), bool(is_dirty), float(evaluation.values.loc[ts])))
    return contaminated, labels


def run_experiment(
    config: Optional[SyntheticConfig] = None,
    injection: Optional[InjectionSpec] = None,
    cl_threshold: float = DEFAULT_CL_THRESHOLD,
    test_ids: Sequence[TestId] = DEFAULT_TESTS,
    settings: Optional[CalibrationSettings] = None,
    max_workers: int = 1,
    show_progress: bool = False
) -> ExperimentReport:
    """
    Synthesize, calibrate on the first half, contaminate and assess the
    second half, and score every test column plus the merged result.
    """
    config = config or SyntheticConfig()
    injection = injection or InjectionSpec.wind_gust_default()
    synthetic = synthesize_network(config)
    split = config.split_date
    last_day = config.dates[-1].date()
    logger.info(
        f"Experiment: {config.variable.value}, calibration {config.dates[0].date()}..{split - timedelta(days=1)}, "
        f"evaluation {split}..{last_day}, injection fraction {injection.fraction}"
    )

    contaminated, labels = contaminate_evaluation_half(synthetic.tpaws, split, injection)
    network = synthetic.to_network(contaminated)
    engine = AssessmentEngine(settings, test_ids, max_workers=max_workers, show_progress=show_progress)
    calibration: CalibrationRun = engine.calibrate(network, window=(None, split - timedelta(days=1)))
    assessments = engine.assess(network, calibration, date_range(split, last_day))

    columns = skill_columns(assessments, labels, engine.tests, cl_threshold, default_bands(config.variable))

    merged = columns[MERGED]
    logger.info(
        f"Experiment done: merged hit rate {_na(merged.hit_rate)}, false alarm rate {_na(merged.false_alarm_rate)}"
    )
    return ExperimentReport(
        columns=columns,
        cl_threshold=cl_threshold,
        config=config,
        injection=injection,
        n_assessments=len(assessments),
        calibration_failures=[(sid, str(tid), reason) for sid, tid, reason in calibration.failures],
    )
