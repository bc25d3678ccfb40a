#!/usr/bin/env python3
"""
CLI for Error Injection

Contaminate the configured TPAWS daily observations with synthetic
additive errors. Writes the contaminated series and the truth labels:

    <out>/tpaws_daily.csv
    <out>/labels.csv

The injection spec is a `key = value` file with fraction, magnitude_low,
magnitude_high, sign (Positive|Negative|Both) and seed; magnitudes are in
the variable's canonical unit.
"""

import sys
import argparse
import logging
from datetime import timedelta
from pathlib import Path
from typing import Dict, List

from cli.main import EXIT_OK, add_config_argument, iso_date, resolve_config
from contracts import ConfigError
from processors.core import DailySeries, WeatherVariable
from processors.skill_evaluation import TruthLabel
from processors.synthetic_network import InjectionSpec, inject_errors
from utils.data_readers import read_daily, write_daily, write_labels
from utils.run_config import parse_key_values

logger = logging.getLogger(__name__)

COMMAND = 'inject'
HELP = 'Inject synthetic errors into TPAWS observations and write truth labels'


def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser)
    parser.add_argument('--spec', type=Path, required=True, help='Injection spec file')
    parser.add_argument('--out', type=Path, required=True, help='Output directory')
    parser.add_argument('--from', dest='start', type=iso_date, help='Only contaminate from this day on')
    parser.add_argument('--variable', type=WeatherVariable, help='Override the configured variable')


def load_injection_spec(path: Path) -> InjectionSpec:
    """
    Raises:
        ConfigError: Missing file, missing keys or invalid values
    """
    if not path.exists():
        raise ConfigError(f"Injection spec not found: {path}", context={"path": str(path)})
    raw = parse_key_values(path.read_text(encoding='utf-8'), str(path))
    unknown = sorted(set(raw) - {"fraction", "magnitude_low", "magnitude_high", "sign", "seed"})
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}", context={"path": str(path)})
    try:
        return InjectionSpec.from_dict(raw)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"{path}: invalid injection spec: {e}", context={"path": str(path)}) from e


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    spec = load_injection_spec(args.spec)
    tpaws = read_daily(config.tpaws_daily, config.variable)

    contaminated: Dict[str, DailySeries] = {}
    labels: List[TruthLabel] = []
    n_dirty = 0
    for sid in sorted(tpaws):
        series = tpaws[sid]
        if args.start is not None:
            clean_part = series.between(None, args.start - timedelta(days=1))
            target = series.between(args.start, None)
        else:
            clean_part, target = None, series
        dirty, flags = inject_errors(target, spec)
        values = dirty.values if clean_part is None else clean_part.values.combine_first(dirty.values)
        contaminated[sid] = DailySeries(sid, config.variable, values)
        for ts, is_dirty in flags.items():
            labels.append(TruthLabel(sid, ts.date(), bool(is_dirty), float(target.values.loc[ts])))
        n_dirty += int(flags.sum())

    args.out.mkdir(parents=True, exist_ok=True)
    daily_path = write_daily(contaminated, args.out / "tpaws_daily.csv")
    labels_path = write_labels(labels, args.out / "labels.csv")
    logger.info(f"Injected {n_dirty} errors into {len(labels)} observations")
    print(f"Contaminated {n_dirty} of {len(labels)} observations -> {daily_path}, {labels_path}")
    return EXIT_OK


if __name__ == "__main__":
    from cli.main import main
    sys.exit(main([COMMAND] + sys.argv[1:]))
