#!/usr/bin/env python3
"""
CLI for Skill Evaluation

Assess every labelled station-day with the stored models and report hit
and false-alarm rates per test and merged, overall and by value band.
"""

import sys
import argparse
import logging
from collections import defaultdict
from pathlib import Path

from cli.main import EXIT_OK, add_config_argument, log_dir_for, output_dir_for, resolve_config
from contracts import UsageError
from processors.core import WeatherVariable
from processors.pipeline import AssessmentEngine, CalibrationRun
from processors.skill_evaluation import default_bands, format_skill_table, skill_columns
from utils import canonical_json
from utils.data_readers import load_network, read_labels
from utils.environment_config import get_or_create_env_config
from utils.model_store import ModelStore
from utils.run_config import setup_logging

logger = logging.getLogger(__name__)

COMMAND = 'evaluate'
HELP = 'Hit and false-alarm rates of the assessment against truth labels'


def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser)
    parser.add_argument('--labels', type=Path, required=True, help='Truth labels file (from inject)')
    parser.add_argument('--threshold', type=float, help='CL threshold for flagging (default: config cl_threshold)')
    parser.add_argument('--variable', type=WeatherVariable, help='Override the configured variable')
    parser.add_argument('--output', type=Path, help='Skill JSON path (default: <output_dir>/skill_<variable>.json)')


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    threshold = config.cl_threshold if args.threshold is None else args.threshold
    if not 0.0 < threshold < 1.0:
        raise UsageError(f"--threshold must be in (0, 1): {threshold}")
    run_logger = setup_logging(log_dir_for(config), f"evaluate_{config.variable.value}",
                               getattr(args, 'verbose', False))

    labels = read_labels(args.labels)
    network = load_network(config)
    days_by_station = defaultdict(set)
    for label in labels:
        days_by_station[label.station_id].add(label.date)

    engine = AssessmentEngine(config.to_settings(), config.enabled_tests, max_workers=config.max_workers)
    store = ModelStore(config.model_store or get_or_create_env_config().model_store)
    calibration = CalibrationRun()
    for sid in sorted(days_by_station):
        calibration.models[sid], _ = store.load_station(sid, config.variable, list(engine.tests))

    assessments = []
    for sid in sorted(days_by_station):
        if sid not in network.tpaws:
            continue
        models = calibration.models[sid]
        for day in sorted(days_by_station[sid]):
            assessment = engine.assess_day(network, models, sid, day)
            if assessment is not None:
                assessments.append(assessment)

    columns = skill_columns(assessments, labels, engine.tests, threshold, default_bands(config.variable))
    result = {
        "cl_threshold": threshold,
        "variable": config.variable.value,
        "n_assessments": len(assessments),
        "columns": {name: stats.to_dict() for name, stats in columns.items()},
    }
    output = args.output or output_dir_for(config) / f"skill_{config.variable.value}.json"
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(canonical_json.dumps(result), encoding='utf-8')

    run_logger.info(f"Skill written to {output}")
    print(format_skill_table(columns, len(assessments)))
    return EXIT_OK


if __name__ == "__main__":
    from cli.main import main
    sys.exit(main([COMMAND] + sys.argv[1:]))
