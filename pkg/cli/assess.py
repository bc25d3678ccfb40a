#!/usr/bin/env python3
"""
CLI for Assessment

Assess one day's TPAWS observations with the stored models and write the
assessment report (canonical JSON).
"""

import sys
import argparse
import logging
from pathlib import Path

from cli.main import EXIT_OK, add_config_argument, iso_date, log_dir_for, output_dir_for, resolve_config
from processors.core import WeatherVariable
from processors.pipeline import AssessmentEngine, CalibrationRun
from utils.data_readers import load_network
from utils.environment_config import get_or_create_env_config
from utils.model_store import ModelStore
from utils.report_writer import build_assessment_report, generate_run_log, write_assessment_report
from utils.run_config import setup_logging

logger = logging.getLogger(__name__)

COMMAND = 'assess'
HELP = 'Assess TPAWS observations of one day and write the assessment report'


def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser)
    parser.add_argument('--date', type=iso_date, required=True, help='Day to assess (YYYY-MM-DD)')
    parser.add_argument('--station', action='append', help='Only this TPAWS station (repeatable)')
    parser.add_argument('--variable', type=WeatherVariable, help='Override the configured variable')
    parser.add_argument('--output', type=Path, help='Report path (default: <output_dir>/assessment_<variable>_<date>.json)')


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    run_name = f"assess_{config.variable.value}_{args.date}"
    run_logger = setup_logging(log_dir_for(config), run_name, getattr(args, 'verbose', False))

    network = load_network(config)
    station_ids = network.select_tpaws(args.station)

    engine = AssessmentEngine(config.to_settings(), config.enabled_tests, max_workers=config.max_workers)
    store = ModelStore(config.model_store or get_or_create_env_config().model_store)
    calibration = CalibrationRun()
    warnings = []
    for sid in station_ids:
        models, missing = store.load_station(sid, config.variable, list(engine.tests))
        calibration.models[sid] = models
        warnings.extend(f"{sid} {tid}: {reason}" for tid, reason in missing)

    assessments = engine.assess(network, calibration, [args.date], station_ids)
    report = build_assessment_report(assessments, config.cl_threshold, config.variable.value)
    output = args.output or output_dir_for(config) / f"assessment_{config.variable.value}_{args.date}.json"
    write_assessment_report(output, report)

    tests = {}
    for test_id in engine.tests:
        applied = sum(a.results.get(test_id) is not None and a.results[test_id].applicable for a in assessments)
        tests[str(test_id)] = {"applicable": applied, "not applicable": len(assessments) - applied}
    generate_run_log(output_dir_for(config), run_name, {
        "command": COMMAND,
        "variable": config.variable.value,
        "parameters": {"date": args.date, "cl_threshold": config.cl_threshold, "report": output},
        "stations": station_ids,
        "tests": tests,
        "issues": [
            f"{r['station_id']} {r['date']}: final CL {r['final_cl']}"
            for r in report["assessments"] if r["flagged"]
        ],
        "warnings": warnings,
        "status": "SUCCESS",
    })

    run_logger.info(f"Report written to {output}")
    print(f"Assessed {report['n_assessments']} observations: {report['n_flagged']} flagged, "
          f"{report['n_na']} NA -> {output}")
    return EXIT_OK


if __name__ == "__main__":
    from cli.main import main
    sys.exit(main([COMMAND] + sys.argv[1:]))
