#!/usr/bin/env python3
"""
CLI for Report Rendering

Render an assessment report as an aligned text traceback (contributing
tests lowest CL first, then exclusions) or as canonical JSON.
"""

import sys
import argparse
from pathlib import Path

from cli.main import EXIT_OK
from utils.report_writer import REPORT_FORMATS, load_assessment_report, render_report

COMMAND = 'report'
HELP = 'Render an assessment report with traceback'


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--assessment', type=Path, required=True, help='Assessment report JSON')
    parser.add_argument('--format', choices=REPORT_FORMATS, default='text', help='Output format (default: text)')
    parser.add_argument('--station', help='Only this station')


def run(args: argparse.Namespace) -> int:
    report = load_assessment_report(args.assessment)
    if args.station:
        records = [r for r in report["assessments"] if r["station_id"] == args.station]
        report = dict(report, assessments=records, n_assessments=len(records),
                      n_flagged=sum(r["flagged"] for r in records),
                      n_na=sum(r["final_cl"] == "NA" for r in records))
    sys.stdout.write(render_report(report, args.format))
    if args.format == "text":
        sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    from cli.main import main
    sys.exit(main([COMMAND] + sys.argv[1:]))
