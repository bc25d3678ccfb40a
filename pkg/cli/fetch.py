#!/usr/bin/env python3
"""
CLI for Fetching Inputs

Collect the year-split CSV files of one or more sources for a date window,
from a local directory tree or an HTTP mirror, and merge each source into
a single reader input:

    <out>/<source>.csv

Point the run configuration (official_daily, tpaws_daily, ...) at the
merged files. Mirror downloads are cached under <out>/cache unless
--cache is given.
"""

import sys
import argparse
import logging
from pathlib import Path

from cli.main import EXIT_OK, iso_date
from contracts import UsageError
from utils.data_adapters import DataSourceAdapter, HttpMirrorAdapter, LocalDirectoryAdapter, merge_csv_files
from utils.run_config import setup_logging

logger = logging.getLogger(__name__)

COMMAND = 'fetch'
HELP = 'Fetch and merge input files from a local tree or an HTTP mirror'


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--source', action='append', required=True,
                        help='Source name, e.g. official_daily (repeatable)')
    parser.add_argument('--from', dest='start', type=iso_date, required=True, help='First day of the window')
    parser.add_argument('--to', dest='end', type=iso_date, required=True, help='Last day of the window')
    origin = parser.add_mutually_exclusive_group(required=True)
    origin.add_argument('--root', type=Path, help='Local directory holding <source>/ folders')
    origin.add_argument('--mirror', help='Mirror base URL serving <source>/<YYYY>.csv')
    parser.add_argument('--cache', type=Path, help='Download cache (default: <out>/cache)')
    parser.add_argument('--out', type=Path, required=True, help='Output directory')


def build_adapter(args: argparse.Namespace) -> DataSourceAdapter:
    if args.root is not None:
        return LocalDirectoryAdapter(args.root, suffixes=(".csv",))
    return HttpMirrorAdapter(args.mirror, args.cache or args.out / "cache", extension="csv")


def run(args: argparse.Namespace) -> int:
    if args.end < args.start:
        raise UsageError(f"--to {args.end} is before --from {args.start}")
    setup_logging(None, COMMAND, getattr(args, 'verbose', False))

    adapter = build_adapter(args)
    window = (args.start, args.end)
    for source in dict.fromkeys(args.source):
        files = adapter.fetch(source, window)
        merged = merge_csv_files(files, args.out / f"{source}.csv")
        logger.info(f"{source}: merged {len(files)} file(s)")
        print(f"{source}: {merged}")
    return EXIT_OK


if __name__ == "__main__":
    from cli.main import main
    sys.exit(main([COMMAND] + sys.argv[1:]))
