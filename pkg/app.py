#!/usr/bin/env python3
"""
Command-line front end for saddletail: large-deviation rates, tail
approximations against exact and simulated references, and golden-file
comparison of emitted results.

Usage:
    python app.py tail --config runs/exponential.json --out results/tail.csv
    python app.py rate --config runs/bernoulli.json --rate.c "[0.1, 0.5]"
    python app.py compare --candidate new.json --baseline golden.json
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from config.settings import LOG_LEVEL, TOOL_VERSION
from src.cli.commands import default_output_path, render_table, run_command
from src.cli.config_loader import (
    COMMANDS, load_config, parse_overrides, resolved_overrides
)
from src.utilities.errors import (
    ConfigError, ReportIOError, SaddletailError
)
from src.utilities.report_store import (
    compare_golden, read_report, write_manifest
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def report_error(error: SaddletailError, **extra) -> None:
    """Machine-readable error object on the diagnostic stream"""
    print(json.dumps({**error.to_dict(), **extra}), file=sys.stderr)


def use_color() -> bool:
    return sys.stdout.isatty() and "NO_COLOR" not in os.environ


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

HELP = {
    "rate": "rate exponent alpha, saddle root h, lambda and b0 on a c grid",
    "tail": "tail approximations against exact / simulated references",
    "simulate": "Monte Carlo and importance-sampling runs over seeds",
    "series": "series coefficients c0, c1 and lambda on a z grid",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saddletail",
        description=__doc__.split("\n\n")[0],
        allow_abbrev=False,
        epilog="Any --dotted.key VALUE pair overrides that key of the "
               "config document; VALUE is parsed as JSON when possible.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {TOOL_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    for name in COMMANDS:
        sub = commands.add_parser(name, help=HELP[name], allow_abbrev=False)
        sub.add_argument("--config", required=True, metavar="PATH",
                         help="JSON run configuration")
        sub.add_argument("--out", metavar="PATH",
                         help="output file (default: config output.path or "
                              "the results directory)")
        sub.add_argument("--format", choices=("csv", "json"),
                         help="output format (default: from the extension)")
        sub.add_argument("--seed", type=int, metavar="N",
                         help="run seed (default 0)")
        sub.add_argument("--threads", type=int, metavar="N",
                         help="simulation worker threads")

    compare = commands.add_parser("compare", allow_abbrev=False,
                                  help="diff a result file against a golden "
                                       "baseline")
    compare.add_argument("--candidate", required=True, metavar="PATH")
    compare.add_argument("--baseline", required=True, metavar="PATH")
    compare.add_argument("--tolerance", type=float, default=1e-9,
                         metavar="X",
                         help="relative tolerance for deterministic rows")
    return parser


# ============================================================================
# COMMANDS
# ============================================================================

def run_compute(args: argparse.Namespace, extra: List[str]) -> int:
    overrides = parse_overrides(extra)
    overrides.update(resolved_overrides(args.seed, args.threads, args.out,
                                        args.format))
    config = load_config(args.config, args.command, overrides)

    logger.info(f"Running {args.command} for {config.spec.label}")
    manifest = run_command(config)
    path = write_manifest(manifest, default_output_path(config),
                          config.output_format)

    print(render_table(manifest, color=use_color()))
    print(f"\nwrote {path}")

    failed = [(i, row) for i, row in enumerate(manifest.rows) if row.failed]
    for index, row in failed:
        code, _, message = row.error_note.partition(": ")
        print(json.dumps({"error": code, "message": message, "row": index,
                          "method": row.method}), file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def run_compare(args: argparse.Namespace, extra: List[str]) -> int:
    if extra:
        raise ConfigError(f"unexpected arguments {extra}")
    candidate = read_report(args.candidate)
    try:
        baseline = Path(args.baseline).read_bytes()
    except OSError as e:
        raise ReportIOError(e.strerror or str(e), args.baseline)

    report = compare_golden(candidate, baseline, args.tolerance)
    print(report.to_frame().to_string(index=False))
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAILED


# ============================================================================
# MAIN ENTRY POINT
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=LOG_LEVEL,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args, extra = build_parser().parse_known_args(argv)

    try:
        if args.command == "compare":
            return run_compare(args, extra)
        return run_compute(args, extra)
    except ConfigError as e:
        report_error(e)
        return EXIT_CONFIG
    except ReportIOError as e:
        report_error(e, path=e.path)
        return EXIT_IO
    except SaddletailError as e:
        logger.error(f"{args.command} failed: {e}")
        report_error(e)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())
