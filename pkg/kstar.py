"""Command-line entry point: ``python kstar.py <subcommand> ...``."""
import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from commands import data, learning, robot
from helpers.errors import KStarError, UsageError
from helpers.logs import configure_logging

logger = logging.getLogger("kstar")

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kstar", description="Keyframe diffusion policies for bimanual arms.")
    parser.add_argument(
        "--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper
    )
    subparsers = parser.add_subparsers(dest="command", metavar="<subcommand>")
    subparsers.required = True
    robot.register(subparsers)
    data.register(subparsers)
    learning.register(subparsers)
    return parser


def _report(error: KStarError) -> None:
    sys.stderr.write(json.dumps(error.as_dict()) + "\n")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except UsageError as e:
        _report(e)
        return EXIT_USAGE
    except KStarError as e:
        logger.debug("command %s failed", args.command, exc_info=True)
        _report(e)
        return EXIT_DOMAIN_ERROR
    except ValidationError as e:
        _report(KStarError(str(e.errors(include_url=False)[0]["msg"])))
        return EXIT_DOMAIN_ERROR


if __name__ == "__main__":
    sys.exit(main())
