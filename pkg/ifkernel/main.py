"""
ifkernel - command-line entrypoint
Kernel smoothing, derivative and instantaneous-frequency estimation workflows
"""

import argparse
import sys
from typing import List, Optional

import structlog
from pydantic import ValidationError

from ifkernel.commands import benchmark, design_kernel, estimate_if, generate, multitone, smooth
from ifkernel.core.config import settings
from ifkernel.core.errors import ConfigError, IFKernelError
from ifkernel.core.logging import setup_logging

logger = structlog.get_logger(__name__)

COMMANDS = (design_kernel, generate, smooth, estimate_if, multitone, benchmark)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Kernel smoothing and instantaneous-frequency estimation on uniformly sampled records",
    )
    parser.add_argument("--log-level", default=None, help="override IFKERNEL_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def _config_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    field = ".".join(str(part) for part in first.get("loc", ())) or None
    return ConfigError(first.get("msg", str(exc)), field=field)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level or settings.LOG_LEVEL, settings.LOG_JSON)

    try:
        return args.handler(args)
    except ValidationError as exc:
        error = _config_error(exc)
        logger.error("invalid_configuration", command=args.command, field=error.field, detail=error.detail)
        return error.exit_code
    except IFKernelError as exc:
        logger.error("command_failed", command=args.command, error=type(exc).__name__, detail=exc.detail)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
