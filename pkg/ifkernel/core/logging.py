"""Structured logging setup"""

import logging
import sys

import structlog


def setup_logging(level: str = "INFO", json_output: bool = True) -> None:
    """Configure structured JSON logging on stderr"""
    log_level = getattr(logging, level.upper(), logging.INFO)

    logging.basicConfig(stream=sys.stderr, level=log_level, format="%(message)s", force=True)

    renderer = structlog.processors.JSONRenderer() if json_output else structlog.dev.ConsoleRenderer()
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(log_level),
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=False,
    )

    # Suppress noisy libraries
    logging.getLogger("joblib").setLevel(logging.WARNING)
    logging.getLogger("numexpr").setLevel(logging.WARNING)
