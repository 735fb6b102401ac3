"""
Structured Logging Setup

Configures structlog once per process. Output goes to stderr so that
artifacts and reports written to stdout stay machine readable.
"""

import logging
import sys
from typing import Optional

import structlog

from src.config.settings import Settings, settings


def configure_logging(config: Optional[Settings] = None) -> None:
    """
    Configure structlog processors and renderer.

    Args:
        config: Settings to read log_level and log_format from (default: global settings)
    """
    config = config or settings
    level = logging.getLevelName(config.log_level.upper())
    if not isinstance(level, int):
        level = logging.INFO

    if config.log_format == "json":
        renderer: structlog.typing.Processor = structlog.processors.JSONRenderer()
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        # resolve sys.stderr per logger so redirected streams are honoured
        logger_factory=lambda *args: structlog.PrintLogger(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
