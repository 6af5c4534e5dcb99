"""structlog setup shared by the library, the CLI and the validation run."""

import logging
import sys

import structlog

from radiotrack.config import config

_configured = False


def configure_logging(level: str | None = None, json: bool | None = None) -> None:
    """Configure structlog once per process. Later calls only change the level."""
    global _configured
    level_name = (level or config.log.level).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        numeric = logging.INFO

    use_json = config.log.json if json is None else json
    renderer = (
        structlog.processors.JSONRenderer()
        if use_json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=not _configured,
    )
    _configured = True
