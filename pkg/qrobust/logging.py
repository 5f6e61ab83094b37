"""Logging for qrobust runs.

The console handler follows ``--verbose``; the optional run log file records
generation progress at INFO regardless of how quiet the console is.
"""

from __future__ import annotations

import logging
import sys

LOGGER_NAME = "qrobust"
LOG_FORMAT = "%(asctime)s [%(levelname)-7s] %(name)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def get_logger(name: str | None = None) -> logging.Logger:
    """Logger under the ``qrobust`` namespace (``get_logger(__name__)`` in modules)."""
    if name is None:
        return logging.getLogger(LOGGER_NAME)
    if not name.startswith(LOGGER_NAME):
        name = f"{LOGGER_NAME}.{name}"
    return logging.getLogger(name)


def _console_handler(logger: logging.Logger) -> logging.StreamHandler | None:
    for handler in logger.handlers:
        if type(handler) is logging.StreamHandler:
            return handler
    return None


def _file_handler(logger: logging.Logger) -> logging.FileHandler | None:
    for handler in logger.handlers:
        if isinstance(handler, logging.FileHandler):
            return handler
    return None


def setup_logging(
    level: int | None = None,
    log_file: str | None = None,
    file_level: int = logging.INFO,
) -> None:
    """Configure the console handler and, with ``log_file``, a run log.

    ``level`` applies to the console only; ``None`` keeps the current console
    level (WARNING on first use). Calling again never duplicates handlers.
    """
    logger = logging.getLogger(LOGGER_NAME)
    fmt = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console = _console_handler(logger)
    if console is None:
        console = logging.StreamHandler(sys.stderr)
        console.setFormatter(fmt)
        console.setLevel(logging.WARNING if level is None else level)
        logger.addHandler(console)
    elif level is not None:
        console.setLevel(level)

    if log_file:
        handler = _file_handler(logger)
        if handler is None:
            handler = logging.FileHandler(log_file, encoding="utf-8")
            handler.setFormatter(fmt)
            logger.addHandler(handler)
        handler.setLevel(file_level)

    logger.setLevel(min(h.level for h in logger.handlers))
