"""Logging setup shared by the screamkit command-line tools."""

import logging
import os
from datetime import UTC, datetime

LOG_ENV_VAR = "SCREAMKIT_LOG"
LOG_FORMAT = "[%(asctime)s] %(message)s"
LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR"}


class UTCFormatter(logging.Formatter):
    """Custom logging formatter that displays timestamps in UTC."""

    def formatTime(self, record: logging.LogRecord, datefmt: str | None = None) -> str:
        """Format log timestamps in UTC timezone."""
        dt = datetime.fromtimestamp(record.created, UTC)
        return dt.strftime("%Y-%m-%d %H:%M:%S UTC")


def resolve_level(level: str | None = None) -> tuple[str, bool]:
    """Pick the log level from the argument, then SCREAMKIT_LOG, then INFO.

    Returns:
        Tuple of (level name, whether the requested name was recognised).
    """
    requested = level if level is not None else os.environ.get(LOG_ENV_VAR)
    if requested is None or not requested.strip():
        return "INFO", True
    name = requested.strip().upper()
    if name not in LOG_LEVELS:
        return "INFO", False
    return name, True


def configure_logging(level: str | None = None) -> logging.Logger:
    """Install a single UTC-stamped stream handler on the root logger."""
    name, recognised = resolve_level(level)
    logger = logging.getLogger()
    handler = logging.StreamHandler()
    handler.setFormatter(UTCFormatter(LOG_FORMAT))
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(name)
    if not recognised:
        logger.warning(
            f"Unknown log level in {LOG_ENV_VAR}; falling back to INFO."
        )
    return logger
