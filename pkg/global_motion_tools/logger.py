"""
Logging for global-motion-tools.

All module loggers hang below the package logger "global_motion_tools", which
owns the handlers: a colored console handler on stderr and, when requested, a
plain file handler. Module loggers carry no handlers of their own and
propagate to it, so one call to setup_logging reconfigures the whole package.

    GMR_TOOLS_LOG_LEVEL   DEBUG, INFO, WARNING, ... (default INFO)
    GMR_TOOLS_LOG_FILE    also append log lines to this file
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional, Union

from colorama import Fore, Style

PACKAGE_LOGGER = "global_motion_tools"

DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

LOG_LEVEL_ENV_VAR = "GMR_TOOLS_LOG_LEVEL"
LOG_FILE_ENV_VAR = "GMR_TOOLS_LOG_FILE"

COLORS = {
    "DEBUG": Fore.CYAN,
    "INFO": Fore.GREEN,
    "WARNING": Fore.YELLOW,
    "ERROR": Fore.RED,
    "CRITICAL": Fore.MAGENTA,
}


class ColoredFormatter(logging.Formatter):
    """Colors the level name; the record itself is left untouched for other handlers."""

    def format(self, record: logging.LogRecord) -> str:
        record = logging.makeLogRecord(record.__dict__)
        if record.levelname in COLORS:
            record.levelname = f"{COLORS[record.levelname]}{record.levelname}{Style.RESET_ALL}"
        return super().format(record)


def level_from_env(default: int = logging.INFO) -> int:
    """The level named by GMR_TOOLS_LOG_LEVEL, or `default` if unset or unknown."""
    name = os.environ.get(LOG_LEVEL_ENV_VAR, "").strip().upper()
    level = logging.getLevelName(name) if name else default
    return level if isinstance(level, int) else default


def _package_logger() -> logging.Logger:
    package = logging.getLogger(PACKAGE_LOGGER)
    if not package.handlers:
        level = level_from_env()
        package.setLevel(level)
        console = logging.StreamHandler(sys.stderr)
        console.setFormatter(ColoredFormatter(DEFAULT_LOG_FORMAT))
        package.addHandler(console)
        package.propagate = False
        log_file = os.environ.get(LOG_FILE_ENV_VAR)
        if log_file:
            package.addHandler(_file_handler(log_file))
    return package


def _file_handler(path: Union[str, Path]) -> logging.FileHandler:
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter(DEFAULT_LOG_FORMAT))
    return handler


def get_logger(name: str, level: Optional[int] = None) -> logging.Logger:
    """
    Logger for a package module.

    Args:
        name: Typically __name__; names outside the package are nested under it
        level: Optional level for this logger alone (default: inherit the package level)

    Returns:
        A logger that reports through the package handlers
    """
    package = _package_logger()
    if name != PACKAGE_LOGGER and not name.startswith(PACKAGE_LOGGER + "."):
        name = f"{PACKAGE_LOGGER}.{name}"
    logger = package if name == PACKAGE_LOGGER else logging.getLogger(name)
    if level is not None:
        logger.setLevel(level)
    return logger


def setup_logging(level: Optional[int] = None, log_file: Optional[Union[str, Path]] = None) -> logging.Logger:
    """
    Reconfigure the package's logging.

    Args:
        level: New level (default: from the environment or INFO)
        log_file: Additionally write plain log lines to this file

    Returns:
        The package logger
    """
    package = _package_logger()
    package.setLevel(level_from_env() if level is None else level)
    if log_file is not None:
        target = os.path.abspath(log_file)
        # One handler per file across repeated calls
        if not any(
            isinstance(h, logging.FileHandler) and h.baseFilename == target for h in package.handlers
        ):
            package.addHandler(_file_handler(log_file))
    return package
