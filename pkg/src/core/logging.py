"""
Logging Configuration

Centralized logging setup for the simulation engine and its CLI. Records
carry the label of the run being processed, so log lines can be matched
to the artifacts that share its config hash.
"""

import logging
import sys
from contextlib import contextmanager
from typing import Iterator, Optional

CONSOLE_FORMAT = "%(asctime)s | %(levelname)s | %(run)s | %(name)s | %(message)s"
FILE_FORMAT = "%(asctime)s | %(levelname)s | %(run)s | %(name)s | %(funcName)s:%(lineno)d | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# chatty below WARNING and irrelevant to a run
QUIET_LOGGERS = ("asyncio",)


class ColoredFormatter(logging.Formatter):
    """Custom formatter with colors for console output."""

    COLORS = {
        "DEBUG": "\033[36m",     # Cyan
        "INFO": "\033[32m",      # Green
        "WARNING": "\033[33m",   # Yellow
        "ERROR": "\033[31m",     # Red
        "CRITICAL": "\033[35m",  # Magenta
    }
    RESET = "\033[0m"

    def format(self, record: logging.LogRecord) -> str:
        color = self.COLORS.get(record.levelname, self.RESET)
        colored = logging.makeLogRecord(record.__dict__)
        colored.levelname = f"{color}{record.levelname}{self.RESET}"
        return super().format(colored)


class RunContextFilter(logging.Filter):
    """Stamps every record with the active run label ("-" outside a run)."""

    def __init__(self):
        super().__init__()
        self.run = "-"

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "run"):
            record.run = self.run
        return True


_run_context = RunContextFilter()


def bind_run(name: str, config_hash: Optional[str] = None) -> None:
    """Label subsequent records with a run name and the short config hash."""
    _run_context.run = name if config_hash is None else f"{name}@{config_hash[:8]}"


def clear_run() -> None:
    _run_context.run = "-"


def current_run() -> str:
    return _run_context.run


@contextmanager
def run_context(name: str, config_hash: Optional[str] = None) -> Iterator[str]:
    """Bind a run label for the duration of the block, then restore the previous one."""
    previous = _run_context.run
    bind_run(name, config_hash)
    try:
        yield _run_context.run
    finally:
        _run_context.run = previous


def setup_logging(
    level: str = "INFO",
    log_file: Optional[str] = None
) -> None:
    """
    Set up logging configuration.

    Console output goes to stderr so that run summaries printed on stdout
    stay machine-readable. Colors are used only on a terminal.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file path for log output
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.DEBUG)
    formatter_cls = ColoredFormatter if sys.stderr.isatty() else logging.Formatter
    console_handler.setFormatter(formatter_cls(CONSOLE_FORMAT, datefmt=DATE_FORMAT))
    console_handler.addFilter(_run_context)
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
        file_handler.addFilter(_run_context)
        root_logger.addHandler(file_handler)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance with the given name.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Configured logger instance
    """
    return logging.getLogger(name)
