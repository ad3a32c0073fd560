"""
Logging configuration for magm.

Library modules log through ``logging.getLogger(__name__)`` and stay silent
until an entry point calls :func:`setup_logging`, which routes stdlib records
into loguru sinks.
"""

import sys
import logging
from typing import Optional

from loguru import logger

from magm.config.settings import get_config

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"
LOG_FILE = "magm.log"


class InterceptHandler(logging.Handler):
    """Forward stdlib logging records to loguru."""

    def emit(self, record):
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        # Skip logging-module frames so loguru reports the real caller
        frame, depth = logging.currentframe(), 2
        while frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def setup_logging(level: Optional[str] = None, log_to_file: bool = True):
    """
    Configure loguru sinks and intercept stdlib logging.

    Args:
        level: Console log level, defaults to the configured ``log_level``.
        log_to_file: Also write a rotating DEBUG log under ``logs_dir``.

    Returns:
        The configured loguru logger.
    """
    config = get_config()
    logger.remove()
    logger.add(sys.stderr, level=(level or config.log_level).upper(), format=CONSOLE_FORMAT)

    if log_to_file:
        config.logs_dir.mkdir(parents=True, exist_ok=True)
        logger.add(config.logs_dir / LOG_FILE, rotation="10 MB", retention="1 week", level="DEBUG", format=FILE_FORMAT)

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)

    return logger
