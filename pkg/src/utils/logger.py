"""
Structured logging for IM-DCL.

Uses loguru for console output and an optional rotating file sink.
"""

import sys
from pathlib import Path
from typing import Optional, Union

from loguru import logger

from src.utils.config import get_settings


def setup_logger(
    level: Optional[str] = None,
    json_format: Optional[bool] = None,
    log_dir: Optional[Union[str, Path]] = None,
) -> None:
    """
    Configure the application logger.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL).
               Defaults to settings.log_level.
        json_format: If True, output console logs as JSON records.
                     Defaults to settings.log_json.
        log_dir: If given, also write a rotating log file in this directory.
    """
    settings = get_settings()
    log_level = (level or settings.log_level).upper()
    serialize = settings.log_json if json_format is None else json_format

    # Remove default handler
    logger.remove()

    if serialize:
        logger.add(sys.stderr, level=log_level, format="{message}", serialize=True)
    else:
        log_format = (
            "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
            "<level>{level: <8}</level> | "
            "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
            "<level>{message}</level>"
        )
        logger.add(sys.stderr, level=log_level, format=log_format, colorize=True)

    if log_dir is not None:
        logger.add(
            str(Path(log_dir) / "imdcl.log"),
            level=log_level,
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} | {message}",
            rotation="10 MB",
            retention="7 days",
            compression="zip",
        )


__all__ = ["logger", "setup_logger"]
