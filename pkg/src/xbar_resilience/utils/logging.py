# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors

from __future__ import annotations

import logging
import os

from ..config import get_settings

__all__ = ["get_logger", "get_file_logger", "level_from_name", "LOG_FORMAT"]

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def level_from_name(name: str) -> int:
    """Numeric level for ``name``; unknown names fall back to INFO."""
    level = logging.getLevelName(name.upper())
    return level if isinstance(level, int) else logging.INFO


def get_logger(name: str) -> logging.Logger:
    """
    Return a logger writing single-line records to stderr.

    The level is ``Settings.log_level``: ``XBAR_LOG_LEVEL`` if set, else the
    ``log_level`` key of ``xbar.toml`` / ``[tool.xbar]``, else INFO. Handlers
    are attached once, so repeated calls are cheap.
    """
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
        logger.setLevel(level_from_name(get_settings().log_level))
        logger.propagate = False
    return logger


def get_file_logger(name: str, file_path: str) -> logging.Logger:
    """Like :func:`get_logger`, plus a FileHandler appending to ``file_path``."""
    logger = get_logger(name)
    target = os.path.abspath(file_path)
    for h in logger.handlers:
        if isinstance(h, logging.FileHandler) and h.baseFilename == target:
            return logger
    fh = logging.FileHandler(target)
    fh.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(fh)
    return logger
