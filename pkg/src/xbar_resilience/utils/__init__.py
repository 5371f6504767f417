# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT

from __future__ import annotations

from .logging import get_file_logger, get_logger

__all__: list[str] = ["get_logger", "get_file_logger"]
