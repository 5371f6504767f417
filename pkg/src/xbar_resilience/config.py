# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Process-wide settings.

Values come from a ``[tool.xbar]`` table in ``pyproject.toml`` (or a bare
``xbar.toml``) in the working directory, overridden by ``XBAR_*`` environment
variables.
"""

from __future__ import annotations

import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any

__all__ = ["Settings", "get_settings", "available_cpus"]


def available_cpus() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - not on linux
        return os.cpu_count() or 1


def _load_table(cwd: Path) -> dict[str, Any]:
    """Read ``[tool.xbar]`` from pyproject.toml, or the top level of xbar.toml."""
    for name, path in (("xbar.toml", ()), ("pyproject.toml", ("tool", "xbar"))):
        candidate = cwd / name
        if not candidate.is_file():
            continue
        try:
            data: Any = tomllib.loads(candidate.read_text())
        except (OSError, tomllib.TOMLDecodeError):
            continue
        for key in path:
            data = data.get(key, {}) if isinstance(data, dict) else {}
        if isinstance(data, dict) and data:
            return data
    return {}


@dataclass(frozen=True)
class Settings:
    data_root: Path
    log_level: str = "INFO"
    jobs: int = 1
    progress: bool = True

    @classmethod
    def load(cls, cwd: Path | None = None, env: dict[str, str] | None = None) -> Settings:
        env = dict(os.environ) if env is None else env
        table = _load_table(cwd or Path.cwd())

        def pick(key: str, env_key: str, default: Any) -> Any:
            if env_key in env and env[env_key] != "":
                return env[env_key]
            return table.get(key, default)

        try:
            jobs = int(pick("jobs", "XBAR_JOBS", available_cpus()))
        except (TypeError, ValueError):
            jobs = available_cpus()
        return cls(
            data_root=Path(pick("data_root", "XBAR_DATA_ROOT", "data")),
            log_level=str(pick("log_level", "XBAR_LOG_LEVEL", "INFO")).upper(),
            jobs=max(1, jobs),
            progress=env.get("XBAR_NO_PROGRESS", "") != "1" and bool(table.get("progress", True)),
        )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings.load()
