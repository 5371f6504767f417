# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Append-only JSON-lines record log.

Each line is ``{"timestamp", "kind", "record", "sha256"}`` where the hash
covers the other three fields serialized with sorted keys. Appends from
concurrent workers or processes are serialized through a ``<log>.lock`` file.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path
from typing import Any, Iterator

from filelock import FileLock

from .utils.logging import get_logger

__all__ = ["RecordLog", "entry_digest"]

_logger = get_logger("xbar.ledger")

_HASHED = ("timestamp", "kind", "record")


def entry_digest(entry: dict[str, Any]) -> str:
    ser = json.dumps({k: entry[k] for k in _HASHED}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(ser.encode()).hexdigest()


class RecordLog:
    def __init__(self, path: str | Path, kind: str = "sweep-record") -> None:
        self.path = Path(path)
        self.kind = kind
        self._lock = FileLock(str(self.path) + ".lock")

    def append(self, record: dict[str, Any]) -> dict[str, Any]:
        entry: dict[str, Any] = {"timestamp": int(time.time()), "kind": self.kind, "record": record}
        entry["sha256"] = entry_digest(entry)
        line = json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            with self.path.open("a+b") as fh:
                if fh.tell() > 0:
                    fh.seek(-1, 2)
                    if fh.read(1) != b"\n":
                        fh.write(b"\n")
                fh.write(line.encode("utf-8"))
        return entry

    def entries(self) -> Iterator[dict[str, Any]]:
        """Verified entries of this log's kind; damaged lines are logged and skipped."""
        if not self.path.exists():
            return
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    ok = entry.get("sha256") == entry_digest(entry)
                except (ValueError, KeyError, TypeError, AttributeError):
                    ok = False
                if not ok:
                    # a torn final line is expected after an interrupted run
                    _logger.warning("skipping damaged record path=%s line=%d", self.path, lineno)
                    continue
                if entry["kind"] == self.kind:
                    yield entry

    def records(self) -> list[dict[str, Any]]:
        return [e["record"] for e in self.entries()]
