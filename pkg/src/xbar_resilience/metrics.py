# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors

from __future__ import annotations

from contextlib import contextmanager
from functools import wraps
from typing import Any, Callable, Iterator, cast

from prometheus_client import CollectorRegistry, Counter, Histogram, generate_latest, start_http_server

__all__ = ["metrics", "Metrics"]


class Metrics:
    def __init__(self, registry: CollectorRegistry | None = None) -> None:
        self.registry = registry or CollectorRegistry()
        self.images_inferred_total: Counter = Counter(
            "xbar_images_inferred_total",
            "Images pushed through simulated crossbar inference",
            registry=self.registry,
        )
        self.sweep_points_total: Counter = Counter(
            "xbar_sweep_points_total",
            "Sweep grid points by outcome",
            ["status"],
            registry=self.registry,
        )
        self.train_epochs_total: Counter = Counter(
            "xbar_train_epochs_total",
            "Completed training epochs",
            registry=self.registry,
        )
        self.command_duration_seconds: Histogram = Histogram(
            "xbar_command_duration_seconds",
            "CLI command duration in seconds",
            ["name"],
            buckets=[0.1, 1, 10, 60, 600, 3600],
            registry=self.registry,
        )
        self.infer_duration_seconds: Histogram = Histogram(
            "xbar_infer_duration_seconds",
            "Wall time of one infer() call",
            registry=self.registry,
        )

    @contextmanager
    def time_inference(self) -> Iterator[None]:
        with self.infer_duration_seconds.time():
            yield

    def record_cli(self, name: str) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
        """Decorator to time CLI command execution."""

        def decorator(func: Callable[..., Any]) -> Callable[..., Any]:
            @wraps(func)
            def wrapper(*args: Any, **kwargs: Any) -> Any:
                with self.command_duration_seconds.labels(name).time():
                    return func(*args, **kwargs)

            return wrapper

        return decorator

    def serve(self, port: int) -> None:
        start_http_server(port, registry=self.registry)

    def export(self) -> bytes:
        return cast(bytes, generate_latest(self.registry))


metrics = Metrics()
