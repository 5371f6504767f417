# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Minibatch training with optional neuron-noise regularization."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from typing import Any

import numpy as np
from tqdm import tqdm

from .archspec import ArchKind, ArchSpec
from .bundle import WeightBundle, load_bundle, save_bundle
from .data import DataSet
from .errors import TrainConfigError, TrainingDivergedError
from .metrics import metrics
from .nn.model import ModelState, backward, init_model, predict
from .rng import generator
from .utils.logging import get_logger

__all__ = [
    "Adam",
    "DEFAULT_SIGMA_NEU",
    "Optimizer",
    "SGDMomentum",
    "TrainConfig",
    "WeightBundle",
    "accuracy_from_logits",
    "evaluate",
    "load_bundle",
    "make_optimizer",
    "save_bundle",
    "train",
]

log = get_logger("xbar.train")

DEFAULT_SIGMA_NEU = 0.05
RNN_GRAD_CLIP = 5.0


class Optimizer(str, Enum):
    SGD_MOMENTUM = "sgd-momentum"
    ADAM = "adam"


class LrSchedule(str, Enum):
    CONSTANT = "constant"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Optimizer = Optimizer.ADAM
    lr: float = 1e-3
    lr_schedule: LrSchedule = LrSchedule.CONSTANT
    lr_decay: float = 0.95
    batch_size: int = 64
    epochs: int = 20
    sigma_neu: float = 0.0
    seed: int = 0
    grad_clip: float | None = None
    momentum: float = 0.9

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
            object.__setattr__(self, "lr_schedule", LrSchedule(self.lr_schedule))
        except ValueError as exc:
            raise TrainConfigError(str(exc)) from None
        if self.epochs < 1:
            raise TrainConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise TrainConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.sigma_neu < 0:
            raise TrainConfigError(f"sigma_neu must be >= 0, got {self.sigma_neu}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise TrainConfigError(f"grad_clip must be > 0, got {self.grad_clip}")

    @classmethod
    def for_arch(cls, arch: ArchSpec, **overrides: Any) -> TrainConfig:
        """Defaults per architecture: BPTT gets more epochs and gradient clipping."""
        base: dict[str, Any] = {}
        if arch.arch_kind is ArchKind.RNN:
            base = {"epochs": 30, "grad_clip": RNN_GRAD_CLIP}
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule is LrSchedule.EXPONENTIAL:
            return self.lr * self.lr_decay**epoch
        return self.lr

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["optimizer"] = self.optimizer.value
        d["lr_schedule"] = self.lr_schedule.value
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise TrainConfigError(f"unknown train config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


class SGDMomentum:
    def __init__(self, momentum: float = 0.9) -> None:
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        for lid, g in grads.items():
            v = self._velocity.get(lid)
            v = -lr * g if v is None else self.momentum * v - lr * g
            self._velocity[lid] = v
            weights[lid] += v


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self._t += 1
        c1 = 1.0 - self.beta1**self._t
        c2 = 1.0 - self.beta2**self._t
        for lid, g in grads.items():
            m = self._m.get(lid, np.zeros_like(g))
            v = self._v.get(lid, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self._m[lid], self._v[lid] = m, v
            weights[lid] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg: TrainConfig) -> SGDMomentum | Adam:
    if cfg.optimizer is Optimizer.SGD_MOMENTUM:
        return SGDMomentum(cfg.momentum)
    return Adam()


def accuracy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    correct = int(np.count_nonzero(np.argmax(logits, axis=1) == np.asarray(labels)))
    return correct / len(labels)


def evaluate(model: ModelState | WeightBundle, dataset: DataSet, batch_size: int = 512) -> float:
    """Noiseless argmax accuracy."""
    if isinstance(model, WeightBundle):
        model = model.to_model()
    return accuracy_from_logits(predict(model, dataset.images, batch_size), dataset.labels)


def train(
    arch: ArchSpec,
    dataset: DataSet,
    cfg: TrainConfig,
    test_set: DataSet | None = None,
    *,
    progress: bool = False,
) -> WeightBundle:
    """Train ``arch`` on ``dataset`` and return the float32 bundle with its accuracies."""
    if len(dataset) == 0:
        raise TrainConfigError("training set is empty")
    model = init_model(arch, cfg.seed, cfg.sigma_neu)
    opt = make_optimizer(cfg)
    n = len(dataset)
    n_batches = math.ceil(n / cfg.batch_size)
    log.info(
        "train start arch=%s dataset=%s n=%d epochs=%d sigma_neu=%g seed=%d",
        arch.render(), dataset.name, n, cfg.epochs, cfg.sigma_neu, cfg.seed,
    )

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = generator(cfg.seed, "shuffle", epoch).permutation(n)
        running = 0.0
        bar = tqdm(range(n_batches), desc=f"epoch {epoch + 1}/{cfg.epochs}", disable=not progress, leave=False)
        for b in bar:
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            step = backward(model, dataset.images[idx], dataset.labels[idx])
            norm = step.global_norm
            if not (math.isfinite(step.loss) and math.isfinite(norm)):
                raise TrainingDivergedError(epoch + 1, b, lr, step.loss)
            if cfg.grad_clip is not None and norm > cfg.grad_clip:
                scale = cfg.grad_clip / norm
                step = replace(step, grads={lid: g * scale for lid, g in step.grads.items()})
            opt.step(model.weights, step.grads, lr)
            running += step.loss
        metrics.train_epochs_total.inc()
        log.info("epoch done epoch=%d loss=%.5f lr=%g", epoch + 1, running / n_batches, lr)

    bundle = WeightBundle.from_model(model, dataset=dataset.name, train_config=cfg.to_dict())
    final = bundle.to_model()
    bundle.train_accuracy = evaluate(final, dataset)
    if test_set is not None:
        bundle.test_accuracy = evaluate(final, test_set)
    log.info("train done train_acc=%.4f test_acc=%s", bundle.train_accuracy, bundle.test_accuracy)
    return bundle
