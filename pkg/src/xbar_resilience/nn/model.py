# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Floating-point reference forward/backward passes for MLP, CNN and re-use RNN.

Every matrix product goes through a ``Reader`` callable, ``read(layer_id, x)``
returning ``x @ W``. The default reader uses the model's own weights; crossbar
inference substitutes a reader that models perturbed array reads, so both
paths share one dataflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

from ..archspec import Activation, ArchSpec, LayerKind, LayerSpec
from ..data import chunk_batch
from ..errors import ArchShapeError
from ..rng import generator
from .functional import (
    bounded_relu,
    bounded_relu_grad,
    col2im,
    im2col,
    maxpool,
    maxpool_backward,
    softmax_cross_entropy,
    stochastic_relu,
    with_bias,
)

__all__ = [
    "Gradients",
    "Mode",
    "ModelState",
    "Reader",
    "backward",
    "forward",
    "init_model",
    "predict",
]

Reader = Callable[[str, np.ndarray], np.ndarray]


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass
class ModelState:
    arch: ArchSpec
    weights: dict[str, np.ndarray]
    rng: np.random.Generator = field(default_factory=lambda: generator(0, "neuron-noise"))
    sigma_neu: float = 0.0

    def __post_init__(self) -> None:
        expected = {layer.layer_id: (layer.rows, layer.cols) for layer in self.arch.weight_layers()}
        if set(expected) != set(self.weights):
            raise ArchShapeError("weights", "architecture", f"layers {sorted(self.weights)} != {sorted(expected)}")
        for lid, shape in expected.items():
            if self.weights[lid].shape != shape:
                raise ArchShapeError(lid, "weights", f"matrix {self.weights[lid].shape} != expected {shape}")

    def reader(self) -> Reader:
        weights = self.weights
        return lambda lid, x: x @ weights[lid]


@dataclass
class Gradients:
    loss: float
    grads: dict[str, np.ndarray]

    @property
    def global_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.grads.values()))


def init_model(arch: ArchSpec, seed: int, sigma_neu: float = 0.0) -> ModelState:
    """He-uniform weights scaled by fan-in, zero bias rows."""
    weights: dict[str, np.ndarray] = {}
    for layer in arch.weight_layers():
        rng = generator(seed, "init", layer.layer_id)
        fan_in = layer.rows - 1 if layer.has_bias_row else layer.rows
        limit = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(layer.rows, layer.cols))
        if layer.has_bias_row:
            w[-1] = 0.0
        weights[layer.layer_id] = w
    return ModelState(arch, weights, generator(seed, "neuron-noise"), sigma_neu)


def _as_batch(arch: ArchSpec, x: Any) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1 or arr.shape == arch.input_dims:
        arr = arr.reshape(1, -1)
    n = arr.shape[0]
    if arr[0].size != arch.flat_input:
        first = arch.layers[0].layer_id if arch.layers else "output"
        raise ArchShapeError("input", first, f"got {arr[0].size} values per sample, expected {arch.flat_input}")
    if arch.layers and arch.layers[0].kind in (LayerKind.CONV, LayerKind.MAXPOOL):
        return arr.reshape(n, *arch.input_dims)
    return arr.reshape(n, arch.flat_input)


def _activate(
    z: np.ndarray, layer: LayerSpec, noisy: bool, model: ModelState
) -> tuple[np.ndarray, np.ndarray | None]:
    if layer.activation is not Activation.BOUNDED_RELU:
        return z, None
    # the gradient mask 0 < z < 1 holds exactly where 0 < f(z) < 1
    a = stochastic_relu(z, model.sigma_neu, model.rng) if noisy else bounded_relu(z)
    return a, a


def _forward(
    model: ModelState, x: Any, mode: Mode | str, reader: Reader | None
) -> tuple[np.ndarray, list[dict[str, Any]]]:
    mode = Mode(mode)
    noisy = mode is Mode.TRAIN and model.sigma_neu > 0
    read = reader or model.reader()
    a = _as_batch(model.arch, x)
    n = a.shape[0]
    trace: list[dict[str, Any]] = []

    for layer in model.arch.layers:
        lid = layer.layer_id
        cache: dict[str, Any] = {"layer": layer, "in_shape": a.shape}
        if layer.kind is LayerKind.CONV:
            h, w, _ = layer.in_shape
            aug = with_bias(im2col(a, layer.kernel))
            z = read(lid, aug).reshape(n, h, w, layer.filters)
            a, cache["act"] = _activate(z, layer, noisy, model)
            cache["aug"] = aug
        elif layer.kind is LayerKind.MAXPOOL:
            a, cache["idx"] = maxpool(a, layer.stride)
        elif layer.kind is LayerKind.RECURRENT:
            t, d_hl = layer.time_steps, layer.d_hl
            chunks = chunk_batch(a, t)
            h_prev = np.zeros((n, d_hl))
            steps = []
            for i in range(t):
                inp = np.concatenate([chunks[:, i], h_prev[:, :d_hl]], axis=1)
                h_prev, act = _activate(read(lid, inp), layer, noisy, model)
                steps.append((inp, act))
            a = h_prev
            cache["steps"] = steps
        else:
            aug = with_bias(a.reshape(n, -1))
            a, cache["act"] = _activate(read(lid, aug), layer, noisy, model)
            cache["aug"] = aug
        trace.append(cache)
    return a, trace


def forward(model: ModelState, x: Any, mode: Mode | str = Mode.EVAL, reader: Reader | None = None) -> np.ndarray:
    """Logits for a batch (or a single sample, returned with a batch dim of 1)."""
    logits, _ = _forward(model, x, mode, reader)
    return logits


def predict(model: ModelState, images: np.ndarray, batch_size: int = 512, reader: Reader | None = None) -> np.ndarray:
    """Eval-mode logits for a whole array of samples, in batches."""
    out = [forward(model, images[i : i + batch_size], Mode.EVAL, reader) for i in range(0, len(images), batch_size)]
    if not out:
        return np.zeros((0, model.arch.num_classes))
    return np.concatenate(out, axis=0)


def backward(model: ModelState, x: Any, labels: Any) -> Gradients:
    """Softmax cross-entropy loss and its gradient w.r.t. every weight matrix.

    Runs a train-mode forward pass, so stochastic ReLU noise (``sigma_neu``)
    is drawn once and held constant through the backward pass. The recurrent
    core is fully unrolled; per-step gradients accumulate into the one shared
    matrix.
    """
    logits, trace = _forward(model, x, Mode.TRAIN, None)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    loss, g = softmax_cross_entropy(logits, labels)
    grads: dict[str, np.ndarray] = {}
    n = logits.shape[0]

    for cache in reversed(trace):
        layer: LayerSpec = cache["layer"]
        lid = layer.layer_id
        first = layer.index == 0
        if layer.kind is LayerKind.MAXPOOL:
            g = maxpool_backward(g, cache["idx"], layer.stride)
            continue
        w = model.weights[lid]
        if layer.kind is LayerKind.RECURRENT:
            chunk, d_hl = layer.chunk, layer.d_hl
            dw = np.zeros_like(w)
            dh = g
            for inp, act in reversed(cache["steps"]):
                dz = dh * bounded_relu_grad(act)
                dw += inp.T @ dz
                dinp = dz @ w.T
                dh = np.zeros((n, layer.cols))
                dh[:, :d_hl] = dinp[:, chunk:]
            grads[lid] = dw
            continue
        act = cache["act"]
        if act is not None:
            g = g * bounded_relu_grad(act)
        if layer.kind is LayerKind.CONV:
            g2 = g.reshape(-1, layer.filters)
            grads[lid] = cache["aug"].T @ g2
            if not first:
                g = col2im(g2 @ w[:-1].T, cache["in_shape"], layer.kernel)
        else:
            grads[lid] = cache["aug"].T @ g
            if not first:
                g = (g @ w[:-1].T).reshape(cache["in_shape"])
    return Gradients(loss, grads)
