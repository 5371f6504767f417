# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Simulated NVM crossbar inference.

Each weight matrix (bias row included) maps to one signed-device array,
normalized by its max absolute weight so programmed values sit in [-1, 1].
Synaptic noise is expressed in those normalized units. Neuron activations are
ideal; circuits only enter the energy model.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, NamedTuple

import numpy as np

from .archspec import ArchKind, ArchSpec, LayerKind
from .bundle import WeightBundle
from .data import DataSet, NoiseConfig, SynMode, add_test_noise
from .errors import CrossbarMappingError, NoiseConfigError
from .metrics import metrics
from .nn.model import Mode, ModelState, Reader, forward
from .rng import generator
from .utils.logging import get_logger

__all__ = [
    "ArrayReads",
    "CrossbarArray",
    "CrossbarProgram",
    "InferenceResult",
    "OpCounts",
    "count_ops",
    "infer",
    "map_to_arrays",
    "perturb_devices",
]

log = get_logger("xbar.sim")

# Logit drivers count as rectifier evaluations only for the MLP; this is the
# convention the shipped activation-energy profiles are calibrated against.
_LOGIT_DRIVERS_COUNTED = {ArchKind.MLP: True, ArchKind.CNN: False, ArchKind.RNN: False}


@dataclass(frozen=True)
class ArrayReads:
    layer_id: str
    rows: int
    cols: int
    count: int


@dataclass(frozen=True)
class OpCounts:
    """Per-inference array reads and rectifier evaluations."""

    reads: tuple[ArrayReads, ...]
    activations: int
    layer_activations: tuple[tuple[str, int], ...] = ()

    @property
    def cells(self) -> int:
        return sum(r.count * r.rows * r.cols for r in self.reads)

    @property
    def row_drives(self) -> int:
        return sum(r.count * r.rows for r in self.reads)

    @property
    def column_conversions(self) -> int:
        return sum(r.count * r.cols for r in self.reads)

    def to_dict(self) -> dict[str, Any]:
        return {
            "reads": [{"layer": r.layer_id, "rows": r.rows, "cols": r.cols, "count": r.count} for r in self.reads],
            "activations": self.activations,
            "layer_activations": dict(self.layer_activations),
            "cells": self.cells,
            "row_drives": self.row_drives,
            "column_conversions": self.column_conversions,
        }


def count_ops(arch: ArchSpec) -> OpCounts:
    reads: list[ArrayReads] = []
    acts: list[tuple[str, int]] = []
    last = arch.layers[-1].layer_id if arch.layers else None
    for layer in arch.layers:
        lid = layer.layer_id
        if layer.kind is LayerKind.MAXPOOL:
            continue
        if layer.kind is LayerKind.CONV:
            h, w, _ = layer.in_shape
            count, fired = h * w, h * w * layer.filters
        elif layer.kind is LayerKind.RECURRENT:
            count, fired = layer.time_steps, layer.time_steps * layer.d_hl
        elif lid == last:
            count, fired = 1, layer.cols if _LOGIT_DRIVERS_COUNTED[arch.arch_kind] else 0
        else:
            count, fired = 1, layer.cols
        reads.append(ArrayReads(lid, layer.rows, layer.cols, count))
        acts.append((lid, fired))
    return OpCounts(tuple(reads), sum(n for _, n in acts), tuple(acts))


@dataclass(frozen=True)
class CrossbarArray:
    layer_id: str
    weights: np.ndarray
    scale: float
    deltas: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return int(self.weights.shape[0])

    @property
    def cols(self) -> int:
        return int(self.weights.shape[1])

    @property
    def devices(self) -> int:
        return self.rows * self.cols

    @property
    def programmed(self) -> np.ndarray:
        """Normalized device values in [-1, 1]."""
        return self.weights / self.scale

    def effective(self) -> np.ndarray:
        """Weights seen by a read under static perturbation."""
        if self.deltas is None:
            return self.weights
        return self.weights + self.deltas * self.scale


@dataclass(frozen=True)
class CrossbarProgram:
    arch: ArchSpec
    arrays: tuple[CrossbarArray, ...]
    sigma_syn: float = 0.0
    syn_mode: SynMode = SynMode.STATIC
    seed: int | None = None

    @property
    def devices(self) -> int:
        return sum(a.devices for a in self.arrays)

    def array(self, layer_id: str) -> CrossbarArray:
        for a in self.arrays:
            if a.layer_id == layer_id:
                return a
        raise KeyError(layer_id)

    def reader(self, batch_index: int = 0) -> Reader:
        """Array-read function for one inference batch."""
        eff = {a.layer_id: a.effective() for a in self.arrays}
        if self.syn_mode is not SynMode.PER_READ or self.sigma_syn == 0:
            return lambda lid, x: x @ eff[lid]

        assert self.seed is not None
        rng = generator(self.seed, "per-read", batch_index)
        sd = {a.layer_id: self.sigma_syn * a.scale for a in self.arrays}

        def read(lid: str, x: np.ndarray) -> np.ndarray:
            # A fresh N(0, sd^2) delta on every device of the read makes each
            # column output N(x @ W, sd^2 * |x|^2), independently per column.
            y = x @ eff[lid]
            spread = sd[lid] * np.linalg.norm(x, axis=1)
            return y + rng.standard_normal(y.shape) * spread[:, None]

        return read


def map_to_arrays(bundle: WeightBundle) -> CrossbarProgram:
    """One array per weight matrix; the recurrent core is a single array read t times."""
    arrays = []
    for layer in bundle.arch.weight_layers():
        w = bundle.weights[layer.layer_id].astype(np.float64)
        peak = float(np.max(np.abs(w))) if w.size else 0.0
        arrays.append(CrossbarArray(layer.layer_id, w, peak if peak > 0 else 1.0))
    return CrossbarProgram(bundle.arch, tuple(arrays))


def perturb_devices(
    prog: CrossbarProgram, sigma_syn: float, seed: int, mode: SynMode | str = SynMode.STATIC
) -> CrossbarProgram:
    """Apply per-device Gaussian perturbation of width ``sigma_syn`` (normalized units).

    Static mode draws one delta per device for the whole run; per-read mode
    arms the program so every array read draws fresh deltas. Deltas always
    replace any earlier perturbation rather than accumulate.
    """
    if not math.isfinite(sigma_syn) or sigma_syn < 0:
        raise NoiseConfigError(f"sigma_syn must be >= 0, got {sigma_syn}")
    mode = SynMode(mode)
    if sigma_syn == 0:
        if prog.sigma_syn == 0 and all(a.deltas is None for a in prog.arrays):
            return prog
        arrays = tuple(replace(a, deltas=None) for a in prog.arrays)
        return replace(prog, arrays=arrays, sigma_syn=0.0, syn_mode=SynMode.STATIC, seed=None)
    if mode is SynMode.PER_READ:
        arrays = tuple(replace(a, deltas=None) for a in prog.arrays)
        return replace(prog, arrays=arrays, sigma_syn=sigma_syn, syn_mode=mode, seed=seed)
    arrays = tuple(
        replace(a, deltas=generator(seed, "synapse", a.layer_id).standard_normal((a.rows, a.cols)) * sigma_syn)
        for a in prog.arrays
    )
    return replace(prog, arrays=arrays, sigma_syn=sigma_syn, syn_mode=mode, seed=seed)


class InferenceResult(NamedTuple):
    accuracy: float
    counts: OpCounts


def _check_program(prog: CrossbarProgram, arch: ArchSpec) -> None:
    expected = [(layer.layer_id, layer.rows, layer.cols) for layer in arch.weight_layers()]
    found = [(a.layer_id, a.rows, a.cols) for a in prog.arrays]
    if expected != found:
        raise CrossbarMappingError(f"program arrays {found} do not match architecture {expected}")


def infer(
    prog: CrossbarProgram,
    arch: ArchSpec,
    dataset: DataSet,
    noise: NoiseConfig,
    *,
    batch_size: int = 512,
    jobs: int = 1,
) -> InferenceResult:
    """Accuracy of ``prog`` on ``dataset`` with input noise ``noise.sigma_te``.

    The program must already carry the synaptic perturbation described by
    ``noise`` (see :func:`perturb_devices`).
    """
    _check_program(prog, arch)
    if dataset.dim != arch.flat_input:
        raise CrossbarMappingError(f"dataset has {dataset.dim} inputs per image, architecture needs {arch.flat_input}")
    if noise.sigma_syn != prog.sigma_syn or (noise.sigma_syn > 0 and noise.syn_mode is not prog.syn_mode):
        raise CrossbarMappingError(
            f"program carries sigma_syn={prog.sigma_syn} ({prog.syn_mode.value}) but the noise config asks for "
            f"sigma_syn={noise.sigma_syn} ({noise.syn_mode.value}); call perturb_devices first"
        )

    noisy = add_test_noise(dataset, noise.sigma_te, noise.seed)
    model = ModelState(arch, {a.layer_id: a.weights for a in prog.arrays})
    starts = list(range(0, len(noisy), batch_size))

    def run(batch: int) -> int:
        start = starts[batch]
        x = noisy.images[start : start + batch_size]
        y = noisy.labels[start : start + batch_size]
        logits = forward(model, x, Mode.EVAL, reader=prog.reader(batch))
        return int(np.count_nonzero(np.argmax(logits, axis=1) == y))

    with metrics.time_inference():
        if jobs > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                correct = sum(pool.map(run, range(len(starts))))
        else:
            correct = sum(run(b) for b in range(len(starts)))
    metrics.images_inferred_total.inc(len(noisy))

    accuracy = correct / len(noisy) if len(noisy) else 0.0
    log.debug(
        "infer arch=%s n=%d sigma_syn=%g sigma_te=%g mode=%s acc=%.4f",
        arch.render(), len(noisy), noise.sigma_syn, noise.sigma_te, noise.syn_mode.value, accuracy,
    )
    return InferenceResult(accuracy, count_ops(arch))
