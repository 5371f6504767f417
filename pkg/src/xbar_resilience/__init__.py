# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT
"""Noise resilience and energy of neural networks mapped onto NVM crossbars."""

__version__ = "0.1.0"

from .archspec import ArchSpec, count_params, parse_arch, render, resolve_arch
from .data import DataSet, NoiseConfig, SynMode, load_dataset, load_idx
from .energy import EnergyParams, EnergyReport, calibrate, compare_architectures, estimate_energy, load_profile
from .errors import RuntimeFailure, ValidationError, XbarError
from .harness import SweepConfig, SweepRecord, aggregate, run_sweep
from .train import TrainConfig, WeightBundle, evaluate, load_bundle, save_bundle, train
from .xbar import CrossbarProgram, OpCounts, count_ops, infer, map_to_arrays, perturb_devices

__all__ = [
    "__version__",
    "ArchSpec",
    "CrossbarProgram",
    "DataSet",
    "EnergyParams",
    "EnergyReport",
    "NoiseConfig",
    "OpCounts",
    "RuntimeFailure",
    "SweepConfig",
    "SweepRecord",
    "SynMode",
    "TrainConfig",
    "ValidationError",
    "WeightBundle",
    "XbarError",
    "aggregate",
    "calibrate",
    "compare_architectures",
    "count_ops",
    "count_params",
    "estimate_energy",
    "evaluate",
    "infer",
    "load_bundle",
    "load_dataset",
    "load_idx",
    "load_profile",
    "map_to_arrays",
    "parse_arch",
    "perturb_devices",
    "render",
    "resolve_arch",
    "run_sweep",
    "save_bundle",
    "train",
]
