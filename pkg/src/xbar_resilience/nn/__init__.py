# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT
"""Reference (ideal floating-point) neural network math."""

from __future__ import annotations

from .functional import (
    bounded_relu,
    conv2d_same,
    im2col,
    maxpool2,
    softmax_cross_entropy,
    stochastic_relu,
)
from .model import Gradients, Mode, ModelState, Reader, backward, forward, init_model, predict

__all__: list[str] = [
    "Gradients",
    "Mode",
    "ModelState",
    "Reader",
    "backward",
    "bounded_relu",
    "conv2d_same",
    "forward",
    "im2col",
    "init_model",
    "maxpool2",
    "predict",
    "softmax_cross_entropy",
    "stochastic_relu",
]
