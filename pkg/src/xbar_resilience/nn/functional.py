# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Stateless array operations used by the model and by crossbar inference.

Image tensors are channels-last, ``(N, H, W, C)``. Convolution kernels are
``(k, k, Cin, Cout)`` and lower to a ``(k*k*Cin + 1, Cout)`` matrix whose last
row is the bias, matching the im2col column order ``(ky, kx, c)``.
"""

from __future__ import annotations

from typing import Any

import numpy as np

__all__ = [
    "bounded_relu",
    "bounded_relu_grad",
    "col2im",
    "conv2d_same",
    "conv_matrix",
    "im2col",
    "maxpool",
    "maxpool2",
    "maxpool_backward",
    "softmax_cross_entropy",
    "stochastic_relu",
    "with_bias",
]


def bounded_relu(x: Any) -> Any:
    """f(x) = min(max(0, x), 1), elementwise."""
    return np.minimum(np.maximum(x, 0.0), 1.0)


def bounded_relu_grad(z: np.ndarray) -> np.ndarray:
    return ((z > 0.0) & (z < 1.0)).astype(np.float64)


def stochastic_relu(x: Any, sigma_neu: float, rng: np.random.Generator) -> Any:
    """bounded_relu(x + n), n ~ N(0, sigma_neu); exactly bounded_relu when sigma_neu is 0."""
    if sigma_neu == 0:
        return bounded_relu(x)
    return bounded_relu(x + rng.normal(0.0, sigma_neu, size=np.shape(x)))


def with_bias(x: np.ndarray) -> np.ndarray:
    """Append the constant-1 column that drives a weight matrix's bias row."""
    return np.concatenate([x, np.ones((x.shape[0], 1), dtype=x.dtype)], axis=1)


def im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, H, W, C) -> (N*H*W, k*k*C) patches for a same-padded stride-1 kernel."""
    n, h, w, c = x.shape
    p = k // 2
    padded = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    cols = np.empty((n, h, w, k, k, c), dtype=x.dtype)
    for dy in range(k):
        for dx in range(k):
            cols[:, :, :, dy, dx, :] = padded[:, dy : dy + h, dx : dx + w, :]
    return cols.reshape(n * h * w, k * k * c)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], k: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch gradients back onto the image."""
    n, h, w, c = shape
    p = k // 2
    patches = cols.reshape(n, h, w, k, k, c)
    padded = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=cols.dtype)
    for dy in range(k):
        for dx in range(k):
            padded[:, dy : dy + h, dx : dx + w, :] += patches[:, :, :, dy, dx, :]
    return padded[:, p : p + h, p : p + w, :]


def conv_matrix(kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    k, _, cin, cout = kernel.shape
    return np.vstack([kernel.reshape(k * k * cin, cout), np.asarray(bias).reshape(1, cout)])


def conv2d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded stride-1 convolution; accepts (H, W, Cin) or (N, H, W, Cin)."""
    single = x.ndim == 3
    batch = x[None] if single else x
    n, h, w, cin = batch.shape
    k, k2, kin, cout = kernel.shape
    if k != k2 or kin != cin:
        raise ValueError(f"kernel {kernel.shape} does not fit input with {cin} channels")
    out = (with_bias(im2col(batch, k)) @ conv_matrix(kernel, bias)).reshape(n, h, w, cout)
    return out[0] if single else out


def maxpool(x: np.ndarray, s: int) -> tuple[np.ndarray, np.ndarray]:
    """Max over disjoint s x s blocks; returns (output, argmax index per block)."""
    n, h, w, c = x.shape
    if h % s or w % s:
        raise ValueError(f"max-pool of size {s} needs H and W divisible by {s}, got {h}x{w}")
    ho, wo = h // s, w // s
    blocks = x.reshape(n, ho, s, wo, s, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, s * s)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool_backward(grad: np.ndarray, idx: np.ndarray, s: int) -> np.ndarray:
    n, ho, wo, c = grad.shape
    scattered = np.zeros((n, ho, wo, c, s * s), dtype=grad.dtype)
    np.put_along_axis(scattered, idx[..., None], grad[..., None], axis=-1)
    return scattered.reshape(n, ho, wo, c, s, s).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * s, wo * s, c)


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 max-pool of (H, W, C) or (N, H, W, C)."""
    single = x.ndim == 3
    out, _ = maxpool(x[None] if single else x, 2)
    return out[0] if single else out


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    grad = np.exp(shifted - log_z[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n
