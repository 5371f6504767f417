# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT
"""IDX writers and synthetic image sets shared by the tests."""

import gzip
import struct
from pathlib import Path

import numpy as np


def write_idx(path: Path, array: np.ndarray, magic: int, compress: bool = False) -> Path:
    """Write ``array`` (uint8) as an IDX file with the given magic."""
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    payload = header + array.tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    if compress:
        path = path.with_name(path.name + ".gz")
        path.write_bytes(gzip.compress(payload))
    else:
        path.write_bytes(payload)
    return path


def banded_images(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Separable 28x28 uint8 images: class c lights a band of rows starting at 2c + 4."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    images = rng.integers(0, 40, size=(n, 28, 28)).astype(np.uint8)
    for i, c in enumerate(labels):
        images[i, 2 * c + 4 : 2 * c + 7, 4:24] = 230
    return images, labels.astype(np.uint8)


def write_dataset(root: Path, name: str, n_train: int = 60, n_test: int = 30, compress: bool = False) -> Path:
    base = root / name
    for prefix, n, seed in (("train", n_train, 1), ("t10k", n_test, 2)):
        images, labels = banded_images(n, seed)
        write_idx(base / f"{prefix}-images-idx3-ubyte", images, 0x803, compress)
        write_idx(base / f"{prefix}-labels-idx1-ubyte", labels, 0x801, compress)
    return root
