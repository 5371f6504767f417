# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""MNIST-family datasets: IDX parsing, test-set noise and RNN chunking."""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DivisibilityError, IdxFormatError, NoiseConfigError
from .rng import generator

__all__ = [
    "DATASETS",
    "N_CLASSES",
    "DataSet",
    "IMAGES_MAGIC",
    "LABELS_MAGIC",
    "NoiseConfig",
    "SynMode",
    "add_test_noise",
    "chunk_batch",
    "chunk_image",
    "dataset_paths",
    "load_dataset",
    "load_idx",
    "valid_timesteps",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_GZIP_MAGIC = b"\x1f\x8b"

DATASETS = ("mnist", "fashion-mnist")
N_CLASSES = 10


class SynMode(str, Enum):
    STATIC = "static-per-run"
    PER_READ = "per-read"


@dataclass(frozen=True)
class NoiseConfig:
    sigma_syn: float = 0.0
    sigma_neu: float = 0.0
    sigma_te: float = 0.0
    syn_mode: SynMode = SynMode.STATIC
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("sigma_syn", "sigma_neu", "sigma_te"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise NoiseConfigError(f"{name} must be a finite value >= 0, got {value}")
        if not isinstance(self.syn_mode, SynMode):
            try:
                object.__setattr__(self, "syn_mode", SynMode(self.syn_mode))
            except ValueError:
                modes = ", ".join(m.value for m in SynMode)
                raise NoiseConfigError(f"syn_mode must be one of {modes}, got {self.syn_mode!r}") from None
        if not 0 <= self.seed < 2**64:
            raise NoiseConfigError(f"seed must fit in 64 bits, got {self.seed}")


@dataclass(frozen=True)
class DataSet:
    images: np.ndarray
    labels: np.ndarray
    name: str = "mnist"

    def __post_init__(self) -> None:
        if self.images.ndim != 2:
            raise IdxFormatError(f"images must be N x D, got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise IdxFormatError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise IdxFormatError(f"labels must lie in 0..{N_CLASSES - 1}")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return int(self.images.shape[1])

    def subset(self, n: int | None) -> DataSet:
        if n is None or n >= len(self):
            return self
        return DataSet(self.images[:n], self.labels[:n], self.name)

    def batches(self, size: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for start in range(0, len(self), size):
            yield self.images[start : start + size], self.labels[start : start + size]


def _open(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == _GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise IdxFormatError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def _parse_idx(path: Path, magic: int, ndim: int) -> np.ndarray:
    raw = _open(path)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    shape = struct.unpack(">" + "I" * ndim, raw[4:header])
    expected = math.prod(shape)
    payload = len(raw) - header
    if payload != expected:
        kind = "truncated payload" if payload < expected else "trailing bytes after payload"
        raise IdxFormatError(f"{path}: {kind}: header declares {shape} ({expected} bytes), found {payload}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(shape)


def load_idx(images_path: str | Path, labels_path: str | Path, name: str = "mnist") -> DataSet:
    """Load an IDX image/label pair (optionally gzip-compressed); pixels scaled to [0, 1]."""
    images = _parse_idx(Path(images_path), IMAGES_MAGIC, 3)
    labels = _parse_idx(Path(labels_path), LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise IdxFormatError(f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels")
    if labels.size and labels.max() >= N_CLASSES:
        raise IdxFormatError(f"{labels_path}: label {int(labels.max())} outside 0..{N_CLASSES - 1}")
    flat = images.reshape(len(images), -1).astype(np.float32) / np.float32(255.0)
    return DataSet(flat, labels.astype(np.int64), name)


def dataset_paths(root: str | Path, name: str, split: str) -> tuple[Path, Path]:
    """Locate ``<root>/<name>/{train,t10k}-{images,labels}-idx?-ubyte[.gz]``."""
    if name not in DATASETS:
        raise IdxFormatError(f"unknown dataset {name!r}; expected one of {', '.join(DATASETS)}")
    prefix = {"train": "train", "test": "t10k", "t10k": "t10k"}.get(split)
    if prefix is None:
        raise IdxFormatError(f"unknown split {split!r}; expected train or test")
    base = Path(root) / name
    found = []
    for part, dims in (("images", 3), ("labels", 1)):
        stem = f"{prefix}-{part}-idx{dims}-ubyte"
        for candidate in (base / stem, base / f"{stem}.gz"):
            if candidate.is_file():
                found.append(candidate)
                break
        else:
            raise IdxFormatError(f"missing {base / stem}[.gz]; set XBAR_DATA_ROOT to the dataset directory")
    return found[0], found[1]


def load_dataset(name: str, split: str = "test", root: str | Path | None = None, limit: int | None = None) -> DataSet:
    if root is None:
        from .config import get_settings

        root = get_settings().data_root
    images, labels = dataset_paths(root, name, split)
    return load_idx(images, labels, name).subset(limit)


def add_test_noise(ds: DataSet, sigma_te: float, seed: int) -> DataSet:
    """Y_noisy = Y + N(0, sigma_te) per pixel, unclipped; identity when sigma_te is 0."""
    if sigma_te < 0 or not math.isfinite(sigma_te):
        raise NoiseConfigError(f"sigma_te must be >= 0, got {sigma_te}")
    if sigma_te == 0:
        return ds
    noise = generator(seed, "test-noise").normal(0.0, sigma_te, size=ds.images.shape)
    return DataSet(ds.images + noise, ds.labels, ds.name)


def valid_timesteps(M: int) -> list[int]:
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    return [d for d in range(1, M + 1) if M % d == 0]


def chunk_image(image: np.ndarray, t: int) -> np.ndarray:
    """Row-major split of a flat image into ``t`` consecutive chunks, shape (t, M/t)."""
    flat = np.asarray(image).reshape(-1)
    if t < 1 or flat.size % t:
        raise DivisibilityError("image size", flat.size, t)
    return flat.reshape(t, flat.size // t)


def chunk_batch(images: np.ndarray, t: int) -> np.ndarray:
    """Batched :func:`chunk_image`: (N, M) -> (N, t, M/t)."""
    n, m = images.shape
    if t < 1 or m % t:
        raise DivisibilityError("image size", m, t)
    return images.reshape(n, t, m // t)
