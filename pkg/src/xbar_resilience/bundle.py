# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT
"""Weight bundles: a directory holding ``manifest.json`` plus one
``<layer-id>.f32`` little-endian row-major blob per weight matrix.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .archspec import ArchSpec
from .errors import ArchError, BundleError, BundleIntegrityError
from .nn.model import ModelState
from .rng import generator

__all__ = [
    "BLOB_DTYPE",
    "FORMAT_VERSION",
    "MANIFEST_NAME",
    "WeightBundle",
    "load_bundle",
    "save_bundle",
]

FORMAT_VERSION = "1"
MANIFEST_NAME = "manifest.json"
BLOB_DTYPE = np.dtype("<f4")


def _blob_bytes(w: np.ndarray) -> bytes:
    return np.ascontiguousarray(w, dtype=BLOB_DTYPE).tobytes()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class WeightBundle:
    arch: ArchSpec
    weights: dict[str, np.ndarray]
    dataset: str = ""
    train_config: dict[str, Any] = field(default_factory=dict)
    train_accuracy: float | None = None
    test_accuracy: float | None = None

    def __post_init__(self) -> None:
        self.weights = {lid: np.asarray(w, dtype=BLOB_DTYPE) for lid, w in self.weights.items()}

    @classmethod
    def from_model(cls, model: ModelState, **meta: Any) -> WeightBundle:
        """Snapshot a model; values are rounded to the float32 blob format."""
        return cls(model.arch, {lid: w.copy() for lid, w in model.weights.items()}, **meta)

    def to_model(self, seed: int = 0) -> ModelState:
        weights = {lid: w.astype(np.float64) for lid, w in self.weights.items()}
        return ModelState(self.arch, weights, generator(seed, "neuron-noise"))

    @property
    def regularized(self) -> bool:
        return float(self.train_config.get("sigma_neu", 0.0)) > 0

    def blob_hashes(self) -> dict[str, str]:
        return {lid: _sha256(_blob_bytes(w)) for lid, w in sorted(self.weights.items())}

    @property
    def digest(self) -> str:
        """Hash over every blob and its dims; identifies the bundle in sweep logs."""
        h = hashlib.sha256()
        for lid, w in sorted(self.weights.items()):
            h.update(f"{lid}:{w.shape[0]}x{w.shape[1]}:".encode())
            h.update(_blob_bytes(w))
        return h.hexdigest()

    def manifest(self) -> dict[str, Any]:
        hashes = self.blob_hashes()
        return {
            "format_version": FORMAT_VERSION,
            "arch": self.arch.to_dict(),
            "dataset": self.dataset,
            "train_config": self.train_config,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "blobs": {
                lid: {"file": f"{lid}.f32", "rows": int(w.shape[0]), "cols": int(w.shape[1]), "sha256": hashes[lid]}
                for lid, w in sorted(self.weights.items())
            },
            "digest": self.digest,
        }


def save_bundle(bundle: WeightBundle, path: str | Path) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise BundleError(f"{out} exists and is not a bundle directory")
    out.mkdir(parents=True, exist_ok=True)
    manifest = bundle.manifest()
    for lid, w in bundle.weights.items():
        (out / manifest["blobs"][lid]["file"]).write_bytes(_blob_bytes(w))
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise BundleError(msg)


def load_bundle(path: str | Path) -> WeightBundle:
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    _require(manifest_path.is_file(), f"{root}: no {MANIFEST_NAME}; not a weight bundle")
    try:
        manifest: dict[str, Any] = json.loads(manifest_path.read_text())
    except (OSError, ValueError) as exc:
        raise BundleError(f"{manifest_path}: unreadable manifest ({exc})") from exc
    _require(isinstance(manifest, dict), f"{manifest_path}: manifest is not a JSON object")

    version = manifest.get("format_version")
    _require(version == FORMAT_VERSION, f"{root}: unsupported bundle version {version!r}, expected {FORMAT_VERSION!r}")
    try:
        arch = ArchSpec.from_dict(manifest["arch"])
    except (KeyError, ArchError) as exc:
        raise BundleError(f"{root}: invalid architecture record ({exc})") from exc

    blobs = manifest.get("blobs", {})
    _require(
        isinstance(blobs, dict) and all(isinstance(e, dict) for e in blobs.values()),
        f"{root}: manifest blobs must map layer ids to objects",
    )
    expected = {layer.layer_id: layer for layer in arch.weight_layers()}
    _require(set(blobs) == set(expected), f"{root}: blobs {sorted(blobs)} do not match layers {sorted(expected)}")

    weights: dict[str, np.ndarray] = {}
    for lid, layer in expected.items():
        entry = blobs[lid]
        try:
            rows, cols = int(entry.get("rows", -1)), int(entry.get("cols", -1))
        except (TypeError, ValueError):
            raise BundleError(f"{root}: blob {lid} has non-numeric dims") from None
        _require(
            (rows, cols) == (layer.rows, layer.cols),
            f"{root}: blob {lid} declared {rows}x{cols}, architecture needs {layer.rows}x{layer.cols}",
        )
        blob_path = root / str(entry.get("file", f"{lid}.f32"))
        _require(blob_path.is_file(), f"{root}: missing blob {blob_path.name}")
        data = blob_path.read_bytes()
        _require(
            len(data) == rows * cols * BLOB_DTYPE.itemsize,
            f"{root}: blob {lid} holds {len(data)} bytes, manifest dims need {rows * cols * BLOB_DTYPE.itemsize}",
        )
        if _sha256(data) != entry.get("sha256"):
            raise BundleIntegrityError(f"{root}: blob {lid} does not match its manifest hash")
        weights[lid] = np.frombuffer(data, dtype=BLOB_DTYPE).reshape(rows, cols).copy()

    bundle = WeightBundle(
        arch,
        weights,
        dataset=str(manifest.get("dataset", "")),
        train_config=dict(manifest.get("train_config") or {}),
        train_accuracy=manifest.get("train_accuracy"),
        test_accuracy=manifest.get("test_accuracy"),
    )
    if manifest.get("digest") not in (None, bundle.digest):
        raise BundleIntegrityError(f"{root}: bundle digest does not match its blobs")
    return bundle
