# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Deterministic random streams.

Every stochastic quantity in the package is drawn from a generator keyed by
``(seed, *keys)``: the same key always yields the same stream, independent
of call order or worker scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "generator", "SEED_MASK"]

SEED_MASK = (1 << 64) - 1


def _key_words(keys: tuple[object, ...]) -> list[int]:
    words: list[int] = []
    for key in keys:
        if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
            words.append(int(key) & SEED_MASK)
        else:
            digest = hashlib.blake2b(str(key).encode(), digest_size=8).digest()
            words.append(int.from_bytes(digest, "little"))
    return words


def derive_seed(base: int, *keys: object) -> int:
    """Mix ``keys`` into ``base`` and return a new 64-bit seed."""
    seq = np.random.SeedSequence([int(base) & SEED_MASK, *_key_words(keys)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int, *keys: object) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``."""
    seq = np.random.SeedSequence([int(seed) & SEED_MASK, *_key_words(keys)])
    return np.random.Generator(np.random.Philox(seq))
