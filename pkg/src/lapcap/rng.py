"""Seeded, splittable random streams.

Every stochastic routine derives its generator from one 64-bit seed plus a
tuple of stream keys, using the counter-based Philox bit generator. Two calls
with the same (seed, keys) produce identical streams regardless of call order.
"""
from __future__ import annotations

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Return a Philox generator for the stream ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
