"""Seeded random streams.

All randomness in the package flows from ``numpy.random.Generator`` objects
backed by PCG64 and built from a ``SeedSequence``.  Child streams are derived
by key so that instance ``i`` of a benchmark does not depend on how many
instances came before it.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for ``seed`` and an optional path of child keys."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed derived from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return make_rng(0)
    return make_rng(int(rng))
