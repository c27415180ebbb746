"""Seed derivation for reproducible, parallel-safe random streams.

Every random draw in the toolkit flows from a single root seed. Independent
streams are derived with ``numpy.random.SeedSequence`` spawn keys, so workers
can process sources (or samples within a source) in any order without
changing results. PCG64 is platform-stable: the same key yields the same
draws on every machine.

Derivation scheme, used everywhere:

    stream(seed)                     one-off stream
    stream(seed, i, m)               sample m of source i
    stream(seed, *tags)              any other keyed sub-stream
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, key)``; stable across platforms."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse ``(seed, key)`` into a single 63-bit child seed."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
