"""Per-trajectory random substreams.

Trajectory ``i`` of a batch seeded with ``seed`` draws from a Philox
(counter-based) generator keyed by ``splitmix64(seed ^ i)``, so every
trajectory's randomness is fixed by its index alone and batches can be split
across workers in any way without changing results.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def substream(seed: int, index: int) -> np.random.Generator:
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    key = splitmix64((seed ^ index) & MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def open_unit(gen: np.random.Generator) -> float:
    """Uniform draw on (0, 1]."""
    return 1.0 - gen.random()
