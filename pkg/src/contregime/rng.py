"""Counter-based random streams.

Every stochastic draw in the engine comes from a Philox generator whose
counter block encodes (world, grid step, draw role) and whose key holds
the user seed. A subject's draw is its position inside the vectorized
stream, which is prefix-stable: subject i sees the same values for any
cohort size >= i+1. Streams never depend on execution order or thread
count, so a fixed seed reproduces every output bit for bit.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Role", "World", "substream"]

_SALT = np.uint64(0x9E3779B97F4A7C15)


class World:
    OBSERVED = 0
    COUNTERFACTUAL = 1


class Role:
    BASELINE = 0
    TREATMENT = 1
    TRANSITION = 2
    CENSOR = 3
    TERMINAL = 4


def substream(seed: int, world: int, step: int, role: int) -> np.random.Generator:
    """Generator for one (seed, world, grid step, role) stream."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    counter = np.array([0, step, role, world], dtype=np.uint64)
    key = np.array([np.uint64(seed), _SALT], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))
