"""Seeded random streams.

Every random draw in a simulation comes from a Philox counter-based
generator keyed by the run seed.  The counter is positioned by
``(step, role)`` so that each step gets an independent stream per role:

    counter = [0, step, role, 0]

The lowest counter word is the one Philox advances while drawing, so two
streams never overlap unless a single stream draws 2**64 blocks.  Philox is
defined bit-for-bit, which keeps traces identical across platforms.
"""

from __future__ import annotations

import numpy as np

VALUES = 0
MINER = 1
BIDDER = 2
AUX = 3


def stream(seed: int, step: int = 0, role: int = AUX) -> np.random.Generator:
    """Return the generator for ``(seed, step, role)``."""
    if seed < 0 or step < 0 or role < 0:
        raise ValueError("seed, step and role must be non-negative")
    bitgen = np.random.Philox(key=int(seed) & (2**128 - 1), counter=[0, int(step), int(role), 0])
    return np.random.Generator(bitgen)


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed, an existing Generator, or None (fresh entropy)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.default_rng()
    return stream(int(seed))
