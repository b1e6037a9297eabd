"""Counter-based random streams.

Every random draw in a run descends from one 64-bit seed.  A stream is
addressed by a purpose tag and a tuple of integer counters (config index,
trial index, ...).  The address is hashed by :class:`numpy.random.SeedSequence`
into a Philox key, so the stream for trial ``t`` is the same no matter which
worker evaluates it or in what order trials are visited.
"""

from __future__ import annotations

import numpy as np

# Purpose tags are frozen: changing a code changes every stream it addresses.
PURPOSES = {
    "scene": 1,
    "fading": 2,
    "void": 3,
    "bootstrap": 4,
    "users": 5,
    "sample": 6,
    "identity": 7,
}

SEED_MASK = (1 << 64) - 1


class Streams:
    """Factory for independent, reproducible generators keyed on (purpose, counters)."""

    def __init__(self, seed: int):
        seed = int(seed)
        if seed < 0 or seed > SEED_MASK:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed

    def generator(self, purpose: str, *counters: int) -> np.random.Generator:
        try:
            tag = PURPOSES[purpose]
        except KeyError:
            raise ValueError(f"unknown stream purpose {purpose!r}") from None
        ss = np.random.SeedSequence(self.seed, spawn_key=(tag, *map(int, counters)))
        return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))

    def __repr__(self):
        return f"Streams(seed={self.seed})"


def as_streams(seed_or_streams) -> Streams:
    if isinstance(seed_or_streams, Streams):
        return seed_or_streams
    return Streams(seed_or_streams)


def split(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent child generators from ``rng``'s next draws."""
    keys = rng.integers(0, np.iinfo(np.uint64).max, size=(n, 2), dtype=np.uint64, endpoint=True)
    return [np.random.Generator(np.random.Philox(key=key)) for key in keys]
