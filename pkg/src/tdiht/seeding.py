"""Seeded random streams.

All randomness goes through numpy's PCG64 bit generator seeded from a
``SeedSequence``. A stream is identified by a base seed plus an optional
tuple of integer keys (cell index, trial index, ...), so parallel workers
derive the same stream no matter the execution order.
"""

import secrets

import numpy as np

__all__ = ["make_rng", "derive_seed", "fresh_seed"]


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def fresh_seed() -> int:
    return secrets.randbits(63)
