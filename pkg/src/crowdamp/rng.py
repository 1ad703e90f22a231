"""Seeded, splittable random streams.

All sampling in this package goes through :func:`stream_rng`, which builds a
counter-based Philox generator from a 64-bit master seed plus an optional
stream key. Sweeps derive independent per-instance streams from
``(master_seed, grid_index, ...)`` without any coordination.
"""

from __future__ import annotations

import numpy as np


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Return a Generator for the stream ``key`` derived from ``seed``.

    The same ``(seed, key)`` always yields the same stream; distinct keys
    yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def fresh_seed() -> int:
    """Draw a seed from OS entropy (for CLI runs that omit --seed)."""
    return int(np.random.SeedSequence().entropy % (2**63))
