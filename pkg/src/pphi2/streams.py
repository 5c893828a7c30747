"""Counter-based random streams.

Every Monte Carlo consumer asks for a generator keyed by ``(seed, stream,
index)``. The Philox key holds ``(seed, stream)`` and the counter starts at a
block reserved for ``index``, so draws never depend on scheduling or on how
many other streams exist.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream_rng", "spawn_seeds"]

_MASK = (1 << 64) - 1


def stream_rng(seed: int, stream: int = 0, index: int = 0) -> np.random.Generator:
    """Generator for block ``index`` of stream ``stream`` under ``seed``."""
    if seed < 0 or stream < 0 or index < 0:
        raise ValueError("seed, stream and index must be non-negative")
    key = np.array([seed & _MASK, stream & _MASK], dtype=np.uint64)
    counter = np.array([0, 0, 0, index & _MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """``n`` derived 64-bit seeds, used to label independent chains in manifests."""
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in ss.spawn(n)]
