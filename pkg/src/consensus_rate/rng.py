"""Keyed random streams.

Every stream is derived from a master seed plus an integer key path, so a
trial (or a batch of trials) can be regenerated without replaying anything
that came before it.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    full, rest = divmod(int(total), int(chunk))
    return [chunk] * full + ([rest] if rest else [])
