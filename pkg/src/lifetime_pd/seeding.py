"""Derived random streams.

Every stochastic input is drawn from ``PCG64`` seeded by a
``SeedSequence(master_seed, spawn_key=keys)``, so a replication's numbers
depend only on (master_seed, keys) and never on execution order.
"""

from __future__ import annotations

import zlib

import numpy as np


def key_of(label: str | int) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def substream(seed: int, *keys: str | int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key_of(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
