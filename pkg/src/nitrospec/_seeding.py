"""Seed derivation shared by every stochastic stage.

Seeds are derived from ``(master_seed, key, key, ...)`` through
:class:`numpy.random.SeedSequence`, so a task's random stream depends only on
its identity and never on scheduling order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def derive_seed(master: int, *keys) -> int:
    """Return a 63-bit integer seed for the task identified by ``keys``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_as_key(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int((int(hi) << 32 | int(lo)) & 0x7FFF_FFFF_FFFF_FFFF)


def rng_for(master: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_as_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
