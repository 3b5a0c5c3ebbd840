"""Seeded counter-based random streams.

Every stochastic routine takes an explicit :class:`numpy.random.Generator`.
Streams are Philox generators keyed by ``(master seed, *key)``, so a replica
block can be regenerated from its key alone, on any worker.
"""
import os
import zlib

import numpy as np

SEED_ENV = "XSENSE_SEED"
DEFAULT_SEED = 20240101


def default_seed():
    """Seed from ``$XSENSE_SEED`` if set, else a fixed default."""
    value = os.environ.get(SEED_ENV)
    return int(value) if value else DEFAULT_SEED


def stream(seed, *key):
    """Philox stream for ``(seed, *key)``; distinct keys give independent streams.

    String key parts are mapped to integers by CRC-32, which is stable across runs.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _key_part(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def as_generator(rng):
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return stream(default_seed())
    return stream(int(rng))
