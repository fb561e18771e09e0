"""Keyed random substreams.

Every random draw in the package comes from a ``numpy.random.Generator``
backed by PCG64 and seeded through ``SeedSequence``.  The entropy for a
substream is the global seed followed by 64-bit words derived from the
key parts (BLAKE2b of their string form), so the stream for a given
``(seed, customer, date, ...)`` does not depend on iteration order or on
how work is scheduled.
"""

from __future__ import annotations

import hashlib

import numpy as np


def key_word(part: object) -> int:
    digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *keys: object) -> np.random.Generator:
    """Independent generator for ``seed`` and an ordered tuple of keys."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [key_word(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
