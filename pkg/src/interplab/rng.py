"""Labelled, counter-based random streams.

All randomness flows from one integer seed. Each consumer asks for a
stream by label (and optional integer indices), so adding a new consumer
never shifts the draws of an existing one. Streams are Philox generators
whose 128-bit key is a hash of ``(seed, label, *indices)``.
"""

import hashlib

import numpy as np

__all__ = ["stream", "derive_seed"]


def _key(seed, label, indices):
    text = "|".join([str(int(seed)), label, *(str(int(i)) for i in indices)])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=16).digest(), "little")


def stream(seed, label, *indices):
    """Return an independent ``numpy.random.Generator`` for ``(seed, label, *indices)``."""
    return np.random.Generator(np.random.Philox(key=_key(seed, label, indices)))


def derive_seed(seed, label, *indices):
    """A 63-bit child seed, e.g. for per-trial sub-runs."""
    return _key(seed, label, indices) >> 65
