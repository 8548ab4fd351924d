"""Deterministic named RNG substreams.

All randomness in the toolkit flows from one master seed through
`substream(master, *keys)`, where keys are stage names and sample indices.
Streams are independent of worker scheduling, so parallel maps reproduce
single-threaded results exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def substream(*keys) -> np.random.Generator:
    """Generator seeded by the tuple of keys (ints or strings)."""
    if not keys:
        raise ValueError("substream needs at least one key")
    return np.random.default_rng([_key_to_int(k) for k in keys])
