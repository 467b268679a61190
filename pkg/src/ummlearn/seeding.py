"""Named deterministic RNG streams derived from a single master seed.

Every consumer of randomness (weight init, dropout, data generation,
shuffling, ...) owns a stream keyed by name, so adding or removing one
consumer never perturbs the draws seen by any other.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(master_seed: int, name: str) -> int:
    """64-bit child seed for the stream ``name`` under ``master_seed``."""
    digest = hashlib.sha256(f"{master_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream_rng(master_seed: int, name: str) -> np.random.Generator:
    """Fresh generator for the named stream."""
    return np.random.default_rng(stream_seed(master_seed, name))
