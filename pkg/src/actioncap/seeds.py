"""Deterministic seed derivation.

Every random stream in the package is derived from a master seed plus a
tuple of string/int tags, so independent jobs (folds, variants, samples)
get decorrelated streams without any global RNG state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts: object) -> int:
    """Hash arbitrary tags into a stable 32-bit seed."""
    key = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def rng_for(*parts: object) -> np.random.Generator:
    """A fresh numpy Generator seeded from the given tags."""
    return np.random.default_rng(derive_seed(*parts))
