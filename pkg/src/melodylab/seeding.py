"""Deterministic seed derivation so one top-level seed fixes every stage."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *tags: str | int) -> int:
    """Stable 63-bit subseed for a tagged pipeline stage."""
    digest = hashlib.sha256(
        ("/".join(str(t) for t in (seed, *tags))).encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng_for(seed: int, *tags: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *tags))
