"""Deterministic random-number substreams.

Every stochastic routine in this package takes an explicit 64-bit seed and
derives independent substreams from it with :func:`substream`.  Substreams are
keyed by a path of integers/strings, so results never depend on scheduling or
worker count: the chain for template 7 of replicate 3 is the same whether it
runs first, last, or on another process.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"substream path parts must be nonnegative, got {part}")
        return int(part)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big")
    raise TypeError(f"substream path parts must be int or str, got {type(part).__name__}")


def substream(seed: int, *path) -> np.random.Generator:
    """Return a generator for the substream of ``seed`` addressed by ``path``."""
    key = tuple(_key_part(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
