"""Deterministic random-stream derivation.

All randomness in the toolkit flows through named substreams split from a
single 64-bit master seed. A substream is identified by a path of string or
integer labels; the path is hashed (SHA-256) into entropy for a numpy
SeedSequence, so streams are independent of the order in which they are
created and stable across process runs. The bit generator is PCG64.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "child_seed"]


def _path_entropy(master_seed: int, path: tuple) -> int:
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode("ascii"))
    for part in path:
        h.update(b"/")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "little")


def substream(master_seed: int, *path) -> np.random.Generator:
    """Return an independent PCG64 generator for (master_seed, *path)."""
    entropy = _path_entropy(master_seed, path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def child_seed(master_seed: int, *path) -> int:
    """Derive a 63-bit integer seed for (master_seed, *path)."""
    return _path_entropy(master_seed, path) & 0x7FFF_FFFF_FFFF_FFFF
