"""Deterministic random-number streams.

All randomness in voxsynth flows through numpy ``Generator`` objects backed
by the Philox 4x64 counter-based bit generator, which produces identical
streams on every platform for a given key.  Independent streams are derived
from a master seed plus a string label via SHA-256:

    key = SHA256("{master_seed}/{label}/{label}/...")[:16]  (little-endian)

so every pipeline stage, column fit, and tree is independently reproducible
from the master seed alone.
"""

import hashlib

import numpy as np

__all__ = ["derive_seed", "spawn", "gumbel"]


def derive_seed(master_seed: int, *labels: str) -> int:
    """Derive a 128-bit child seed from a master seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode("ascii"))
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "little")


def spawn(master_seed: int, *labels: str) -> np.random.Generator:
    """Create an independent Philox stream for ``labels`` under ``master_seed``."""
    return np.random.Generator(np.random.Philox(key=derive_seed(master_seed, *labels)))


def gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel(0, 1) noise, computed as -log(-log(U))."""
    u = rng.random(shape)
    # Guard against log(0); rng.random() is in [0, 1).
    return -np.log(-np.log(np.clip(u, 1e-300, 1.0 - 1e-16)))
