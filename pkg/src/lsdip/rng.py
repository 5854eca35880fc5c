"""Deterministic, label-split random number generation.

Every stochastic component of the pipeline (mask lines, phantom geometry,
latent inputs, weight init, ...) draws from a generator keyed by a base seed
plus a short string label.  Runs with the same seed are bitwise reproducible
on one platform; cross-language bit-equality of the draws themselves is not
promised, only the invariants they feed.
"""

import hashlib

import numpy as np

__all__ = ["rng_for"]


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Return a Generator for (seed, label), independent across labels."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, _label_key(label)])
