"""
Stable seed derivation for reproducible parallel work.
"""

import hashlib

import numpy as np

MASK_64 = (1 << 64) - 1


def derive_seed(master_seed: int, *parts: object) -> int:
    """
    Derive a child seed from a master seed and identifying parts.

    The hash is stable across processes and Python versions, so a child
    seed does not depend on scheduling order or PYTHONHASHSEED.
    """
    key = ":".join([str(master_seed & MASK_64)] + [str(part) for part in parts])
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")


def child_rng(master_seed: int, *parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *parts))
