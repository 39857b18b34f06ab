"""Deterministic seed splitting.

Every component derives its own 64-bit seed from the run seed and a label
path: ``derive_seed(root, "client", 3)`` hashes ``"<root>/client/3"`` with
SHA-256 and keeps the first eight bytes (little-endian). Labels, not call
order, decide the stream, so adding a component never perturbs another.
"""

import hashlib

import numpy as np


def derive_seed(root: int, *labels) -> int:
    text = "/".join([str(int(root))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def rng_for(root: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *labels))
