"""Deterministic seed derivation for named random streams."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Hash an arbitrary tuple of ints/strings into a 63-bit seed.

    Stable across processes and Python versions (no use of ``hash()``).
    """
    text = "\x1f".join(repr(p) for p in parts).encode()
    digest = hashlib.sha256(text).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def stream(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
