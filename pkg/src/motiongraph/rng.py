"""Seed discipline: every random draw comes from one root seed.

Components never call ``np.random`` directly; they ask for a named
substream so that runs are reproducible bit-for-bit and adding a new
consumer of randomness cannot shift the draws of an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, *names: str | int) -> int:
    """Stable 64-bit seed for the substream identified by ``names``."""
    h = hashlib.sha256()
    h.update(str(int(root_seed)).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "little")


def substream(root_seed: int, *names: str | int) -> np.random.Generator:
    """Generator for the named substream of ``root_seed``."""
    return np.random.Generator(np.random.PCG64(derive_seed(root_seed, *names)))
