"""Seed discipline: one 64-bit root seed, children derived by labeled hashing.

Every stochastic component takes (seed, label) so that reruns with a fixed
root seed replay bit-identically and parallel workers never share streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def child_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(child_seed(seed, label)))
