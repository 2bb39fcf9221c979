"""Stable 64-bit hashing used for splits, feature buckets and template ids."""
from __future__ import annotations

from functools import lru_cache

from .kernels import fnv1a64

MASK64 = 0xFFFFFFFFFFFFFFFF


def mix64(h: int) -> int:
    """splitmix64 finalizer; spreads low-bit differences into the high bits."""
    h &= MASK64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & MASK64
    return h ^ (h >> 31)


def text_hash(text: str) -> int:
    return fnv1a64(text.encode("utf-8"))


def seeded_hash(text: str, seed: int) -> int:
    return mix64(fnv1a64(text.encode("utf-8")) ^ (seed & MASK64))


def unit_interval(text: str, seed: int) -> float:
    """Map (text, seed) to [0, 1) using the top 53 bits of the seeded hash."""
    return (seeded_hash(text, seed) >> 11) / float(1 << 53)


@lru_cache(maxsize=1 << 16)
def bucket(token: str, seed: int, buckets: int) -> int:
    return seeded_hash(token, seed) % buckets
