"""Deterministic randomness plumbing.

Every random draw in the library flows through a Philox counter-based bit
generator whose 128-bit key is the leading half of the SHA-256 hash of a
(seed, tag path) pair. Philox is counter-based with 64-bit words, so a given
key yields the same stream on every platform, and hashing the tag path gives
cheap, documented stream splitting: substream(seed, "s1") and
substream(seed, "s2") are independent for every seed, and nested algorithms
split further by appending tags (seed, "retry", 2).

Seeds are arbitrary Python ints; they are reduced mod 2**64 before hashing so
the documented seed space is exactly the 64-bit integers.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _encode_tag(tag) -> bytes:
    if isinstance(tag, (int, np.integer)):
        return b"i" + int(tag).to_bytes(16, "little", signed=True)
    if isinstance(tag, str):
        return b"s" + tag.encode("utf-8")
    raise TypeError(f"stream tags must be int or str, got {type(tag).__name__}")


def philox_key(seed: int, *tags) -> np.ndarray:
    """Derive the 2-word (128-bit) Philox key for a seed and tag path."""
    h = hashlib.sha256()
    h.update(int(seed & _MASK64).to_bytes(8, "little"))
    for tag in tags:
        part = _encode_tag(tag)
        h.update(len(part).to_bytes(4, "little"))
        h.update(part)
    return np.frombuffer(h.digest()[:16], dtype="<u8")


def substream(seed: int, *tags) -> np.random.Generator:
    """A fresh generator on the named substream of ``seed``."""
    return np.random.Generator(np.random.Philox(key=philox_key(seed, *tags)))


def derive_seed(seed: int, *tags) -> int:
    """A 64-bit child seed for handing to a nested component.

    derive_seed(s, "a") and derive_seed(s, "b") index disjoint key spaces, and
    substreams split from a derived seed stay disjoint from the parent's.
    """
    return int(philox_key(seed, "derive", *tags)[0])
