"""Seed derivation and random-number streams.

All randomness in the toolkit flows from 64-bit integer seeds through
Philox counter-based generators.  Independent streams are derived by
hashing a root seed together with a tag tuple (BLAKE2b, 8-byte digest),
so e.g. the bottom-level graph of (top node 3, mid node 1) always sees
the same stream no matter what happened to any other sub-graph.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(root: int, *tags) -> int:
    """Derive a child seed from ``root`` and a tuple of tags.

    Tags may be ints, floats, strings or bytes.  Floats are hashed by
    their IEEE-754 bit pattern so 0.1 and 0.1000000001 derive different
    streams while repr rounding cannot bite.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", root & MASK64))
    for tag in tags:
        if isinstance(tag, bool):
            h.update(b"b" + struct.pack("<?", tag))
        elif isinstance(tag, int):
            h.update(b"i" + struct.pack("<Q", tag & MASK64))
        elif isinstance(tag, float):
            h.update(b"f" + struct.pack("<d", tag))
        elif isinstance(tag, str):
            h.update(b"s" + tag.encode("utf-8"))
        elif isinstance(tag, bytes):
            h.update(b"y" + tag)
        else:
            raise TypeError(f"unhashable seed tag type: {type(tag)!r}")
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


def generator(seed: int) -> np.random.Generator:
    """Counter-based generator for the given 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & MASK64))
