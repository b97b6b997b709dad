"""Counter-based seeded random streams.

A stream is fully identified by a ``(seed, stream)`` pair of unsigned 64-bit
integers, mapped onto a Philox counter-based bit generator.  The same pair
always reproduces the same draw sequence, independent of process, thread
count, or what any other stream has drawn.  Deriving child streams by tag
lets data generation, weight init and per-frame augmentation stay
reproducible under any parallel schedule.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# domain separators so child(5) and child("5") differ
_INT_TAG_SALT = 0x9E3779B97F4A7C15
_STR_TAG_SALT = 0xC2B2AE3D27D4EB4F


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, bool):
        raise TypeError("stream tags must be int or str, not bool")
    if isinstance(tag, int):
        return _splitmix64((tag & _MASK64) ^ _INT_TAG_SALT)
    if isinstance(tag, str):
        digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
        return _splitmix64(int.from_bytes(digest, "little") ^ _STR_TAG_SALT)
    raise TypeError(f"stream tags must be int or str, got {type(tag).__name__}")


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by (seed, stream id)."""

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", self.seed & _MASK64)
        object.__setattr__(self, "stream", self.stream & _MASK64)

    def child(self, *tags: int | str) -> "RngStream":
        """Derive a sub-stream; same tags always give the same sub-stream."""
        h = self.stream
        for tag in tags:
            h = _splitmix64(h ^ _tag_to_int(tag))
        return RngStream(self.seed, h)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))
