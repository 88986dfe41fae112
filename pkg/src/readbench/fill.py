"""Offset-derived file fill pattern.

The 64-bit word at byte offset ``o`` (``o`` a multiple of 8) is
``mix64(seed XOR o)``, serialized little-endian.  Content at any offset is
therefore recomputable from (seed, offset) alone and never needs a golden
copy on disk.
"""

from __future__ import annotations

import numpy as np

from .errors import VerifyError

WORD = 8


def _mix64_array(x: np.ndarray) -> np.ndarray:
    # vectorized splitmix64 finalizer; uint64 arithmetic wraps mod 2^64
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def pattern_words(seed: int, offset: int, nbytes: int) -> np.ndarray:
    """Expected little-endian uint64 words for [offset, offset+nbytes)."""
    if offset % WORD or nbytes % WORD:
        raise ValueError("offset and length must be multiples of 8")
    offs = np.arange(offset, offset + nbytes, WORD, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_array(offs ^ np.uint64(seed))


def pattern_bytes(seed: int, offset: int, nbytes: int) -> bytes:
    """Expected raw content for [offset, offset+nbytes)."""
    return pattern_words(seed, offset, nbytes).astype("<u8").tobytes()


def first_mismatch(buffer, offset: int, seed: int) -> int | None:
    """Byte offset (within the target) of the first non-matching word,
    or None if the buffer matches the pattern exactly."""
    buf = np.frombuffer(buffer, dtype="<u8")
    expected = pattern_words(seed, offset, len(buffer))
    bad = np.nonzero(buf != expected)[0]
    if bad.size == 0:
        return None
    return offset + int(bad[0]) * WORD


def verify_block(buffer, offset: int, seed: int) -> bool:
    """True iff every 8-byte word in the buffer matches the fill pattern."""
    return first_mismatch(buffer, offset, seed) is None


def check_block(buffer, offset: int, seed: int) -> None:
    """Raise VerifyError naming the first bad offset on any mismatch."""
    bad = first_mismatch(buffer, offset, seed)
    if bad is not None:
        raise VerifyError(bad)
