"""Fenwick-style prefix partitioning and the level geometry derived from it.

For a time step ``t`` the prefix ``[0, t]`` is split greedily into a sentinel
singleton ``{t}`` (level 0) plus one bucket per set bit of ``t``: repeatedly
clear the least significant set bit of the remaining boundary; the cleared
range becomes a bucket whose level is the bit position plus one.  A bucket at
level ``l >= 1`` therefore always has size ``2**(l - 1)``, buckets are
disjoint, and their union is exactly ``[0, t]``.

``level_of(t, s)`` is the level of the bucket of ``s`` inside the partition
for ``t``; ``level_of_fast`` computes the same value from the most significant
bit of ``t ^ s`` without building the partition.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractViolation


@dataclass(frozen=True)
class Bucket:
    level: int
    start: int
    end_inclusive: int

    @property
    def size(self) -> int:
        return self.end_inclusive - self.start + 1


@dataclass(frozen=True)
class BucketDecomposition:
    t: int
    buckets: tuple[Bucket, ...]


def lssb(t: int) -> int:
    """Index of the least significant set bit: largest l with 2**l | t."""
    if t < 1:
        raise ContractViolation(f"lssb undefined for t={t}")
    return (t & -t).bit_length() - 1


@lru_cache(maxsize=None)
def bucket_decomposition(t: int) -> BucketDecomposition:
    """Greedy power-of-two partition of the prefix [0, t]."""
    if t < 0:
        raise ContractViolation(f"negative time index t={t}")
    buckets = [Bucket(0, t, t)]
    b = t
    while b > 0:
        nb = b & (b - 1)  # clear the least significant set bit
        buckets.append(Bucket(lssb(b) + 1, nb, b - 1))
        b = nb
    return BucketDecomposition(t, tuple(buckets))


def level_of(t: int, s: int) -> int:
    """Level of the bucket containing s in the partition for t."""
    if not 0 <= s <= t:
        raise ContractViolation(f"require 0 <= s <= t, got t={t} s={s}")
    for bucket in bucket_decomposition(t).buckets:
        if bucket.start <= s <= bucket.end_inclusive:
            return bucket.level
    raise AssertionError("bucket partition failed to cover s")  # pragma: no cover


def level_of_fast(t: int, s: int) -> int:
    """Closed form for level_of: 0 if s == t, else msb(t ^ s) + 1."""
    if not 0 <= s <= t:
        raise ContractViolation(f"require 0 <= s <= t, got t={t} s={s}")
    return (t ^ s).bit_length()


def level_row(t: int) -> np.ndarray:
    """Levels of every s in [0, t], filled straight from the partition."""
    row = np.empty(t + 1, dtype=np.int64)
    for bucket in bucket_decomposition(t).buckets:
        row[bucket.start : bucket.end_inclusive + 1] = bucket.level
    return row


def num_levels(t_len: int) -> int:
    """Number of level indices needed for sequences of length t_len."""
    if t_len < 1:
        raise ContractViolation(f"sequence length must be >= 1, got {t_len}")
    if t_len == 1:
        return 1
    return (t_len - 1).bit_length() + 1


@lru_cache(maxsize=None)
def _level_mask_cached(level: int, t_len: int) -> np.ndarray:
    if level == 0:
        mask = np.eye(t_len, dtype=bool)
    else:
        i = np.arange(t_len)[:, None]
        j = np.arange(t_len)[None, :]
        half = 1 << (level - 1)
        clipped = i - (i % half)
        mask = ((i // half) % 2 == 1) & (j >= clipped - half) & (j < clipped)
    mask.setflags(write=False)
    return mask


def level_mask(level: int, t_len: int) -> np.ndarray:
    """Boolean (t_len x t_len) mask, true where level_of(t, s) == level.

    The returned array is cached and read-only.
    """
    if not 0 <= level <= num_levels(t_len) - 1:
        raise ContractViolation(
            f"level {level} out of range for t_len={t_len} "
            f"(max {num_levels(t_len) - 1})"
        )
    return _level_mask_cached(level, t_len)


def level_presence(t_len: int) -> np.ndarray:
    """(t_len x num_levels) booleans: which levels are nonempty at each step.

    Level 0 is always live; level l >= 1 is live at step t iff bit (l - 1) of
    t is set.
    """
    levels = num_levels(t_len)
    t = np.arange(t_len)[:, None]
    present = np.zeros((t_len, levels), dtype=bool)
    present[:, 0] = True
    for lev in range(1, levels):
        present[:, lev] = (t[:, 0] >> (lev - 1)) & 1 == 1
    return present
