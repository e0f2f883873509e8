"""Sets of memorized sequence ids over a dense ordinal universe.

Ids are training-order ordinals, so a set is equivalent to a binary indicator
vector over [0, universe_bound). Statistics run on dense 64-bit-word bitsets
when the universe fits (< 2^31 ids), and on sorted id arrays otherwise; both
backends are exact and interchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Universes at or above this many ids skip the dense bitset representation.
DENSE_LIMIT = 1 << 31


def _as_sorted_ids(ids) -> np.ndarray:
    arr = np.array(ids, dtype=np.uint64).ravel()
    if arr.size and np.any(arr[1:] <= arr[:-1]):
        arr = np.unique(arr)
    arr.flags.writeable = False
    return arr


def pack_bitset(ids: np.ndarray, bound: int) -> np.ndarray:
    """Dense bitset of ``bound`` bits as little-endian u64 words."""
    nwords = (bound + 63) // 64
    flags = np.zeros(nwords * 64, dtype=bool)
    if ids.size:
        flags[ids[ids < np.uint64(bound)].astype(np.int64)] = True
    return np.packbits(flags, bitorder="little").view("<u8")


def popcount(words: np.ndarray) -> int:
    return int(np.bitwise_count(words).sum())


def _truncate_words(words: np.ndarray, bound: int) -> np.ndarray:
    """Mask off the bits at or above ``bound`` (copy only when needed)."""
    nwords = (bound + 63) // 64
    out = words[:nwords]
    rem = bound % 64
    if rem:
        out = out.copy()
        out[-1] &= np.uint64((1 << rem) - 1)
    return out


@dataclass(frozen=True, eq=False)
class MemorizedSet:
    """Ids with memorization score 1 at one threshold for one (model, checkpoint)."""

    ids: np.ndarray
    universe_bound: int
    threshold: int
    owner: tuple[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "ids", _as_sorted_ids(self.ids))
        if self.universe_bound < 0:
            raise ValueError(f"universe_bound must be >= 0, got {self.universe_bound}")
        if self.ids.size and int(self.ids[-1]) >= self.universe_bound:
            raise ValueError(
                f"id {int(self.ids[-1])} outside universe bound {self.universe_bound}")

    @property
    def label(self) -> str:
        if self.owner is None:
            return "<anonymous>"
        return f"{self.owner[0]}@{self.owner[1]}"

    def __len__(self) -> int:
        return int(self.ids.size)

    def __contains__(self, seq_id: int) -> bool:
        i = int(np.searchsorted(self.ids, np.uint64(seq_id)))
        return i < self.ids.size and int(self.ids[i]) == seq_id

    def count_below(self, bound: int) -> int:
        return int(np.searchsorted(self.ids, np.uint64(bound), side="left"))

    def restricted(self, bound: int) -> "MemorizedSet":
        bound = min(bound, self.universe_bound)
        return MemorizedSet(self.ids[: self.count_below(bound)], bound,
                            self.threshold, self.owner)

    @cached_property
    def _words(self) -> np.ndarray:
        return pack_bitset(self.ids, self.universe_bound)

    def uses_dense(self) -> bool:
        return self.universe_bound < DENSE_LIMIT

    def indicator(self, bound: int | None = None) -> np.ndarray:
        """Expanded 0/1 vector; intended for small universes and oracles."""
        if bound is None:
            bound = self.universe_bound
        flags = np.zeros(bound, dtype=np.uint8)
        below = self.count_below(bound)
        flags[self.ids[:below].astype(np.int64)] = 1
        return flags


def intersection_count(a: MemorizedSet, b: MemorizedSet, bound: int) -> int:
    """|a ∩ b| among ids below ``bound``."""
    if bound <= 0:
        return 0
    if a.uses_dense() and b.uses_dense():
        return _intersection_count_dense(a, b, bound)
    return _intersection_count_sparse(a, b, bound)


def _intersection_count_dense(a: MemorizedSet, b: MemorizedSet, bound: int) -> int:
    wa = _truncate_words(a._words, min(bound, a.universe_bound))
    wb = _truncate_words(b._words, min(bound, b.universe_bound))
    n = min(wa.size, wb.size)
    return popcount(wa[:n] & wb[:n])


def _intersection_count_sparse(a: MemorizedSet, b: MemorizedSet, bound: int) -> int:
    ia = a.ids[: a.count_below(bound)]
    ib = b.ids[: b.count_below(bound)]
    return int(np.intersect1d(ia, ib, assume_unique=True).size)
