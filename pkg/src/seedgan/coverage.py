"""Edge coverage maps, AFL-style hit-count buckets and path hashing."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_MAP_SIZE = 1 << 16

# raw hit count -> bucket class, AFL's count_class_lookup8
_CLASS = np.zeros(256, dtype=np.uint8)
_CLASS[1] = 1
_CLASS[2] = 2
_CLASS[3] = 4
_CLASS[4:8] = 8
_CLASS[8:16] = 16
_CLASS[16:32] = 32
_CLASS[32:128] = 64
_CLASS[128:] = 128
BUCKET_LOOKUP = _CLASS


def bucketize(counts: np.ndarray) -> np.ndarray:
    """Map raw 8-bit hit counts to their bucket classes."""
    return BUCKET_LOOKUP[np.asarray(counts, dtype=np.uint8)]


_FEATURE_BITS: dict[tuple[int, int], np.ndarray] = {}


def _feature_bits(slot: int, cls: int) -> np.ndarray:
    key = (slot, cls)
    bits = _FEATURE_BITS.get(key)
    if bits is None:
        digest = hashlib.blake2b(key[0].to_bytes(4, "little") + bytes([cls]), digest_size=8).digest()
        raw = np.unpackbits(np.frombuffer(digest, dtype=np.uint8), bitorder="little")
        bits = raw.astype(np.int32) * 2 - 1
        _FEATURE_BITS[key] = bits
    return bits


_BIT_WEIGHTS = [1 << i for i in range(64)]


def simhash64(slots: np.ndarray, classes: np.ndarray) -> int:
    """64-bit SimHash over the (slot, bucket class) feature set.

    Equal bucketized maps hash equally; maps that share most features land
    at a small Hamming distance, which makes the hash usable as a cheap
    path-divergence measure.
    """
    if len(slots) == 0:
        return 0
    acc = np.zeros(64, dtype=np.int32)
    for s, c in zip(slots.tolist(), classes.tolist()):
        acc += _feature_bits(s, c)
    return sum(w for w, v in zip(_BIT_WEIGHTS, acc.tolist()) if v > 0)


def hamming64(a: int, b: int) -> int:
    return ((a ^ b) & 0xFFFF_FFFF_FFFF_FFFF).bit_count()


class CoverageMap:
    """Fixed-size array of saturating 8-bit edge hit counters.

    Stored sparsely (slot indices plus counts) because bundled targets touch
    a few dozen slots out of a 64k map; :meth:`dense` materialises the array.
    """

    __slots__ = ("size", "slots", "counts", "__dict__")

    def __init__(self, size: int = DEFAULT_MAP_SIZE, slots=None, counts=None):
        if size <= 0 or size & (size - 1):
            raise ValueError(f"map size must be a power of two, got {size}")
        self.size = size
        self.slots = np.asarray(slots if slots is not None else [], dtype=np.int64)
        self.counts = np.asarray(counts if counts is not None else [], dtype=np.uint8)
        if len(self.slots) and int(self.slots.max()) >= size:
            raise ValueError("slot index outside map")

    @classmethod
    def from_hits(cls, hits, size: int = DEFAULT_MAP_SIZE) -> CoverageMap:
        """Build from a per-edge hit list; edge id ``i`` lands in slot ``i mod size``."""
        arr = np.asarray(hits, dtype=np.int64)
        idx = np.flatnonzero(arr)
        counts = np.minimum(arr[idx], 255).astype(np.uint8)
        if len(idx) and int(idx.max()) >= size:
            idx = idx & (size - 1)
            merged: Counter[int] = Counter()
            for s, c in zip(idx.tolist(), counts.tolist()):
                merged[s] += c
            idx = np.array(sorted(merged), dtype=np.int64)
            counts = np.array([min(merged[s], 255) for s in idx.tolist()], dtype=np.uint8)
        return cls(size, idx, counts)

    @classmethod
    def from_dense(cls, arr: np.ndarray) -> CoverageMap:
        arr = np.asarray(arr, dtype=np.uint8)
        idx = np.flatnonzero(arr)
        return cls(len(arr), idx, arr[idx])

    def dense(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.uint8)
        out[self.slots] = self.counts
        return out

    @cached_property
    def classes(self) -> np.ndarray:
        return BUCKET_LOOKUP[self.counts]

    @property
    def nonzero(self) -> int:
        return len(self.slots)

    @cached_property
    def path_hash(self) -> int:
        return simhash64(self.slots, self.classes)

    def __eq__(self, other):
        if not isinstance(other, CoverageMap):
            return NotImplemented
        return (
            self.size == other.size
            and np.array_equal(self.slots, other.slots)
            and np.array_equal(self.counts, other.counts)
        )

    def __repr__(self):
        return f"CoverageMap(size={self.size}, nonzero={self.nonzero})"


@dataclass
class GlobalCoverageState:
    """Cumulative coverage plus the history used by the quality filter.

    ``classes`` holds the highest bucket class ever recorded per slot.
    ``entry_hashes`` maps testcase ids to their path hash so mutated inputs
    can be compared with their parent.
    """

    size: int = DEFAULT_MAP_SIZE
    classes: np.ndarray = field(default=None)
    coverage_history: Counter = field(default_factory=Counter)
    history_total: int = 0
    entry_hashes: dict = field(default_factory=dict)
    baseline_hash: int | None = None

    def __post_init__(self):
        if self.classes is None:
            self.classes = np.zeros(self.size, dtype=np.uint8)

    @property
    def covered(self) -> int:
        return int(np.count_nonzero(self.classes))

    def record_outcome(self, nonzero: int) -> None:
        """Append one outcome's nonzero-edge count to the percentile history."""
        self.coverage_history[nonzero] += 1
        self.history_total += 1

    def coverage_percentile(self, q: float) -> float | None:
        """Nearest-rank ``q``-th percentile of recorded nonzero-edge counts."""
        if not self.history_total:
            return None
        rank = max(1, int(np.ceil(q / 100.0 * self.history_total)))
        seen = 0
        for value in sorted(self.coverage_history):
            seen += self.coverage_history[value]
            if seen >= rank:
                return float(value)
        return float(max(self.coverage_history))

    def parent_hash(self, parent_id: str | None) -> int | None:
        if parent_id is not None and parent_id in self.entry_hashes:
            return self.entry_hashes[parent_id]
        return self.baseline_hash

    def copy(self) -> GlobalCoverageState:
        return GlobalCoverageState(
            self.size,
            self.classes.copy(),
            Counter(self.coverage_history),
            self.history_total,
            dict(self.entry_hashes),
            self.baseline_hash,
        )
