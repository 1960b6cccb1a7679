"""Byte testcases <-> fixed-width normalised rows for the networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import MAX_TESTCASE_LEN, Testcase

ALIGN = 32
PAD_VALUE = -1.0


@dataclass(frozen=True)
class EncodedBatch:
    rows: np.ndarray  # (n, maxlen) float64 in [-1, 1]
    maxlen: int
    original_lengths: tuple[int, ...]

    def __post_init__(self):
        if self.maxlen % ALIGN:
            raise ValueError(f"maxlen {self.maxlen} is not a multiple of {ALIGN}")
        if self.rows.shape != (len(self.original_lengths), self.maxlen):
            raise ValueError("rows shape does not match lengths/maxlen")

    def __len__(self):
        return len(self.original_lengths)

    def row(self, i: int) -> np.ndarray:
        return self.rows[i]


def compute_maxlen(lengths, literal: bool = False) -> int:
    """Round the longest length up to a multiple of 32.

    With ``literal=True`` the update ``m + (32 - m % 32)`` is applied as
    written, which moves an already aligned length up by a full 32.
    """
    lengths = list(lengths)
    if not lengths:
        raise ValueError("compute_maxlen needs at least one length")
    m = max(lengths)
    if m < 1:
        raise ValueError("lengths must be positive")
    if literal or m % ALIGN:
        return m + (ALIGN - m % ALIGN)
    return m


def normalize(raw: np.ndarray) -> np.ndarray:
    return (np.asarray(raw, dtype=np.float64) - 128.0) / 128.0


def encode(testcases, hard_cap: int = MAX_TESTCASE_LEN, maxlen: int | None = None, literal: bool = False) -> EncodedBatch:
    """Zero-pad every testcase to a shared aligned width, then normalise.

    Accepts :class:`Testcase` objects or raw byte strings.  ``maxlen`` forces
    a width (it must be aligned and fit the longest input).
    """
    blobs = [tc.data if isinstance(tc, Testcase) else bytes(tc) for tc in testcases]
    if not blobs:
        raise ValueError("nothing to encode")
    for i, b in enumerate(blobs):
        if not b:
            raise ValueError(f"testcase {i} is empty")
        if len(b) > hard_cap:
            raise ValueError(f"testcase {i} has {len(b)} bytes, over the {hard_cap}-byte cap")
    lengths = [len(b) for b in blobs]
    width = compute_maxlen(lengths, literal) if maxlen is None else maxlen
    if width % ALIGN or width < max(lengths):
        raise ValueError(f"maxlen {width} cannot hold inputs of length {max(lengths)}")
    raw = np.zeros((len(blobs), width), dtype=np.uint8)
    for i, b in enumerate(blobs):
        raw[i, : len(b)] = np.frombuffer(b, dtype=np.uint8)
    return EncodedBatch(normalize(raw), width, tuple(lengths))


def decode(row, min_len: int = 1) -> bytes:
    """Inverse of the normalisation with clamping and trailing-zero trimming.

    Trailing 0x00 bytes are treated as padding and removed, but the result
    never drops below ``min_len`` bytes.
    """
    v = np.asarray(row, dtype=np.float64).ravel()
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    if len(v) < min_len:
        raise ValueError(f"row width {len(v)} shorter than min_len {min_len}")
    v = np.nan_to_num(v, nan=-1.0, posinf=1.0, neginf=-1.0)
    raw = np.clip(np.rint(v * 128.0 + 128.0), 0, 255).astype(np.uint8)
    nz = np.flatnonzero(raw)
    end = int(nz[-1]) + 1 if len(nz) else 0
    return raw[: max(end, min_len)].tobytes()


def batches(batch, batch_size: int, rng: np.random.Generator):
    """Shuffled mini-batches covering every row once; the last may be short."""
    rows = batch.rows if isinstance(batch, EncodedBatch) else np.asarray(batch)
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = rng.permutation(len(rows))
    for start in range(0, len(rows), batch_size):
        yield rows[order[start:start + batch_size]]
