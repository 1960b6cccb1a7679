"""AFL-style mutation stages: deterministic walks, havoc and splicing.

Every stage is a small value object; :func:`mutate` applies one to a byte
string.  Deterministic stages carry their own position, havoc and splice
draw from the ``random.Random`` instance passed in.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass

ARITH_MAX = 35
HAVOC_BLK_SMALL = 32
HAVOC_BLK_LARGE = 1500

INTERESTING_8 = (-128, -1, 0, 1, 16, 32, 64, 100, 127)
INTERESTING_16 = INTERESTING_8 + (-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767)
INTERESTING_32 = INTERESTING_16 + (-2147483648, -100663046, -32769, 32768, 65535, 65536, 100663045, 2147483647)


@dataclass(frozen=True)
class BitFlip:
    width: int  # 1, 2 or 4 consecutive bits
    pos: int  # bit offset


@dataclass(frozen=True)
class ByteFlip:
    width: int  # 1, 2 or 4 bytes
    pos: int


@dataclass(frozen=True)
class Arith:
    width: int  # 1, 2 or 4 bytes
    pos: int
    delta: int  # +-1..ARITH_MAX
    big_endian: bool = False


@dataclass(frozen=True)
class Interesting:
    width: int
    pos: int
    value: int
    big_endian: bool = False


@dataclass(frozen=True)
class Havoc:
    stack_pow2: tuple[int, int] = (1, 6)


@dataclass(frozen=True)
class Splice:
    partner: bytes
    stack_pow2: tuple[int, int] = (1, 6)


_MASK = {1: 0xFF, 2: 0xFFFF, 4: 0xFFFFFFFF}
_FMT = {1: "B", 2: "H", 4: "I"}


def _read(buf, pos, width, big):
    return struct.unpack_from((">" if big else "<") + _FMT[width], buf, pos)[0]


def _write(buf, pos, width, value, big):
    struct.pack_into((">" if big else "<") + _FMT[width], buf, pos, value & _MASK[width])


def mutate(data: bytes, stage, rng: random.Random | None = None, max_len: int = 4096) -> bytes:
    """Apply ``stage`` to ``data`` and return the mutated bytes.

    Arithmetic wraps modulo 2**(8*width), so +1 on 0xFF gives 0x00.
    """
    buf = bytearray(data)
    if isinstance(stage, BitFlip):
        for k in range(stage.width):
            bit = stage.pos + k
            buf[bit >> 3] ^= 0x80 >> (bit & 7)
    elif isinstance(stage, ByteFlip):
        for k in range(stage.width):
            buf[stage.pos + k] ^= 0xFF
    elif isinstance(stage, Arith):
        v = _read(buf, stage.pos, stage.width, stage.big_endian)
        _write(buf, stage.pos, stage.width, v + stage.delta, stage.big_endian)
    elif isinstance(stage, Interesting):
        _write(buf, stage.pos, stage.width, stage.value, stage.big_endian)
    elif isinstance(stage, Havoc):
        buf = havoc(buf, rng, stage.stack_pow2, max_len)
    elif isinstance(stage, Splice):
        buf = havoc(bytearray(splice(bytes(buf), stage.partner, rng)), rng, stage.stack_pow2, max_len)
    else:
        raise TypeError(f"unknown mutation stage {stage!r}")
    return bytes(buf)


def deterministic_stages(length: int):
    """Yield AFL's deterministic stages for an input of ``length`` bytes."""
    nbits = length * 8
    for width in (1, 2, 4):
        for pos in range(nbits - width + 1):
            yield BitFlip(width, pos)
    for width in (1, 2, 4):
        for pos in range(length - width + 1):
            yield ByteFlip(width, pos)
    for width in (1, 2, 4):
        for pos in range(length - width + 1):
            for d in range(1, ARITH_MAX + 1):
                yield Arith(width, pos, d)
                yield Arith(width, pos, -d)
                if width > 1:
                    yield Arith(width, pos, d, True)
                    yield Arith(width, pos, -d, True)
    for width, table in ((1, INTERESTING_8), (2, INTERESTING_16), (4, INTERESTING_32)):
        for pos in range(length - width + 1):
            for v in table:
                yield Interesting(width, pos, v)
                if width > 1:
                    yield Interesting(width, pos, v, True)


def _block_len(rng, limit):
    if limit <= 1:
        return 1
    hi = HAVOC_BLK_SMALL if rng.random() < 0.75 else HAVOC_BLK_LARGE
    return rng.randint(1, min(hi, limit))


def havoc(buf: bytearray, rng: random.Random, stack_pow2=(1, 6), max_len: int = 4096) -> bytearray:
    """Stack 2**k random edits (k uniform in ``stack_pow2``) onto ``buf``."""
    n_ops = 1 << rng.randint(*stack_pow2)
    for _ in range(n_ops):
        n = len(buf)
        op = rng.randrange(15)
        if op == 0:
            bit = rng.randrange(n * 8)
            buf[bit >> 3] ^= 0x80 >> (bit & 7)
        elif op == 1:
            buf[rng.randrange(n)] = rng.choice(INTERESTING_8) & 0xFF
        elif op == 2 and n >= 2:
            _write(buf, rng.randrange(n - 1), 2, rng.choice(INTERESTING_16), rng.random() < 0.5)
        elif op == 3 and n >= 4:
            _write(buf, rng.randrange(n - 3), 4, rng.choice(INTERESTING_32), rng.random() < 0.5)
        elif op in (4, 5):
            pos = rng.randrange(n)
            delta = rng.randint(1, ARITH_MAX) * (1 if op == 4 else -1)
            buf[pos] = (buf[pos] + delta) & 0xFF
        elif op == 6 and n >= 2:
            pos, big = rng.randrange(n - 1), rng.random() < 0.5
            _write(buf, pos, 2, _read(buf, pos, 2, big) + rng.randint(-ARITH_MAX, ARITH_MAX), big)
        elif op == 7 and n >= 4:
            pos, big = rng.randrange(n - 3), rng.random() < 0.5
            _write(buf, pos, 4, _read(buf, pos, 4, big) + rng.randint(-ARITH_MAX, ARITH_MAX), big)
        elif op == 8:
            buf[rng.randrange(n)] ^= rng.randint(1, 255)
        elif op in (9, 10) and n >= 2:
            # delete a block (weighted double, as in AFL)
            length = _block_len(rng, n - 1)
            pos = rng.randrange(n - length + 1)
            del buf[pos:pos + length]
        elif op == 11 and n + 1 < max_len:
            # clone an existing block or insert a constant run
            length = _block_len(rng, min(n, max_len - n))
            at = rng.randrange(n + 1)
            if rng.random() < 0.75:
                src = rng.randrange(n - length + 1)
                block = bytes(buf[src:src + length])
            else:
                block = bytes([rng.randrange(256) if rng.random() < 0.5 else buf[rng.randrange(n)]]) * length
            buf[at:at] = block
        elif op == 12 and n >= 2:
            # overwrite a block with another block or a constant
            length = _block_len(rng, n - 1)
            dst = rng.randrange(n - length + 1)
            if rng.random() < 0.75:
                src = rng.randrange(n - length + 1)
                buf[dst:dst + length] = bytes(buf[src:src + length])
            else:
                buf[dst:dst + length] = bytes([rng.randrange(256)]) * length
        elif op == 13:
            buf[rng.randrange(n)] = rng.randrange(256)
        elif op == 14 and n + 1 < max_len:
            buf.insert(rng.randrange(n + 1), rng.randrange(256))
        if not buf:
            buf.append(rng.randrange(256))
    if len(buf) > max_len:
        del buf[max_len:]
    return buf


def splice(a: bytes, b: bytes, rng: random.Random) -> bytes:
    """Prefix of ``a`` joined to the suffix of ``b`` at a point where they differ."""
    limit = min(len(a), len(b))
    first = next((i for i in range(limit) if a[i] != b[i]), None)
    if first is None:
        split = rng.randint(1, limit) if limit else 0
    else:
        last = max(i for i in range(limit) if a[i] != b[i])
        split = first if last <= first else rng.randint(first, last)
    out = a[:split] + b[split:]
    return out if out else a
