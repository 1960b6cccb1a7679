"""CNK: a chunked container format.

Layout (all integers little-endian)::

    0   4   magic  b"CNK1"
    4   2   u16 chunk count (<= 64)
    6   ..  chunks: u8 tag, u16 len, payload[len]

Chunk tags:

    0x00  padding (payload ignored)
    0x01  HEAD   u16 version (1..3), u16 flags, optional name bytes
    0x02  TEXT   printable text, ``key=<digits>`` recognised; needs HEAD first
    0x03  INTS   packed i32 array
    0x10  CSUM   u32 sum of every payload byte seen before this chunk
    0x20  NEST   u8 count followed by that many chunks (depth <= 3)
    0x7F  EXT    u8 kind + opaque data

The magic is compared one byte at a time, and each mismatch position has
its own edge, the way a short-circuit ``memcmp`` loop behaves in C.

Planted bugs:

    cnk-ext-overflow  an EXT chunk whose len runs past the end of its
                      container while that container declares more than 3
                      chunks
    cnk-csum-magic    a CSUM chunk holding 0xDEADBEEF
"""

from __future__ import annotations

import random
import struct

from .base import ParseError, PlantedFault, TargetSpec

MAGIC = b"CNK1"
MAX_CHUNKS = 64
MAX_DEPTH = 3

TAG_PAD = 0x00
TAG_HEAD = 0x01
TAG_TEXT = 0x02
TAG_INTS = 0x03
TAG_CSUM = 0x10
TAG_NEST = 0x20
TAG_EXT = 0x7F

TOTAL_EDGES = 61


class _State:
    __slots__ = ("head", "encrypted", "compressed", "checksum", "chunks", "keys")

    def __init__(self):
        self.head = False
        self.encrypted = False
        self.compressed = False
        self.checksum = 0
        self.chunks = []
        self.keys = {}


def _u16(buf, off):
    return buf[off] | (buf[off + 1] << 8)


def _head(payload, e, st):
    e(8)
    if st.head:
        e(9)
        raise ParseError("duplicate HEAD chunk")
    if len(payload) < 4:
        e(10)
        raise ParseError("HEAD chunk too short")
    st.head = True
    version = _u16(payload, 0)
    flags = _u16(payload, 2)
    if version == 1:
        e(11)
    elif version == 2:
        e(12)
    elif version == 3:
        e(13)
    else:
        e(14)
        raise ParseError(f"unsupported version {version}")
    if flags & 0x8000:
        e(15)
        raise ParseError("reserved flag set")
    if flags & 0x1:
        e(16)
        st.compressed = True
    if flags & 0x2:
        e(17)
        st.encrypted = True
    if len(payload) > 4:
        e(18)


def _text(payload, e, st):
    e(19)
    if not st.head:
        e(20)
        raise ParseError("TEXT before HEAD")
    if not payload:
        e(21)
        return
    if all(32 <= b < 127 for b in payload):
        e(22)
        if payload.startswith(b"key="):
            e(23)
            value = payload[4:]
            if value.isdigit():
                e(24)
                st.keys[len(st.keys)] = int(value)
            elif not value:
                e(25)
    else:
        e(26)
        if st.encrypted:
            e(27)
        elif st.compressed:
            e(28)


def _ints(payload, e, st):
    e(29)
    if len(payload) % 4:
        e(30)
        raise ParseError("INTS payload not a multiple of 4")
    values = struct.unpack(f"<{len(payload) // 4}i", payload)
    for v in values:
        e(31)
        if v == 0:
            e(32)
        elif v < 0:
            e(33)
        elif v > 0xFFFF:
            e(34)
    if len(values) > 1 and list(values) == sorted(values):
        e(35)


def _csum(payload, e, st):
    e(36)
    if len(payload) != 4:
        e(37)
        raise ParseError("CSUM payload must be 4 bytes")
    value = struct.unpack("<I", payload)[0]
    if value == 0xDEADBEEF:
        e(38)
        raise PlantedFault("cnk-csum-magic", "checksum sentinel dereferenced")
    if value == st.checksum & 0xFFFFFFFF:
        e(39)
    else:
        e(40)


def _ext(payload, e, st):
    e(41)
    if not payload:
        e(42)
        return
    kind = payload[0]
    if kind == 0:
        e(43)
    elif kind == 1:
        e(44)
        if len(payload) > 1 and st.head:
            e(45)
    else:
        e(46)


def _chunks(data, pos, count, e, st, depth):
    for _ in range(count):
        e(6)
        if pos + 3 > len(data):
            e(7)
            raise ParseError("truncated chunk header")
        tag = data[pos]
        length = _u16(data, pos + 1)
        pos += 3
        if length > len(data) - pos:
            if tag == TAG_EXT:
                e(47)
                if count > 3:
                    e(48)
                    raise PlantedFault(
                        "cnk-ext-overflow",
                        f"EXT len {length} overruns container at {pos}",
                    )
            e(49)
            raise ParseError("truncated chunk payload")
        payload = data[pos:pos + length]
        pos += length
        if tag == TAG_HEAD:
            _head(payload, e, st)
        elif tag == TAG_TEXT:
            _text(payload, e, st)
        elif tag == TAG_INTS:
            _ints(payload, e, st)
        elif tag == TAG_CSUM:
            _csum(payload, e, st)
        elif tag == TAG_NEST:
            e(50)
            if depth + 1 >= MAX_DEPTH:
                e(51)
                raise ParseError("nesting too deep")
            if not payload:
                e(52)
                raise ParseError("empty NEST chunk")
            end = _chunks(payload, 1, payload[0], e, st, depth + 1)
            if end < len(payload):
                e(53)
        elif tag == TAG_EXT:
            _ext(payload, e, st)
        elif tag == TAG_PAD:
            e(54)
        else:
            e(55)
        st.checksum += sum(payload)
        st.chunks.append(tag)
    return pos


def run(data: bytes, e) -> dict:
    e(0)
    if len(data) < 6:
        e(1)
        raise ParseError("too short")
    # byte-at-a-time compare, one mismatch edge per position
    for i, edge in enumerate((2, 58, 59, 60)):
        if data[i] != MAGIC[i]:
            e(edge)
            raise ParseError("bad magic")
    e(3)
    count = _u16(data, 4)
    if count == 0:
        e(4)
        return {"chunks": [], "keys": {}}
    if count > MAX_CHUNKS:
        e(5)
        raise ParseError("too many chunks")
    st = _State()
    pos = _chunks(data, 6, count, e, st, 0)
    if pos < len(data):
        e(56)
    if not st.head:
        e(57)
    return {"chunks": st.chunks, "keys": st.keys}


def chunk(tag: int, payload: bytes) -> bytes:
    return struct.pack("<BH", tag, len(payload)) + payload


def container(*chunks: bytes) -> bytes:
    return MAGIC + struct.pack("<H", len(chunks)) + b"".join(chunks)


def head(version: int = 1, flags: int = 0, name: bytes = b"") -> bytes:
    return chunk(TAG_HEAD, struct.pack("<HH", version, flags) + name)


def csum_for(*chunks: bytes) -> bytes:
    """CSUM chunk matching the payload bytes of ``chunks``."""
    total = 0
    for c in chunks:
        total += sum(c[3:])
    return chunk(TAG_CSUM, struct.pack("<I", total & 0xFFFFFFFF))


def baseline(n: int, seed: int = 0) -> list[bytes]:
    """Ordinary CNK files: HEAD v1 followed by one or two plain chunks."""
    rng = random.Random(seed)
    words = [b"hello", b"world", b"title", b"note", b"readme", b"data"]
    out = []
    seen = set()
    while len(out) < n:
        body = [head(1, 0)]
        for _ in range(rng.randint(1, 2)):
            if rng.random() < 0.5:
                body.append(chunk(TAG_TEXT, rng.choice(words) + bytes([rng.randint(97, 122)])))
            else:
                vals = [rng.randint(1, 500) for _ in range(rng.randint(1, 3))]
                body.append(chunk(TAG_INTS, struct.pack(f"<{len(vals)}i", *vals)))
        blob = container(*body)
        if blob not in seen:
            seen.add(blob)
            out.append(blob)
    return out


SPEC = TargetSpec(
    name="cnk",
    run=run,
    total_edges=TOTAL_EDGES,
    planted_bugs=(
        ("cnk-ext-overflow", "EXT (0x7F) chunk len exceeds remaining bytes with count > 3"),
        ("cnk-csum-magic", "CSUM chunk value equals 0xDEADBEEF"),
    ),
    description="chunked container (magic CNK1, u16 count, tag/len/payload chunks)",
    baseline=baseline,
)
