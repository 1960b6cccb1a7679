"""MELF: a miniature ELF-like object format (desk-scale readelf analog).

Header, 16 bytes, integers in the byte order named by ``endian``::

    0   4   magic  b"\\x7fMLF"
    4   1   class    1 = 32-bit entries, 2 = 64-bit entries
    5   1   endian   1 = little, 2 = big
    6   1   version  must be 1
    7   1   type     1 REL, 2 EXEC, 3 DYN, 4 CORE
    8   2   shnum    section count (<= 32)
    10  4   shoff    section table offset (>= 16)
    14  2   shstrndx index of the section-name string table

The magic is checked byte by byte with one mismatch edge per position.

Section entry: u8 type, u8 flags, u16 name, then offset and size as u32
(class 1, 12 bytes per entry) or u64 (class 2, 20 bytes per entry).

Section types: 0 NULL, 1 PROGBITS, 2 SYMTAB, 3 STRTAB, 4 NOTE.
Flags: 0x1 EXEC, 0x2 WRITE, 0x4 ALLOC.

Symbols are ``u32 name, u32 value`` (class 1, 8 bytes) or
``u32 name, u64 value`` (class 2, 12 bytes).  Notes are
``u32 namesz, u32 descsz, u32 type, name, desc`` with 4-byte alignment.

Planted bug ``melf-symtab-oob``: a 64-bit file whose ALLOC-flagged SYMTAB
section extends past the end of the file.  That combination skips the
bounds check and the symbol reader runs off the buffer.
"""

from __future__ import annotations

import random
import struct

from .base import ParseError, PlantedFault, TargetSpec

MAGIC = b"\x7fMLF"
HEADER_SIZE = 16
MAX_SECTIONS = 32

SHT_NULL, SHT_PROGBITS, SHT_SYMTAB, SHT_STRTAB, SHT_NOTE = range(5)
SHF_EXEC, SHF_WRITE, SHF_ALLOC = 0x1, 0x2, 0x4

TOTAL_EDGES = 67


def _cstr(table, off):
    end = table.find(b"\x00", off)
    return table[off:] if end < 0 else table[off:end]


def run(data: bytes, e) -> dict:
    e(0)
    if len(data) < HEADER_SIZE:
        e(1)
        raise ParseError("too short")
    # byte-at-a-time compare, one mismatch edge per position
    for i, edge in enumerate((2, 64, 65, 66)):
        if data[i] != MAGIC[i]:
            e(edge)
            raise ParseError("bad magic")
    e(3)
    cls, endian, version, ftype = data[4], data[5], data[6], data[7]
    if cls == 1:
        e(4)
    elif cls == 2:
        e(5)
    else:
        e(6)
        raise ParseError(f"bad class {cls}")
    if endian == 1:
        e(7)
        bo = "<"
    elif endian == 2:
        e(8)
        bo = ">"
    else:
        e(9)
        raise ParseError(f"bad byte order {endian}")
    if version != 1:
        e(10)
        raise ParseError(f"bad version {version}")
    if ftype == 1:
        e(11)
    elif ftype == 2:
        e(12)
    elif ftype == 3:
        e(13)
    elif ftype == 4:
        e(14)
    else:
        e(15)
        raise ParseError(f"bad file type {ftype}")
    shnum, shoff, shstrndx = struct.unpack_from(bo + "HIH", data, 8)
    if shnum == 0:
        e(16)
        return {"class": cls, "type": ftype, "sections": []}
    if shnum > MAX_SECTIONS:
        e(17)
        raise ParseError("too many sections")
    entsize = 12 if cls == 1 else 20
    if shoff < HEADER_SIZE:
        e(18)
        raise ParseError("section table overlaps header")
    if shoff + shnum * entsize > len(data):
        e(19)
        raise ParseError("section table out of bounds")
    if shstrndx >= shnum:
        e(20)
        raise ParseError("bad shstrndx")

    fmt = bo + ("BBHII" if cls == 1 else "BBHQQ")
    sections = []
    for i in range(shnum):
        e(21)
        stype, flags, name, off, size = struct.unpack_from(fmt, data, shoff + i * entsize)
        if stype == SHT_NULL:
            e(22)
            if size:
                e(23)
        elif stype == SHT_PROGBITS:
            e(24)
            if flags & SHF_EXEC:
                e(25)
            if flags & SHF_WRITE:
                e(26)
        elif stype == SHT_SYMTAB:
            e(27)
        elif stype == SHT_STRTAB:
            e(28)
        elif stype == SHT_NOTE:
            e(29)
        else:
            e(30)
        if flags & SHF_ALLOC:
            e(31)
        trusted = cls == 2 and stype == SHT_SYMTAB and flags & SHF_ALLOC
        if stype != SHT_NULL and not trusted:
            if off + size > len(data):
                e(32)
                raise ParseError(f"section {i} out of bounds")
            e(33)
        if size == 0:
            e(34)
        sections.append((stype, flags, name, off, size))

    names = []
    strtab_type = sections[shstrndx][0]
    if strtab_type == SHT_STRTAB:
        e(35)
        _, _, _, soff, ssize = sections[shstrndx]
        shstr = data[soff:soff + ssize]
    else:
        e(36)
        shstr = b""
    for stype, flags, name, off, size in sections:
        if not shstr:
            names.append(b"")
            continue
        if name >= len(shstr):
            e(37)
            names.append(b"")
            continue
        e(38)
        label = _cstr(shstr, name)
        if not label:
            e(39)
        elif label == b".text":
            e(40)
        elif label == b".data":
            e(41)
        elif label == b".symtab":
            e(42)
        elif label.startswith(b"."):
            e(43)
        names.append(label)

    strtabs = [s for j, s in enumerate(sections) if s[0] == SHT_STRTAB and j != shstrndx]
    symstr = b""
    if strtabs:
        _, _, _, soff, ssize = strtabs[0]
        symstr = data[soff:soff + ssize]

    symbols = []
    symtabs = 0
    spans = []
    for stype, flags, name, off, size in sections:
        if stype != SHT_NULL and size:
            spans.append((off, off + size))
        if stype == SHT_SYMTAB:
            symtabs += 1
            symbols.extend(_symbols(data, bo, cls, off, size, symstr, e))
        elif stype == SHT_NOTE:
            _notes(data[off:off + size], bo, e)
        elif stype == SHT_PROGBITS and size:
            if any(data[off:off + size]):
                e(44)
            else:
                e(45)

    if symtabs > 1:
        e(46)
    spans.sort()
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 < a1:
            e(47)
            break
    if ftype == 1 and not symtabs:
        e(48)
    if ftype == 2 and not any(s[0] == SHT_PROGBITS and s[1] & SHF_EXEC for s in sections):
        e(49)
    e(50)
    return {"class": cls, "type": ftype, "sections": names, "symbols": symbols}


def _symbols(data, bo, cls, off, size, symstr, e):
    symsize = 8 if cls == 1 else 12
    if size % symsize:
        e(51)
        raise ParseError("symbol table size not a multiple of entry size")
    fmt = bo + ("II" if cls == 1 else "IQ")
    out = []
    for k in range(size // symsize):
        e(52)
        at = off + k * symsize
        if at + symsize > len(data):
            # only reachable through the unchecked 64-bit ALLOC path
            raise PlantedFault("melf-symtab-oob", f"symbol read at {at} past end {len(data)}")
        name, value = struct.unpack_from(fmt, data, at)
        if value == 0:
            e(53)
        elif value < len(data):
            e(54)
        else:
            e(55)
        if symstr:
            e(56)
            out.append(_cstr(symstr, name) if name < len(symstr) else b"")
        else:
            e(57)
            out.append(b"")
    return out


def _notes(blob, bo, e):
    pos = 0
    while pos < len(blob):
        e(58)
        if pos + 12 > len(blob):
            e(59)
            raise ParseError("truncated note header")
        namesz, descsz, ntype = struct.unpack_from(bo + "III", blob, pos)
        pos += 12
        span = ((namesz + 3) & ~3) + ((descsz + 3) & ~3)
        if pos + span > len(blob):
            e(60)
            raise ParseError("note overruns section")
        if blob[pos:pos + namesz].rstrip(b"\x00") == b"GNU":
            e(61)
        if ntype == 1:
            e(62)
        else:
            e(63)
        pos += span


def build(
    sections: list[tuple[int, int, bytes, bytes]],
    cls: int = 1,
    endian: int = 1,
    ftype: int = 1,
    shstrndx: int | None = None,
) -> bytes:
    """Assemble a MELF file from ``(type, flags, name, content)`` tuples.

    Names are gathered into a trailing ``.shstrtab`` section that is added
    automatically unless ``shstrndx`` points elsewhere.
    """
    bo = "<" if endian == 1 else ">"
    entsize = 12 if cls == 1 else 20
    fmt = bo + ("BBHII" if cls == 1 else "BBHQQ")
    secs = list(sections)
    if shstrndx is None:
        secs.append((SHT_STRTAB, 0, b".shstrtab", b""))
        shstrndx = len(secs) - 1
    shstr = b"\x00"
    name_offs = []
    for _, _, name, _ in secs:
        name_offs.append(len(shstr))
        shstr += name + b"\x00"
    contents = [c for _, _, _, c in secs]
    contents[shstrndx] = shstr
    body = b""
    offsets = []
    for c in contents:
        offsets.append(HEADER_SIZE + len(body))
        body += c
    shoff = HEADER_SIZE + len(body)
    table = b"".join(
        struct.pack(fmt, t, f, name_offs[i], offsets[i], len(contents[i]))
        for i, (t, f, _, _) in enumerate(secs)
    )
    header = MAGIC + bytes([cls, endian, 1, ftype]) + struct.pack(bo + "HIH", len(secs), shoff, shstrndx)
    return header + body + table


def baseline(n: int, seed: int = 0) -> list[bytes]:
    """Ordinary MELF files: 32-bit little-endian with a code section."""
    rng = random.Random(seed)
    out = []
    seen = set()
    while len(out) < n:
        code = bytes(rng.randint(0, 255) for _ in range(rng.randint(4, 12)))
        secs = [(SHT_PROGBITS, SHF_EXEC | SHF_ALLOC, b".text", code)]
        if rng.random() < 0.5:
            secs.append((SHT_PROGBITS, SHF_WRITE, b".data", bytes(rng.randint(1, 8))))
        blob = build(secs, ftype=rng.choice([2, 3]))
        if blob not in seen:
            seen.add(blob)
            out.append(blob)
    return out


SPEC = TargetSpec(
    name="melf",
    run=run,
    total_edges=TOTAL_EDGES,
    planted_bugs=(
        ("melf-symtab-oob", "64-bit ALLOC SYMTAB section extending past end of file"),
    ),
    description="mini ELF-like object file (16-byte header, section table)",
    baseline=baseline,
)
