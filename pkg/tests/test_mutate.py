import random

import pytest
from hypothesis import given, settings, strategies as st

from seedgan.mutate import (
    ARITH_MAX,
    Arith,
    BitFlip,
    ByteFlip,
    Havoc,
    Interesting,
    Splice,
    deterministic_stages,
    havoc,
    mutate,
    splice,
)


def test_bitflip_first_bit():
    assert mutate(b"\x00", BitFlip(1, 0)) == b"\x80"
    assert mutate(b"\x00\x00", BitFlip(2, 7)) == b"\x01\x80"
    assert mutate(b"\x00", BitFlip(4, 4)) == b"\x0f"


def test_byteflip():
    assert mutate(b"\x0f\xf0\x00", ByteFlip(2, 1)) == b"\x0f\x0f\xff"


def test_arith_wraps():
    assert mutate(b"\xff", Arith(1, 0, 1)) == b"\x00"
    assert mutate(b"\x00", Arith(1, 0, -1)) == b"\xff"
    assert mutate(b"\xff\x00", Arith(2, 0, 1)) == b"\x00\x01"  # little-endian carry
    assert mutate(b"\x00\xff", Arith(2, 0, 1, big_endian=True)) == b"\x01\x00"


def test_interesting_values():
    assert mutate(b"\x00\x00", Interesting(2, 0, -1)) == b"\xff\xff"
    assert mutate(b"\x00\x00\x00\x00", Interesting(4, 0, 65536, big_endian=True)) == b"\x00\x01\x00\x00"


def test_unknown_stage():
    with pytest.raises(TypeError):
        mutate(b"a", object())


def test_deterministic_stage_counts():
    n = 5
    stages = list(deterministic_stages(n))
    bitflips = sum(isinstance(s, BitFlip) for s in stages)
    assert bitflips == (8 * n) + (8 * n - 1) + (8 * n - 3)
    byteflips = sum(isinstance(s, ByteFlip) for s in stages)
    assert byteflips == n + (n - 1) + (n - 3)
    arith = sum(isinstance(s, Arith) for s in stages)
    assert arith == 2 * ARITH_MAX * n + 4 * ARITH_MAX * (n - 1) + 4 * ARITH_MAX * (n - 3)
    assert all(abs(s.delta) <= ARITH_MAX for s in stages if isinstance(s, Arith))


def test_splice_prefix_suffix():
    a, b = b"AAAAAAAA", b"AABBBBBBBBBB"
    for seed in range(50):
        out = splice(a, b, random.Random(seed))
        # prefix of a followed by suffix of b
        k = next(i for i in range(len(out) + 1) if out[:i] == a[:i] and out[i:] == b[i:])
        assert 0 <= k <= len(a)
        assert min(len(a), len(b)) <= len(out) <= len(a) + len(b)


@settings(max_examples=300, deadline=None)
@given(st.binary(min_size=1, max_size=200), st.integers(0, 2**32), st.integers(1, 512))
def test_havoc_respects_bounds_and_is_deterministic(data, seed, max_len):
    data = data[:max_len]
    a = mutate(data, Havoc(), random.Random(seed), max_len)
    b = mutate(data, Havoc(), random.Random(seed), max_len)
    assert a == b
    assert 1 <= len(a) <= max_len


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=1, max_size=64), st.binary(min_size=1, max_size=64), st.integers(0, 2**32))
def test_splice_stage_bounded(a, b, seed):
    out = mutate(a, Splice(b), random.Random(seed), 256)
    assert 1 <= len(out) <= 256


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=1, max_size=16))
def test_deterministic_stages_change_input_or_collide(data):
    for stage in deterministic_stages(len(data)):
        out = mutate(data, stage)
        assert len(out) == len(data)
        if isinstance(stage, (BitFlip, ByteFlip)):
            assert out != data  # flips always change something
