import pytest
from hypothesis import given, strategies as st

from deepcabac.bitio import BitSink, BitSource
from deepcabac.errors import ContractError, TruncatedStreamError


def test_write_three_bits_msb_first():
    s = BitSink()
    s.write_bits(0b101, 3)
    assert s.bit_position == 3
    assert s.getvalue()[0] >> 5 == 0b101


def test_write_zero_byte():
    s = BitSink()
    s.write_bits(0, 8)
    assert s.getvalue() == b"\x00"


def test_one_then_seven_zeros_is_0x80():
    s = BitSink()
    s.write_bits(1, 1)
    s.write_bits(0, 7)
    assert s.getvalue() == b"\x80"


@pytest.mark.parametrize("value,count", [(2, 1), (256, 8), (-1, 4), (0, 0), (0, 65)])
def test_write_rejects_out_of_range(value, count):
    with pytest.raises(ContractError):
        BitSink().write_bits(value, count)


def test_read_single_bit():
    assert BitSource(b"\x80").read_bits(1) == 1


def test_read_past_end_raises():
    src = BitSource(b"\xff")
    src.read_bits(5)
    with pytest.raises(TruncatedStreamError):
        src.read_bits(4)
    assert src.cursor == 5


@pytest.mark.parametrize("start,expected", [(3, 8), (8, 8), (0, 0)])
def test_align_to_byte(start, expected):
    s = BitSink()
    if start:
        s.write_bits(0, start)
    s.align_to_byte()
    assert s.bit_position == expected


pairs = st.integers(1, 64).flatmap(lambda n: st.tuples(st.integers(0, 2 ** n - 1), st.just(n)))


@given(st.lists(pairs, max_size=50))
def test_interleaved_roundtrip(seq):
    s = BitSink()
    for v, n in seq:
        s.write_bits(v, n)
    total = s.bit_position
    s.align_to_byte()
    data = s.getvalue()
    assert len(data) == (total + 7) // 8
    src = BitSource(data)
    assert [src.read_bits(n) for _, n in seq] == [v for v, _ in seq]


@given(st.binary(max_size=20), st.integers(0, 7))
def test_bytes_helpers_at_any_alignment(data, offset):
    s = BitSink()
    if offset:
        s.write_bits(0, offset)
    s.write_bytes(data)
    src = BitSource(s.getvalue())
    if offset:
        src.read_bits(offset)
    assert src.read_bytes(len(data)) == data
