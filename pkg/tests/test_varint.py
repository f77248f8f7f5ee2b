import pytest
from hypothesis import given, strategies as st

from ellf import varint
from ellf.errors import NonCanonical, TruncatedTable, VarintOverflow


@pytest.mark.parametrize("value,expected", [
    (0, b"\x00"),
    (1, b"\x01"),
    (127, b"\x7f"),
    (128, b"\x80\x01"),
    (300, b"\xac\x02"),
    (16384, b"\x80\x80\x01"),
    ((1 << 64) - 1, b"\xff" * 9 + b"\x01"),
])
def test_unsigned_known_values(value, expected):
    assert varint.encode_unsigned(value) == expected
    assert varint.decode_unsigned(expected, 0) == (value, len(expected))


@given(st.integers(0, (1 << 64) - 1))
def test_unsigned_roundtrip(value):
    data = varint.encode_unsigned(value)
    assert varint.decode_unsigned(data, 0) == (value, len(data))


@given(st.integers(-(1 << 64) + 1, (1 << 64) - 1))
def test_signed_roundtrip(value):
    data = varint.encode_signed(value)
    assert varint.decode_signed(data, 0) == (value, len(data))


@pytest.mark.parametrize("value,expected", [
    (0, b"\x00"), (-1, b"\x01"), (1, b"\x02"), (-2, b"\x03"), (2, b"\x04"),
])
def test_zigzag_layout(value, expected):
    assert varint.encode_signed(value) == expected


def test_non_minimal_rejected():
    with pytest.raises(NonCanonical):
        varint.decode_unsigned(b"\x80\x00", 0)
    with pytest.raises(NonCanonical):
        varint.decode_unsigned(b"\xff\x80\x80\x00", 0)


def test_truncated_rejected():
    with pytest.raises(TruncatedTable):
        varint.decode_unsigned(b"\x80", 0)
    with pytest.raises(TruncatedTable):
        varint.decode_unsigned(b"", 0)


def test_overflow_rejected():
    with pytest.raises(VarintOverflow):
        varint.decode_unsigned(b"\xff" * 9 + b"\x02", 0)  # 2**64
    with pytest.raises(VarintOverflow):
        varint.decode_unsigned(b"\x80" * 10 + b"\x01", 0)


def test_negative_unsigned_rejected():
    with pytest.raises(ValueError):
        varint.encode_unsigned(-1)
