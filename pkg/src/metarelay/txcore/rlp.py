"""Recursive length prefix serialization with strict canonical decoding.

Items are byte strings or (arbitrarily nested) lists of items. Integers are
accepted on the encode side and become minimal big-endian byte strings, the
scalar convention used by transaction encoding; decoding always yields byte
strings, use :func:`decode_int` for scalar fields.
"""

from __future__ import annotations

from typing import Union

RLPItem = Union[bytes, int, list]


class RLPDecodeError(ValueError):
    """Raised for truncated, non-canonical, or trailing input."""


def encode_int(value: int) -> bytes:
    """Minimal big-endian byte string; zero encodes as the empty string."""
    if value < 0:
        raise ValueError("RLP scalars are unsigned")
    if value == 0:
        return b""
    return value.to_bytes((value.bit_length() + 7) // 8, "big")


def decode_int(data: bytes) -> int:
    if data[:1] == b"\x00":
        raise RLPDecodeError("scalar has leading zero byte")
    return int.from_bytes(data, "big")


def _header(length: int, offset: int) -> bytes:
    if length <= 55:
        return bytes([offset + length])
    length_bytes = length.to_bytes((length.bit_length() + 7) // 8, "big")
    return bytes([offset + 55 + len(length_bytes)]) + length_bytes


def encode(item: RLPItem) -> bytes:
    if isinstance(item, bool):
        raise TypeError("bool is not an RLP item")
    if isinstance(item, int):
        item = encode_int(item)
    if isinstance(item, (bytes, bytearray)):
        item = bytes(item)
        if len(item) == 1 and item[0] < 0x80:
            return item
        return _header(len(item), 0x80) + item
    if isinstance(item, (list, tuple)):
        payload = b"".join(encode(sub) for sub in item)
        return _header(len(payload), 0xC0) + payload
    raise TypeError(f"cannot RLP-encode {type(item).__name__}")


def decode(data: bytes) -> RLPItem:
    """Inverse of :func:`encode`; rejects every non-canonical encoding."""
    item, consumed = _decode_at(bytes(data), 0)
    if consumed != len(data):
        raise RLPDecodeError(f"{len(data) - consumed} trailing bytes")
    return item


def _read_length(data: bytes, pos: int, n_length_bytes: int) -> tuple[int, int]:
    end = pos + n_length_bytes
    if end > len(data):
        raise RLPDecodeError("truncated length prefix")
    length_bytes = data[pos:end]
    if length_bytes[0] == 0:
        raise RLPDecodeError("length prefix has leading zero")
    length = int.from_bytes(length_bytes, "big")
    if length <= 55:
        raise RLPDecodeError("long form used for short payload")
    return length, end


def _decode_at(data: bytes, pos: int) -> tuple[RLPItem, int]:
    if pos >= len(data):
        raise RLPDecodeError("empty input")
    prefix = data[pos]
    if prefix < 0x80:
        return bytes([prefix]), pos + 1
    if prefix <= 0xB7:
        length = prefix - 0x80
        end = pos + 1 + length
        if end > len(data):
            raise RLPDecodeError("truncated string")
        payload = data[pos + 1:end]
        if length == 1 and payload[0] < 0x80:
            raise RLPDecodeError("single byte below 0x80 must encode as itself")
        return payload, end
    if prefix <= 0xBF:
        length, start = _read_length(data, pos + 1, prefix - 0xB7)
        end = start + length
        if end > len(data):
            raise RLPDecodeError("truncated string")
        return data[start:end], end
    if prefix <= 0xF7:
        length = prefix - 0xC0
        return _decode_list_payload(data, pos + 1, length)
    length, start = _read_length(data, pos + 1, prefix - 0xF7)
    return _decode_list_payload(data, start, length)


def _decode_list_payload(data: bytes, start: int, length: int) -> tuple[list, int]:
    end = start + length
    if end > len(data):
        raise RLPDecodeError("truncated list")
    items = []
    pos = start
    while pos < end:
        item, pos = _decode_at(data, pos)
        if pos > end:
            raise RLPDecodeError("list item overruns payload")
        items.append(item)
    return items, end
