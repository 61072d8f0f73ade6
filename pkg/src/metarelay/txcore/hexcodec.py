"""0x-prefixed lowercase hex forms used at every service boundary."""

from __future__ import annotations

from .signing import Address


def bytes_to_hex(data: bytes) -> str:
    return "0x" + bytes(data).hex()


def hex_to_bytes(text: str) -> bytes:
    if not isinstance(text, str) or not text.lower().startswith("0x"):
        raise ValueError(f"expected 0x-prefixed hex, got {text!r}")
    body = text[2:]
    if len(body) % 2:
        raise ValueError("odd-length hex string")
    return bytes.fromhex(body)


def quantity_to_hex(value: int) -> str:
    """Minimal hex quantity, Ethereum JSON convention (0x0, 0x1, 0x4cb2f)."""
    if value < 0:
        raise ValueError("quantities are unsigned")
    return hex(value)


def hex_to_quantity(text) -> int:
    if isinstance(text, int) and not isinstance(text, bool):
        if text < 0:
            raise ValueError("quantities are unsigned")
        return text
    if not isinstance(text, str) or not text.lower().startswith("0x"):
        raise ValueError(f"expected 0x-prefixed quantity, got {text!r}")
    return int(text, 16)


def hex_to_address(text: str) -> Address:
    return Address(hex_to_bytes(text))
