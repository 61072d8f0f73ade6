"""Account-level signing primitives: addresses, signatures, recovery."""

from __future__ import annotations

from dataclasses import dataclass

from . import secp256k1
from .keccak import keccak256
from .secp256k1 import InvalidScalarError, RecoveryError


class Address(bytes):
    """20-byte account identifier; canonical text form is 0x-prefixed lowercase."""

    def __new__(cls, value: bytes) -> "Address":
        value = bytes(value)
        if len(value) != 20:
            raise ValueError(f"address must be 20 bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def from_hex(cls, text: str) -> "Address":
        if text.lower().startswith("0x"):
            text = text[2:]
        return cls(bytes.fromhex(text))

    def to_hex(self) -> str:
        return "0x" + self.hex()

    def __repr__(self) -> str:
        return f"Address({self.to_hex()})"


@dataclass(frozen=True)
class Signature:
    """ECDSA signature; signing always emits s <= n/2, decoding tolerates more."""

    r: int
    s: int
    recovery_id: int

    def __post_init__(self):
        if not 0 < self.r < secp256k1.N:
            raise ValueError("r out of range")
        if not 0 < self.s < secp256k1.N:
            raise ValueError("s out of range")
        if self.recovery_id not in (0, 1):
            raise ValueError("recovery_id must be 0 or 1")

    @property
    def is_low_s(self) -> bool:
        return self.s <= secp256k1.HALF_N


def address_of_point(point: tuple[int, int]) -> Address:
    return Address(keccak256(secp256k1.encode_point(point))[12:])


def derive_address(private_key: bytes | int) -> Address:
    """Address of the key: last 20 bytes of keccak256 of the public x || y."""
    scalar = _as_scalar(private_key)
    return address_of_point(secp256k1.public_point(scalar))


def sign_digest(private_key: bytes | int, digest: bytes) -> Signature:
    """Deterministic low-s ECDSA over a 32-byte digest."""
    scalar = _as_scalar(private_key)
    r, s, recovery_id = secp256k1.sign(scalar, digest)
    return Signature(r, s, recovery_id)


def recover_signer(digest: bytes, sig: Signature) -> Address:
    """Address whose key produced ``sig`` over ``digest``; pure function."""
    point = secp256k1.recover(digest, sig.r, sig.s, sig.recovery_id)
    return address_of_point(point)


def _as_scalar(private_key: bytes | int) -> int:
    if isinstance(private_key, int):
        return secp256k1.validate_scalar(private_key)
    return secp256k1.scalar_from_bytes(private_key)


__all__ = [
    "Address",
    "Signature",
    "InvalidScalarError",
    "RecoveryError",
    "address_of_point",
    "derive_address",
    "sign_digest",
    "recover_signer",
]
