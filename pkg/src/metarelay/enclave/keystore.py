"""The trusted keystore: signing identities, spending policy, serialization.

Plaintext instances exist only inside the boundary; at rest the keystore is a
sealed blob. The binary layout is length-prefixed and versioned with a format
byte so sealing is deterministic and roundtrips exactly.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Optional

from ..txcore.signing import Address, derive_address
from .errors import KeystoreFormatError

_FORMAT_VERSION = 1


class Role(enum.Enum):
    MASTER = 1
    SECONDARY = 2


@dataclass(frozen=True)
class PendingTx:
    tx_hash: bytes
    nonce: int


@dataclass
class AccountRecord:
    address: Address
    private_key: int  # scalar; serialized only inside sealed blobs
    next_nonce: int
    role: Role
    pending: list = field(default_factory=list)

    @property
    def busy(self) -> bool:
        return bool(self.pending)


@dataclass(frozen=True)
class SpendingPolicy:
    max_gas_limit: int
    max_gas_price: int
    default_gas_price: int
    allowed_recipients: Optional[frozenset] = None

    def __post_init__(self):
        if self.default_gas_price > self.max_gas_price:
            raise ValueError("default_gas_price above max_gas_price")
        if self.allowed_recipients is not None:
            object.__setattr__(self, "allowed_recipients",
                               frozenset(Address(a) for a in self.allowed_recipients))


class Keystore:
    """Exactly one master account plus any number of secondaries."""

    def __init__(self, accounts: list, policy: SpendingPolicy, version: int,
                 channel_key: int, chain_id: int,
                 forwarder: Optional[Address] = None):
        masters = [a for a in accounts if a.role is Role.MASTER]
        if len(masters) != 1:
            raise ValueError(f"expected exactly one master, got {len(masters)}")
        self.accounts: dict = {a.address: a for a in accounts}
        if len(self.accounts) != len(accounts):
            raise ValueError("duplicate account address")
        self.policy = policy
        self.version = version
        self.channel_key = channel_key
        self.chain_id = chain_id
        self.forwarder = forwarder

    @property
    def master(self) -> AccountRecord:
        for record in self.accounts.values():
            if record.role is Role.MASTER:
                return record
        raise AssertionError("keystore lost its master account")

    def secondaries(self) -> list:
        return [a for a in self.accounts.values() if a.role is Role.SECONDARY]

    def bump(self) -> None:
        self.version += 1

    def __eq__(self, other) -> bool:
        return isinstance(other, Keystore) and self.to_bytes() == other.to_bytes()

    # -- canonical binary form ------------------------------------------------

    def to_bytes(self) -> bytes:
        out = bytearray()
        out += struct.pack(">BQQ", _FORMAT_VERSION, self.version, self.chain_id)
        if self.forwarder is None:
            out += b"\x00"
        else:
            out += b"\x01" + bytes(self.forwarder)
        out += _encode_policy(self.policy)
        out += self.channel_key.to_bytes(32, "big")
        out += struct.pack(">I", len(self.accounts))
        for record in self.accounts.values():
            out += bytes(record.address)
            out += record.private_key.to_bytes(32, "big")
            out += struct.pack(">QB", record.next_nonce, record.role.value)
            out += struct.pack(">H", len(record.pending))
            for entry in record.pending:
                out += entry.tx_hash + struct.pack(">Q", entry.nonce)
        return bytes(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Keystore":
        reader = _Reader(raw)
        try:
            fmt, version, chain_id = struct.unpack(">BQQ", reader.take(17))
            if fmt != _FORMAT_VERSION:
                raise KeystoreFormatError(f"unsupported format byte {fmt}")
            forwarder = None
            if reader.take(1) == b"\x01":
                forwarder = Address(reader.take(20))
            policy = _decode_policy(reader)
            channel_key = int.from_bytes(reader.take(32), "big")
            (count,) = struct.unpack(">I", reader.take(4))
            accounts = []
            for _ in range(count):
                address = Address(reader.take(20))
                private_key = int.from_bytes(reader.take(32), "big")
                next_nonce, role_value = struct.unpack(">QB", reader.take(9))
                (n_pending,) = struct.unpack(">H", reader.take(2))
                pending = []
                for _ in range(n_pending):
                    tx_hash = reader.take(32)
                    (nonce,) = struct.unpack(">Q", reader.take(8))
                    pending.append(PendingTx(tx_hash, nonce))
                if derive_address(private_key) != address:
                    raise KeystoreFormatError("account key does not match address")
                accounts.append(AccountRecord(address, private_key, next_nonce,
                                              Role(role_value), pending))
            reader.expect_end()
            return cls(accounts, policy, version, channel_key, chain_id, forwarder)
        except KeystoreFormatError:
            raise
        except (struct.error, ValueError, IndexError) as exc:
            raise KeystoreFormatError(str(exc)) from exc


def _encode_policy(policy: SpendingPolicy) -> bytes:
    out = bytearray()
    out += struct.pack(">Q", policy.max_gas_limit)
    out += policy.max_gas_price.to_bytes(32, "big")
    out += policy.default_gas_price.to_bytes(32, "big")
    if policy.allowed_recipients is None:
        out += b"\x00"
    else:
        out += b"\x01" + struct.pack(">H", len(policy.allowed_recipients))
        for address in sorted(policy.allowed_recipients):
            out += bytes(address)
    return bytes(out)


def _decode_policy(reader: "_Reader") -> SpendingPolicy:
    (max_gas_limit,) = struct.unpack(">Q", reader.take(8))
    max_gas_price = int.from_bytes(reader.take(32), "big")
    default_gas_price = int.from_bytes(reader.take(32), "big")
    allowed = None
    if reader.take(1) == b"\x01":
        (n,) = struct.unpack(">H", reader.take(2))
        allowed = frozenset(Address(reader.take(20)) for _ in range(n))
    return SpendingPolicy(max_gas_limit, max_gas_price, default_gas_price, allowed)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise KeystoreFormatError("truncated keystore blob")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def expect_end(self) -> None:
        if self.pos != len(self.raw):
            raise KeystoreFormatError("trailing bytes after keystore")
