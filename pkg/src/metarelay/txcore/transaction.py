"""Legacy transaction construction: preimage, raw encoding, fee arithmetic.

Only type-0 transactions with a present recipient are supported; the signing
preimage folds the chain id in (v = 2 * chain_id + 35 + recovery_id).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import rlp
from .keccak import keccak256
from .rlp import RLPDecodeError
from .signing import Address, Signature, recover_signer

MIN_GAS_LIMIT = 21000
UINT256_MAX = (1 << 256) - 1
UINT64_MAX = (1 << 64) - 1


class TransactionDecodeError(ValueError):
    """Raw bytes are not a canonical signed legacy transaction."""


class InvalidVError(TransactionDecodeError):
    """v below the replay-protected range."""


@dataclass(frozen=True)
class UnsignedTransaction:
    nonce: int
    gas_price: int
    gas_limit: int
    to: Address
    value: int
    data: bytes

    def __post_init__(self):
        _check_range("nonce", self.nonce, UINT64_MAX)
        _check_range("gas_price", self.gas_price, UINT256_MAX)
        _check_range("gas_limit", self.gas_limit, UINT64_MAX)
        _check_range("value", self.value, UINT256_MAX)
        if self.gas_limit < MIN_GAS_LIMIT:
            raise ValueError(f"gas_limit below intrinsic minimum {MIN_GAS_LIMIT}")
        if not isinstance(self.to, Address):
            object.__setattr__(self, "to", Address(self.to))
        if not isinstance(self.data, bytes):
            object.__setattr__(self, "data", bytes(self.data))

    def fields(self) -> list:
        return [self.nonce, self.gas_price, self.gas_limit, bytes(self.to),
                self.value, self.data]


@dataclass(frozen=True)
class SignedTransaction:
    tx: UnsignedTransaction
    sig: Signature
    chain_id: int

    @property
    def v(self) -> int:
        return 2 * self.chain_id + 35 + self.sig.recovery_id

    @property
    def raw(self) -> bytes:
        return encode_signed(self.tx, self.sig, self.chain_id)

    @property
    def tx_hash(self) -> bytes:
        return keccak256(self.raw)

    def signer(self) -> Address:
        return recover_signer(signing_preimage(self.tx, self.chain_id), self.sig)


def signing_preimage(tx: UnsignedTransaction, chain_id: int) -> bytes:
    """Replay-protected signing digest: keccak of the nine-field RLP list."""
    return keccak256(rlp.encode(tx.fields() + [chain_id, 0, 0]))


def encode_signed(tx: UnsignedTransaction, sig: Signature, chain_id: int) -> bytes:
    v = 2 * chain_id + 35 + sig.recovery_id
    return rlp.encode(tx.fields() + [v, sig.r, sig.s])


def decode_signed(raw: bytes) -> SignedTransaction:
    """Exact inverse of encode_signed; chain id is recomputed from v."""
    try:
        items = rlp.decode(raw)
    except RLPDecodeError as exc:
        raise TransactionDecodeError(f"bad RLP: {exc}") from exc
    if not isinstance(items, list) or len(items) != 9:
        raise TransactionDecodeError("expected a nine-item list")
    if not all(isinstance(item, bytes) for item in items):
        raise TransactionDecodeError("nested list in transaction fields")
    try:
        nonce, gas_price, gas_limit, to, value, data, v_b, r_b, s_b = items
        v = rlp.decode_int(v_b)
        if v < 35:
            raise InvalidVError(f"v={v} lacks replay protection")
        chain_id = (v - 35) // 2
        recovery_id = (v - 35) % 2
        tx = UnsignedTransaction(
            nonce=rlp.decode_int(nonce),
            gas_price=rlp.decode_int(gas_price),
            gas_limit=rlp.decode_int(gas_limit),
            to=Address(to),
            value=rlp.decode_int(value),
            data=data,
        )
        sig = Signature(rlp.decode_int(r_b), rlp.decode_int(s_b), recovery_id)
    except InvalidVError:
        raise
    except (ValueError, RLPDecodeError) as exc:
        raise TransactionDecodeError(str(exc)) from exc
    return SignedTransaction(tx=tx, sig=sig, chain_id=chain_id)


def compute_fee(gas_used: int, gas_price: int) -> int:
    """Exact fee in wei: gas consumed times the price per gas unit."""
    return gas_used * gas_price


def _check_range(name: str, value: int, limit: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError(f"{name} must be an int")
    if not 0 <= value <= limit:
        raise ValueError(f"{name} out of range")
