"""The simulated trusted boundary: keystore custody, signing, nonce discipline.

Every public method on :class:`Enclave` models an ECall. Calls serialize on an
internal lock; any keystore mutation is resealed to host storage before the
call returns. The optional transcript records every byte that crosses the
boundary in either direction, which is how key-confinement is tested.
"""

from __future__ import annotations

import logging
import secrets
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .. import envelope as envelope_mod
from ..requests import MetaTxRequest, RequestParseError
from ..txcore import secp256k1
from ..txcore.forward import encode_forward_calldata
from ..txcore.keccak import keccak256
from ..txcore.secp256k1 import InvalidPointError
from ..txcore.signing import Address, derive_address, sign_digest
from ..txcore.transaction import (
    MIN_GAS_LIMIT,
    UnsignedTransaction,
    encode_signed,
    signing_preimage,
)
from .errors import (
    AccountBusyError,
    AlreadyInitializedError,
    HashMismatchError,
    InvalidOwnerKeyError,
    NoPendingError,
    PolicyViolationError,
    UninitializedError,
    UnknownAccountError,
)
from .keystore import AccountRecord, Keystore, PendingTx, Role, SpendingPolicy
from .sealing import derive_sealing_key, seal, unseal

log = logging.getLogger(__name__)

# Build identity constant; stands in for a real code measurement. Owners
# verify this value out of band before trusting an initialization receipt.
ENCLAVE_MEASUREMENT = keccak256(b"metarelay enclave build 1")


@dataclass(frozen=True)
class InitReceipt:
    master_address: Address
    encrypted_master_key: bytes  # envelope bytes, decryptable only by the owner
    measurement: bytes
    channel_pubkey: bytes


@dataclass(frozen=True)
class SignResult:
    raw: bytes
    tx_hash: bytes
    signer: Address


@dataclass(frozen=True)
class EnclaveInfo:
    initialized: bool
    measurement: bytes
    master_address: Optional[Address]
    secondary_addresses: tuple
    channel_pubkey: Optional[bytes]
    policy: Optional[SpendingPolicy]
    chain_id: Optional[int]
    forwarder: Optional[Address]


class HostStorage:
    """Untrusted host side: persists sealed blobs and the freshest version."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._blob_path = self.directory / "keystore.sealed"
        self._version_path = self.directory / "keystore.version"

    def load_blob(self) -> Optional[bytes]:
        if self._blob_path.exists():
            return self._blob_path.read_bytes()
        return None

    def store_blob(self, blob: bytes) -> None:
        tmp = self._blob_path.with_suffix(".tmp")
        tmp.write_bytes(blob)
        tmp.replace(self._blob_path)

    def last_seen_version(self) -> int:
        if self._version_path.exists():
            return int(self._version_path.read_text().strip() or "0")
        return 0

    def record_version(self, version: int) -> None:
        self._version_path.write_text(str(version))


class BoundaryTranscript:
    """Capture of everything crossing the boundary, for confinement checks."""

    def __init__(self):
        self.entries: list = []

    def record(self, direction: str, label: str, data: bytes) -> None:
        self.entries.append((direction, label, bytes(data)))

    def all_bytes(self, exclude_labels=()) -> bytes:
        return b"".join(data for _, label, data in self.entries
                        if label not in exclude_labels)


class Enclave:
    """Simulated enclave; at most one ECall executes at a time."""

    def __init__(self, storage: HostStorage, platform_secret: bytes,
                 entropy=secrets.token_bytes, transcript=None,
                 measurement: bytes = ENCLAVE_MEASUREMENT):
        self._storage = storage
        self._entropy = entropy
        self._transcript = transcript
        self._measurement = measurement
        self._sealing_key = derive_sealing_key(platform_secret, measurement)
        self._lock = threading.RLock()
        self._keystore: Optional[Keystore] = None
        blob = storage.load_blob()
        if blob is not None:
            self._record("in", "sealed_blob", blob)
            self._keystore = unseal(blob, self._sealing_key, measurement,
                                    storage.last_seen_version())
            log.info("keystore unsealed: %d account(s), version %d",
                     len(self._keystore.accounts), self._keystore.version)

    # -- boundary helpers ------------------------------------------------------

    def _record(self, direction: str, label: str, data: bytes) -> None:
        if self._transcript is not None:
            self._transcript.record(direction, label, data)

    def _require_initialized(self) -> Keystore:
        if self._keystore is None:
            raise UninitializedError("enclave has no keystore")
        return self._keystore

    def _reseal(self) -> None:
        blob = seal(self._keystore, self._sealing_key, self._measurement,
                    self._entropy).to_bytes()
        self._storage.store_blob(blob)
        self._storage.record_version(self._keystore.version)
        self._record("out", "sealed_blob", blob)

    @property
    def initialized(self) -> bool:
        return self._keystore is not None

    @property
    def measurement(self) -> bytes:
        return self._measurement

    # -- ECalls ----------------------------------------------------------------

    def info(self) -> EnclaveInfo:
        """Public (non-secret) view of the loaded keystore."""
        with self._lock:
            if self._keystore is None:
                result = EnclaveInfo(False, self._measurement, None, (), None,
                                     None, None, None)
            else:
                ks = self._keystore
                result = EnclaveInfo(
                    initialized=True,
                    measurement=self._measurement,
                    master_address=ks.master.address,
                    secondary_addresses=tuple(a.address for a in ks.secondaries()),
                    channel_pubkey=secp256k1.encode_point(
                        secp256k1.public_point(ks.channel_key)),
                    policy=ks.policy,
                    chain_id=ks.chain_id,
                    forwarder=ks.forwarder,
                )
            self._record("out", "info", _info_bytes(result))
            return result

    def ecall_initialize(self, owner_pubkey: bytes, policy: SpendingPolicy,
                         chain_id: int, forwarder: Optional[Address] = None,
                         entropy=None, reset: bool = False) -> InitReceipt:
        """Generate master credentials inside the boundary and seal the keystore.

        The receipt carries the master key encrypted solely to the owner's
        public key; the plaintext scalar never crosses the boundary.
        """
        with self._lock:
            if self._keystore is not None and not reset:
                raise AlreadyInitializedError("keystore already exists")
            entropy = entropy or self._entropy
            self._record("in", "init.owner_pubkey", owner_pubkey)
            self._record("in", "init.params",
                         repr((policy, chain_id, forwarder)).encode())
            try:
                owner_point = secp256k1.decode_point(owner_pubkey)
            except InvalidPointError as exc:
                raise InvalidOwnerKeyError(str(exc)) from exc
            master_key = secp256k1.generate_scalar(entropy)
            channel_key = secp256k1.generate_scalar(entropy)
            master = AccountRecord(
                address=derive_address(master_key), private_key=master_key,
                next_nonce=0, role=Role.MASTER)
            self._keystore = Keystore([master], policy, version=1,
                                      channel_key=channel_key, chain_id=chain_id,
                                      forwarder=forwarder)
            self._reseal()
            backup = envelope_mod.seal(owner_pubkey,
                                       master_key.to_bytes(32, "big"), entropy)
            receipt = InitReceipt(
                master_address=master.address,
                encrypted_master_key=backup.to_bytes(),
                measurement=self._measurement,
                channel_pubkey=secp256k1.encode_point(
                    secp256k1.public_point(channel_key)),
            )
            self._record("out", "init_receipt.master_address",
                         bytes(receipt.master_address))
            # excluded from confinement scans: ciphertext under the owner's key
            self._record("out", "init_receipt.encrypted_master_key",
                         receipt.encrypted_master_key)
            self._record("out", "init_receipt.measurement", receipt.measurement)
            self._record("out", "init_receipt.channel_pubkey",
                         receipt.channel_pubkey)
            log.info("initialized; master %s", master.address.to_hex())
            return receipt

    def ecall_sign_meta_tx(self, request: MetaTxRequest,
                           account_hint: Optional[Address] = None) -> SignResult:
        """Assemble and sign a meta-transaction with the account's next nonce.

        The nonce is not incremented here; it commits at confirmation. The
        account is marked in-flight until ecall_confirm or ecall_abort.
        """
        with self._lock:
            ks = self._require_initialized()
            self._record("in", "sign.request", request.canonical_bytes())
            if account_hint is not None:
                self._record("in", "sign.account_hint", bytes(account_hint))
            if request.envelope is not None:
                request = self._open_request(request)
            account = self._select_account(ks, account_hint)
            if account.busy:
                raise AccountBusyError(
                    f"{account.address.to_hex()} has an in-flight transaction")
            to, data = self._resolve_target(ks, request)
            gas_limit, gas_price = self._resolve_gas(ks.policy, request)
            self._check_recipient(ks, to)
            tx = UnsignedTransaction(
                nonce=account.next_nonce, gas_price=gas_price,
                gas_limit=gas_limit, to=to, value=request.value, data=data)
            sig = sign_digest(account.private_key,
                              signing_preimage(tx, ks.chain_id))
            raw = encode_signed(tx, sig, ks.chain_id)
            tx_hash = keccak256(raw)
            account.pending.append(PendingTx(tx_hash, account.next_nonce))
            ks.bump()
            self._reseal()
            self._record("out", "sign.raw", raw)
            self._record("out", "sign.tx_hash", tx_hash)
            self._record("out", "sign.signer", bytes(account.address))
            return SignResult(raw=raw, tx_hash=tx_hash, signer=account.address)

    def ecall_confirm(self, account: Address, tx_hash: bytes) -> int:
        """Commit the in-flight nonce after network confirmation."""
        with self._lock:
            ks = self._require_initialized()
            self._record("in", "confirm", bytes(account) + tx_hash)
            record = self._pending_head(ks, account, tx_hash)
            committed = record.pending.pop(0)
            record.next_nonce = max(record.next_nonce, committed.nonce + 1)
            ks.bump()
            self._reseal()
            self._record("out", "confirm.nonce",
                         committed.nonce.to_bytes(8, "big"))
            return committed.nonce

    def ecall_abort(self, account: Address, tx_hash: bytes) -> None:
        """Drop the in-flight entry (and any batch tail); the nonce is reused."""
        with self._lock:
            ks = self._require_initialized()
            self._record("in", "abort", bytes(account) + tx_hash)
            record = self._pending_head(ks, account, tx_hash)
            # later batch entries would leave a nonce gap, so they fall too
            record.pending.clear()
            ks.bump()
            self._reseal()

    def ecall_add_secondary(self, count: int) -> list:
        """Create fresh confined accounts; only their addresses leave."""
        with self._lock:
            ks = self._require_initialized()
            if count < 1:
                raise ValueError("count must be positive")
            self._record("in", "add_secondary.count", count.to_bytes(4, "big"))
            created = []
            for _ in range(count):
                while True:
                    key = secp256k1.generate_scalar(self._entropy)
                    address = derive_address(key)
                    if address not in ks.accounts:
                        break
                record = AccountRecord(address=address, private_key=key,
                                       next_nonce=0, role=Role.SECONDARY)
                ks.accounts[address] = record
                created.append(address)
            ks.bump()
            self._reseal()
            self._record("out", "add_secondary.addresses",
                         b"".join(bytes(a) for a in created))
            return created

    def ecall_fund_plan(self, balances: dict, min_balance: int,
                        top_up: int) -> list:
        """Value transactions from the master to each underfunded secondary.

        Signed as a batch with consecutive master nonces; every entry is
        marked in-flight and must be confirmed (or aborted) in order.
        """
        with self._lock:
            ks = self._require_initialized()
            self._record("in", "fund_plan.balances",
                         repr(sorted((a.hex(), v) for a, v in balances.items())
                              ).encode()
                         + min_balance.to_bytes(32, "big")
                         + top_up.to_bytes(32, "big"))
            master = ks.master
            if master.busy:
                raise AccountBusyError("master has in-flight transactions")
            raws = []
            offset = 0
            for secondary in ks.secondaries():
                if balances.get(secondary.address, 0) >= min_balance:
                    continue
                tx = UnsignedTransaction(
                    nonce=master.next_nonce + offset,
                    gas_price=ks.policy.default_gas_price,
                    gas_limit=MIN_GAS_LIMIT, to=secondary.address,
                    value=top_up, data=b"")
                sig = sign_digest(master.private_key,
                                  signing_preimage(tx, ks.chain_id))
                raw = encode_signed(tx, sig, ks.chain_id)
                master.pending.append(PendingTx(keccak256(raw), tx.nonce))
                raws.append(raw)
                offset += 1
            if raws:
                ks.bump()
                self._reseal()
            self._record("out", "fund_plan.raws", b"".join(raws))
            return raws

    def ecall_decrypt_request(self, env: envelope_mod.Envelope) -> MetaTxRequest:
        """Open a request envelope addressed to the enclave channel key."""
        with self._lock:
            self._require_initialized()
            self._record("in", "decrypt_request", env.to_bytes())
            request = self._open_request(MetaTxRequest(envelope=env))
            self._record("out", "decrypt_request.plaintext",
                         request.canonical_bytes())
            return request

    # -- internals -------------------------------------------------------------

    def _open_request(self, request: MetaTxRequest) -> MetaTxRequest:
        ks = self._require_initialized()
        plaintext = envelope_mod.open_envelope(ks.channel_key, request.envelope)
        inner = MetaTxRequest.from_canonical_bytes(plaintext)
        if inner.envelope is not None:
            raise RequestParseError("nested envelope")
        return inner

    def _select_account(self, ks: Keystore,
                        hint: Optional[Address]) -> AccountRecord:
        if hint is None:
            return ks.master
        try:
            return ks.accounts[hint]
        except KeyError:
            raise UnknownAccountError(Address(hint).to_hex()) from None

    def _resolve_target(self, ks: Keystore,
                        request: MetaTxRequest) -> tuple:
        if request.forward is not None:
            if ks.forwarder is None:
                raise PolicyViolationError("no trusted forwarder configured")
            return ks.forwarder, encode_forward_calldata(request.forward)
        return request.to, request.data

    def _resolve_gas(self, policy: SpendingPolicy,
                     request: MetaTxRequest) -> tuple:
        gas_limit = request.gas_limit if request.gas_limit is not None \
            else policy.max_gas_limit
        gas_price = request.gas_price if request.gas_price is not None \
            else policy.default_gas_price
        if gas_limit > policy.max_gas_limit:
            raise PolicyViolationError(
                f"gas limit {gas_limit} above cap {policy.max_gas_limit}")
        if gas_price > policy.max_gas_price:
            raise PolicyViolationError(
                f"gas price {gas_price} above cap {policy.max_gas_price}")
        return gas_limit, gas_price

    def _check_recipient(self, ks: Keystore, to: Address) -> None:
        allowed = ks.policy.allowed_recipients
        if allowed is None:
            return
        # internal transfers and the configured forwarder are implicitly allowed
        if to in ks.accounts or to == ks.forwarder:
            return
        if to not in allowed:
            raise PolicyViolationError(f"recipient {to.to_hex()} not allowed")

    def _pending_head(self, ks: Keystore, account: Address,
                      tx_hash: bytes) -> AccountRecord:
        record = ks.accounts.get(Address(account))
        if record is None or not record.pending:
            raise NoPendingError(f"nothing in flight for {Address(account).to_hex()}")
        if record.pending[0].tx_hash != tx_hash:
            raise HashMismatchError(
                f"in-flight head is {record.pending[0].tx_hash.hex()}")
        return record


def _info_bytes(info: EnclaveInfo) -> bytes:
    parts = [b"initialized" if info.initialized else b"uninitialized",
             info.measurement]
    if info.master_address is not None:
        parts.append(bytes(info.master_address))
    parts.extend(bytes(a) for a in info.secondary_addresses)
    if info.channel_pubkey is not None:
        parts.append(info.channel_pubkey)
    if info.policy is not None:
        parts.append(repr(info.policy).encode())
    if info.chain_id is not None:
        parts.append(info.chain_id.to_bytes(8, "big"))
    if info.forwarder is not None:
        parts.append(bytes(info.forwarder))
    return b"|".join(parts)
