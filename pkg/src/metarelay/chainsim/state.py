"""Mock node state machine: validation, accounting, forwarder execution.

Applies raw signed transactions with real signature recovery and strict
nonce/balance rules, charging an intrinsic-gas fee (no bytecode execution).
Transaction application is totally ordered under one lock; replaying the same
raw sequence from genesis reproduces the state exactly.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from ..txcore.forward import (
    ForwardDecodeError,
    decode_forward_calldata,
    forward_digest,
)
from ..txcore.keccak import keccak256
from ..txcore.signing import Address, RecoveryError, recover_signer
from ..txcore.transaction import (
    TransactionDecodeError,
    compute_fee,
    decode_signed,
    signing_preimage,
)

GAS_TX_BASE = 21000
GAS_DATA_NONZERO = 16
GAS_DATA_ZERO = 4


class TxRejected(Exception):
    """Transaction refused at submission; each reason is distinct."""

    def __init__(self, reason: str, message: str):
        super().__init__(f"{reason}: {message}")
        self.reason = reason


class ForwardExecutionFailed(Exception):
    """Inner forwarder call failed; the outer transaction still pays its fee."""


@dataclass
class AccountState:
    balance: int = 0
    nonce: int = 0


@dataclass(frozen=True)
class Receipt:
    tx_hash: bytes
    status: bool  # True = success
    gas_used: int
    fee_paid: int
    block_number: int
    from_addr: Address
    to: Address


@dataclass(frozen=True)
class CallEntry:
    sender: Address
    effective_sender: Address
    calldata: bytes
    value: int


def gas_used_model(data: bytes) -> int:
    """Intrinsic gas: base cost plus per-byte calldata charges."""
    nonzero = sum(1 for b in data if b)
    return GAS_TX_BASE + GAS_DATA_NONZERO * nonzero + GAS_DATA_ZERO * (len(data) - nonzero)


class ChainSim:
    """Single mock node; instant-seal unless a sealing delay is configured."""

    def __init__(self, chain_id: int = 1337, base_gas_price: int = 10 ** 9,
                 forwarder: Optional[Address] = None, seal_delay: float = 0.0):
        self.chain_id = chain_id
        self.base_gas_price = base_gas_price
        self.forwarder = forwarder
        self.seal_delay = seal_delay
        self.accounts: dict = {}
        self.receipts: dict = {}
        self.call_log: dict = {}
        self.forwarder_nonces: dict = {}
        self.block_number = 0
        self.faucet_total = 0
        self.fees_collected = 0
        self._receipt_visible_at: dict = {}
        self._drop_next = False
        self._applied_raws: list = []
        self._lock = threading.RLock()

    # -- test/ops hooks --------------------------------------------------------

    def drop_next_transaction(self) -> None:
        """Fault injection: accept the next raw transaction but never seal it."""
        with self._lock:
            self._drop_next = True

    def applied_raws(self) -> list:
        with self._lock:
            return list(self._applied_raws)

    def state_fingerprint(self) -> bytes:
        """Digest of the observable state, for determinism checks."""
        with self._lock:
            parts = [self.chain_id.to_bytes(8, "big"),
                     self.block_number.to_bytes(8, "big"),
                     self.fees_collected.to_bytes(32, "big"),
                     self.faucet_total.to_bytes(32, "big")]
            for addr in sorted(self.accounts):
                state = self.accounts[addr]
                parts += [bytes(addr), state.balance.to_bytes(32, "big"),
                          state.nonce.to_bytes(8, "big")]
            for addr in sorted(self.call_log):
                for entry in self.call_log[addr]:
                    parts += [bytes(addr), bytes(entry.sender),
                              bytes(entry.effective_sender), entry.calldata,
                              entry.value.to_bytes(32, "big")]
            return keccak256(b"".join(parts))

    # -- queries ---------------------------------------------------------------

    def get_balance(self, address: Address) -> int:
        with self._lock:
            return self.accounts.get(address, AccountState()).balance

    def get_nonce(self, address: Address) -> int:
        with self._lock:
            return self.accounts.get(address, AccountState()).nonce

    def get_receipt(self, tx_hash: bytes) -> Optional[Receipt]:
        with self._lock:
            visible_at = self._receipt_visible_at.get(tx_hash)
            if visible_at is None or time.monotonic() < visible_at:
                return None
            return self.receipts[tx_hash]

    def faucet(self, address: Address, amount: int) -> int:
        """Credit test funds; totals are tracked for conservation audits."""
        if amount <= 0:
            raise ValueError("faucet amount must be positive")
        with self._lock:
            state = self.accounts.setdefault(Address(address), AccountState())
            state.balance += amount
            self.faucet_total += amount
            return state.balance

    def audit_conservation(self) -> tuple:
        """(faucet input, balances + fees). Equal at every point in time."""
        with self._lock:
            total = sum(s.balance for s in self.accounts.values())
            return self.faucet_total, total + self.fees_collected

    # -- transaction path --------------------------------------------------------

    def send_raw(self, raw: bytes) -> bytes:
        """Node entry point: validate and apply (or drop, if injected)."""
        with self._lock:
            if self._drop_next:
                self._drop_next = False
                return keccak256(raw)
            receipt = self.apply_raw_transaction(raw)
            return receipt.tx_hash

    def apply_raw_transaction(self, raw: bytes) -> Receipt:
        """Full validation and state transition; raises TxRejected."""
        raw = bytes(raw)
        try:
            signed = decode_signed(raw)
        except TransactionDecodeError as exc:
            raise TxRejected("malformed", str(exc)) from exc
        if signed.chain_id != self.chain_id:
            raise TxRejected("wrong-chain",
                             f"chain id {signed.chain_id} != {self.chain_id}")
        try:
            sender = recover_signer(signing_preimage(signed.tx, signed.chain_id),
                                    signed.sig)
        except (RecoveryError, ValueError) as exc:
            raise TxRejected("malformed", f"unrecoverable signature: {exc}") from exc
        tx = signed.tx
        with self._lock:
            account = self.accounts.setdefault(sender, AccountState())
            if tx.nonce != account.nonce:
                raise TxRejected(
                    "bad-nonce", f"expected {account.nonce}, got {tx.nonce}")
            upfront = tx.gas_limit * tx.gas_price + tx.value
            if account.balance < upfront:
                raise TxRejected(
                    "insufficient-funds",
                    f"balance {account.balance} below {upfront}")
            gas_used = gas_used_model(tx.data)
            if gas_used > tx.gas_limit:
                raise TxRejected(
                    "gas-limit", f"needs {gas_used}, limit {tx.gas_limit}")
            fee = compute_fee(gas_used, tx.gas_price)

            status = True
            if self.forwarder is not None and tx.to == self.forwarder:
                try:
                    self.forwarder_execute(tx.to, tx.data, sender)
                except ForwardExecutionFailed:
                    status = False
            else:
                self.call_log.setdefault(tx.to, []).append(CallEntry(
                    sender=sender, effective_sender=sender,
                    calldata=tx.data, value=tx.value))

            account.balance -= fee
            self.fees_collected += fee
            if status:
                account.balance -= tx.value
                recipient = self.accounts.setdefault(tx.to, AccountState())
                recipient.balance += tx.value
            account.nonce += 1
            self.block_number += 1
            tx_hash = keccak256(raw)
            receipt = Receipt(tx_hash=tx_hash, status=status, gas_used=gas_used,
                              fee_paid=fee, block_number=self.block_number,
                              from_addr=sender, to=tx.to)
            self.receipts[tx_hash] = receipt
            self._receipt_visible_at[tx_hash] = time.monotonic() + self.seal_delay
            self._applied_raws.append(raw)
            return receipt

    def forwarder_execute(self, to: Address, calldata: bytes,
                          outer_sender: Address) -> Address:
        """Trusted-forwarder recipient: verify the inner signature and nonce,
        then log the call at the inner target with the user's identity."""
        if to != self.forwarder:
            raise ValueError("recipient is not the configured forwarder")
        try:
            req, claimed = decode_forward_calldata(calldata)
        except ForwardDecodeError as exc:
            raise ForwardExecutionFailed(f"undecodable request: {exc}") from exc
        if claimed != req.from_addr:
            raise ForwardExecutionFailed("suffix does not match request sender")
        digest = forward_digest(req, self.chain_id, self.forwarder)
        try:
            recovered = recover_signer(digest, req.user_sig)
        except (RecoveryError, ValueError) as exc:
            raise ForwardExecutionFailed(f"unrecoverable inner signature: {exc}") from exc
        if recovered != req.from_addr:
            raise ForwardExecutionFailed("inner signature does not match sender")
        expected = self.forwarder_nonces.get(req.from_addr, 0)
        if req.user_nonce != expected:
            raise ForwardExecutionFailed(
                f"user nonce {req.user_nonce}, expected {expected}")
        self.forwarder_nonces[req.from_addr] = expected + 1
        self.call_log.setdefault(req.to, []).append(CallEntry(
            sender=self.forwarder, effective_sender=claimed,
            calldata=req.data, value=req.value))
        return claimed
