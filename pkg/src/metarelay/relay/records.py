"""Relay records and their write-ahead log.

Every state transition is appended to a JSONL file before the in-memory map
updates, so a restarted service can re-drive confirm/abort for anything that
was in flight. Transitions only move forward; nothing skips the submitted
state on the way to confirmed.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..txcore.hexcodec import bytes_to_hex, hex_to_bytes
from ..txcore.signing import Address

SIGNED = "signed"
SUBMITTED = "submitted"
CONFIRMED = "confirmed"
FAILED = "failed"
ABORTED = "aborted"

_TRANSITIONS = {
    SIGNED: {SUBMITTED, ABORTED},
    SUBMITTED: {CONFIRMED, FAILED, ABORTED},
    CONFIRMED: set(),
    FAILED: set(),
    ABORTED: set(),
}

TERMINAL = {CONFIRMED, FAILED, ABORTED}


class InvalidTransitionError(ValueError):
    pass


@dataclass
class RelayRecord:
    tx_hash: bytes
    signer: Address
    raw: bytes
    state: str = SIGNED
    receipt: Optional[dict] = None
    error: Optional[str] = None
    timestamps: dict = field(default_factory=dict)

    def view(self) -> dict:
        out = {
            "txHash": bytes_to_hex(self.tx_hash),
            "signer": self.signer.to_hex(),
            "state": self.state,
            "timestamps": dict(self.timestamps),
        }
        if self.receipt is not None:
            out["receipt"] = self.receipt
        if self.error is not None:
            out["error"] = self.error
        return out


class RecordStore:
    """In-memory map of relay records backed by an append-only log."""

    def __init__(self, path):
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._records: dict = {}
        self._lock = threading.RLock()
        self._closed = False
        if self._path.exists():
            self._replay()
        self._wal = open(self._path, "a", encoding="utf-8")

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._wal.close()

    def _replay(self) -> None:
        for line in self._path.read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            tx_hash = hex_to_bytes(entry["txHash"])
            if entry["state"] == SIGNED:
                self._records[tx_hash] = RelayRecord(
                    tx_hash=tx_hash,
                    signer=Address(hex_to_bytes(entry["signer"])),
                    raw=hex_to_bytes(entry["raw"]),
                    timestamps={SIGNED: entry["time"]},
                )
            else:
                record = self._records.get(tx_hash)
                if record is None:
                    continue  # tolerate a torn log tail
                record.state = entry["state"]
                record.receipt = entry.get("receipt")
                record.error = entry.get("error")
                record.timestamps[entry["state"]] = entry["time"]

    def _append(self, entry: dict) -> None:
        if self._closed:
            # late tracker write during shutdown; the restart re-drive
            # re-derives the same outcome from the node, so dropping is safe
            return
        self._wal.write(json.dumps(entry, sort_keys=True) + "\n")
        self._wal.flush()

    def create(self, tx_hash: bytes, signer: Address, raw: bytes) -> RelayRecord:
        with self._lock:
            if tx_hash in self._records:
                raise ValueError(f"duplicate record {tx_hash.hex()}")
            now = time.time()
            record = RelayRecord(tx_hash=tx_hash, signer=signer, raw=raw,
                                 timestamps={SIGNED: now})
            self._append({"txHash": bytes_to_hex(tx_hash), "state": SIGNED,
                          "signer": signer.to_hex(), "raw": bytes_to_hex(raw),
                          "time": now})
            self._records[tx_hash] = record
            return record

    def transition(self, tx_hash: bytes, new_state: str, receipt: dict = None,
                   error: str = None) -> RelayRecord:
        with self._lock:
            record = self._records[tx_hash]
            if new_state not in _TRANSITIONS[record.state]:
                raise InvalidTransitionError(
                    f"{record.state} -> {new_state} for {tx_hash.hex()}")
            now = time.time()
            entry = {"txHash": bytes_to_hex(tx_hash), "state": new_state,
                     "time": now}
            if receipt is not None:
                entry["receipt"] = receipt
            if error is not None:
                entry["error"] = error
            self._append(entry)
            record.state = new_state
            record.receipt = receipt if receipt is not None else record.receipt
            record.error = error if error is not None else record.error
            record.timestamps[new_state] = now
            return record

    def get(self, tx_hash: bytes) -> Optional[RelayRecord]:
        with self._lock:
            return self._records.get(tx_hash)

    def all_records(self) -> list:
        with self._lock:
            return list(self._records.values())

    def unresolved(self) -> list:
        """Records still needing a confirm/abort decision."""
        with self._lock:
            return [r for r in self._records.values() if r.state not in TERMINAL]
