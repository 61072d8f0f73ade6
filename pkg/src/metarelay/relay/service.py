"""The untrusted web backend: accepts requests, drives ECalls, tracks receipts.

Request handlers run concurrently; all enclave access serializes inside the
boundary. Submission is synchronous (the HTTP response reports the submitted
state), confirmation is asynchronous: a tracker polls the node until the
receipt appears or the timeout passes, then fires exactly one of
confirm/abort. A funding daemon periodically tops up secondary accounts from
the master deposit.
"""

from __future__ import annotations

import argparse
import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from ..enclave import (
    AccountBusyError,
    AlreadyInitializedError,
    Enclave,
    HashMismatchError,
    HostStorage,
    InvalidOwnerKeyError,
    NoPendingError,
    PolicyViolationError,
    SpendingPolicy,
    UninitializedError,
)
from ..envelope import EnvelopeAuthError
from ..requests import MetaTxRequest, RequestParseError
from ..txcore.hexcodec import (
    bytes_to_hex,
    hex_to_address,
    hex_to_bytes,
    hex_to_quantity,
    quantity_to_hex,
)
from ..txcore.keccak import keccak256
from ..txcore.signing import Address
from .config import RelayConfig, platform_secret_from_env
from .nodeclient import NodeClient, NodeRejectionError, NodeUnreachableError
from .records import (
    ABORTED,
    CONFIRMED,
    FAILED,
    SIGNED,
    SUBMITTED,
    RecordStore,
    RelayRecord,
)

log = logging.getLogger(__name__)


class RelayError(Exception):
    """Request-level failure carrying its HTTP status."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def resolve_gas(request: MetaTxRequest, policy: SpendingPolicy) -> tuple:
    """(gas_limit, gas_price): request overrides win when at or below the
    policy caps, otherwise policy defaults. The enclave re-validates the
    final resolution; this backend check just fails fast."""
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


class RelayService:
    def __init__(self, config: RelayConfig, enclave: Enclave,
                 store: Optional[RecordStore] = None,
                 node: Optional[NodeClient] = None):
        self.config = config
        self.enclave = enclave
        self.store = store or RecordStore(config.data_dir / "relay-wal.jsonl")
        self.node = node or NodeClient(config.rpc_endpoint)
        self._rr_lock = threading.Lock()
        self._rr_index = 0
        self._funding_lock = threading.Lock()
        self._stop = threading.Event()
        self._funding_thread: Optional[threading.Thread] = None
        self._trackers: list = []
        self._trackers_lock = threading.Lock()

    # -- lifecycle ---------------------------------------------------------------

    def start(self) -> None:
        self._redrive()
        if self.config.funding_period > 0:
            self._funding_thread = threading.Thread(
                target=self._funding_loop, name="funding-daemon", daemon=True)
            self._funding_thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._funding_thread is not None:
            self._funding_thread.join(timeout=2.0)
        with self._trackers_lock:
            trackers = list(self._trackers)
        for thread in trackers:
            thread.join(timeout=1.0)
        self.store.close()

    def _redrive(self) -> None:
        """Resolve records left in flight by a previous run, exactly once."""
        for record in self.store.unresolved():
            receipt = None
            try:
                receipt = self.node.get_receipt(record.tx_hash)
            except NodeUnreachableError:
                pass
            if receipt is not None:
                if record.state == SIGNED:
                    self.store.transition(record.tx_hash, SUBMITTED)
                self._confirm(record.tx_hash, record.signer, receipt)
            elif record.state == SIGNED:
                log.info("re-driving signed record %s", record.tx_hash.hex())
                try:
                    self._submit(record)
                except RelayError as exc:
                    log.warning("re-drive submit failed: %s", exc)
                    continue
                self._spawn_tracker(record.tx_hash, record.signer)
            else:
                self._spawn_tracker(record.tx_hash, record.signer)

    # -- relay path ----------------------------------------------------------------

    def relay(self, request: MetaTxRequest) -> RelayRecord:
        """Sign with the first idle account, submit, and start tracking."""
        if not self.enclave.initialized:
            raise RelayError(503, "enclave not initialized")
        if request.envelope is None:
            policy = self.enclave.info().policy
            try:
                resolve_gas(request, policy)
            except PolicyViolationError as exc:
                raise RelayError(400, f"policy violation: {exc}") from exc
        result = None
        for account in self._candidates():
            try:
                result = self.enclave.ecall_sign_meta_tx(request,
                                                         account_hint=account)
                break
            except AccountBusyError:
                continue
            except PolicyViolationError as exc:
                raise RelayError(400, f"policy violation: {exc}") from exc
            except (RequestParseError, EnvelopeAuthError) as exc:
                raise RelayError(400, f"bad request: {exc}") from exc
            except UninitializedError as exc:
                raise RelayError(503, str(exc)) from exc
        if result is None:
            raise RelayError(409, "all signing accounts are busy")
        record = self.store.create(result.tx_hash, result.signer, result.raw)
        self._submit(record)
        self._spawn_tracker(record.tx_hash, record.signer)
        return record

    def _candidates(self) -> list:
        """Round-robin over secondaries; the master deposit comes last."""
        info = self.enclave.info()
        secondaries = list(info.secondary_addresses)
        if secondaries:
            with self._rr_lock:
                offset = self._rr_index % len(secondaries)
                self._rr_index += 1
            secondaries = secondaries[offset:] + secondaries[:offset]
        if info.master_address is not None:
            secondaries.append(info.master_address)
        return secondaries

    def _submit(self, record: RelayRecord) -> None:
        try:
            self.node.send_raw(record.raw)
        except NodeUnreachableError as exc:
            self._abort(record.tx_hash, record.signer)
            self.store.transition(record.tx_hash, ABORTED,
                                  error=f"node unreachable: {exc}")
            raise RelayError(502, f"node unreachable: {exc}") from exc
        except NodeRejectionError as exc:
            self._abort(record.tx_hash, record.signer)
            self.store.transition(record.tx_hash, ABORTED,
                                  error=f"node rejected: {exc}")
            raise RelayError(400, f"node rejected transaction: {exc}") from exc
        self.store.transition(record.tx_hash, SUBMITTED)

    def _spawn_tracker(self, tx_hash: bytes, signer: Address) -> None:
        thread = threading.Thread(target=self._track, args=(tx_hash, signer),
                                  name=f"track-{tx_hash.hex()[:8]}", daemon=True)
        self._register_tracker(thread)
        thread.start()

    def _register_tracker(self, thread: threading.Thread) -> None:
        with self._trackers_lock:
            self._trackers = [t for t in self._trackers if t.is_alive()]
            self._trackers.append(thread)

    def _track(self, tx_hash: bytes, signer: Address) -> None:
        deadline = time.monotonic() + self.config.confirmation_timeout
        while not self._stop.is_set():
            receipt = None
            try:
                receipt = self.node.get_receipt(tx_hash)
            except NodeUnreachableError:
                pass
            if receipt is not None:
                self._confirm(tx_hash, signer, receipt)
                return
            if time.monotonic() >= deadline:
                break
            time.sleep(self.config.poll_interval)
        if self._stop.is_set():
            return
        self._abort(tx_hash, signer)
        self.store.transition(tx_hash, FAILED, error="confirmation timeout")
        log.warning("relay %s failed: confirmation timeout", tx_hash.hex())

    def _confirm(self, tx_hash: bytes, signer: Address, receipt: dict) -> None:
        try:
            self.enclave.ecall_confirm(signer, tx_hash)
        except (NoPendingError, HashMismatchError) as exc:
            log.info("confirm of %s already resolved: %s", tx_hash.hex(), exc)
        self.store.transition(tx_hash, CONFIRMED, receipt=receipt)

    def _abort(self, tx_hash: bytes, signer: Address) -> None:
        try:
            self.enclave.ecall_abort(signer, tx_hash)
        except (NoPendingError, HashMismatchError) as exc:
            log.info("abort of %s already resolved: %s", tx_hash.hex(), exc)

    # -- funding daemon --------------------------------------------------------------

    def funding_tick(self) -> int:
        """One pass of the secondary-account funding duty; returns tx count."""
        with self._funding_lock:
            info = self.enclave.info()
            if not info.initialized or not info.secondary_addresses:
                return 0
            if not self.config.funding_top_up:
                return 0
            balances = {}
            try:
                for address in info.secondary_addresses:
                    balances[address] = self.node.get_balance(address)
            except NodeUnreachableError as exc:
                log.warning("funding tick skipped, node unreachable: %s", exc)
                return 0
            try:
                raws = self.enclave.ecall_fund_plan(
                    balances, self.config.funding_min_balance,
                    self.config.funding_top_up)
            except AccountBusyError:
                return 0
            if not raws:
                return 0
            entries = []
            submitted = 0
            for raw in raws:
                tx_hash = keccak256(raw)
                self.store.create(tx_hash, info.master_address, raw)
                entries.append(tx_hash)
            for tx_hash, raw in zip(entries, raws):
                try:
                    self.node.send_raw(raw)
                except (NodeUnreachableError, NodeRejectionError) as exc:
                    log.warning("funding submit stopped at %s: %s",
                                tx_hash.hex(), exc)
                    break
                self.store.transition(tx_hash, SUBMITTED)
                submitted += 1
            thread = threading.Thread(
                target=self._track_batch,
                args=(entries, submitted, info.master_address),
                name="funding-tracker", daemon=True)
            self._register_tracker(thread)
            thread.start()
            return len(raws)

    def _track_batch(self, entries: list, submitted: int,
                     master: Address) -> None:
        """Confirm a consecutive-nonce batch strictly in order."""
        for index, tx_hash in enumerate(entries):
            if index >= submitted:
                self._abort(tx_hash, master)  # clears the remaining queue too
                self.store.transition(tx_hash, ABORTED,
                                      error="batch submission stopped")
                continue
            deadline = time.monotonic() + self.config.confirmation_timeout
            receipt = None
            while not self._stop.is_set() and time.monotonic() < deadline:
                try:
                    receipt = self.node.get_receipt(tx_hash)
                except NodeUnreachableError:
                    receipt = None
                if receipt is not None:
                    break
                time.sleep(self.config.poll_interval)
            if receipt is not None:
                self._confirm(tx_hash, master, receipt)
            else:
                if self._stop.is_set():
                    return
                self._abort(tx_hash, master)
                self.store.transition(tx_hash, FAILED,
                                      error="confirmation timeout")

    def _funding_loop(self) -> None:
        while not self._stop.wait(self.config.funding_period):
            try:
                self.funding_tick()
            except Exception:
                log.exception("funding tick failed")

    # -- views -----------------------------------------------------------------------

    def status_view(self, tx_hash: bytes) -> Optional[dict]:
        record = self.store.get(tx_hash)
        return None if record is None else record.view()

    def info_view(self) -> dict:
        info = self.enclave.info()
        out = {
            "initialized": info.initialized,
            "measurement": bytes_to_hex(info.measurement),
        }
        if not info.initialized:
            return out
        addresses = [info.master_address, *info.secondary_addresses]
        balances = {}
        nonces = {}
        for address in addresses:
            try:
                balances[address.to_hex()] = quantity_to_hex(
                    self.node.get_balance(address))
                nonces[address.to_hex()] = quantity_to_hex(
                    self.node.get_nonce(address))
            except NodeUnreachableError:
                balances[address.to_hex()] = None
                nonces[address.to_hex()] = None
        out.update({
            "master": info.master_address.to_hex(),
            "secondaries": [a.to_hex() for a in info.secondary_addresses],
            "channelPubkey": bytes_to_hex(info.channel_pubkey),
            "chainId": info.chain_id,
            "balances": balances,
            "nextNonces": nonces,
            "pending": [r.view() for r in self.store.unresolved()],
        })
        return out

    # -- owner/admin -------------------------------------------------------------------

    def admin_init(self, owner_pubkey: bytes, policy_overrides: dict) -> dict:
        policy = self._build_policy(policy_overrides)
        receipt = self.enclave.ecall_initialize(
            owner_pubkey, policy, chain_id=self.config.chain_id,
            forwarder=self.config.forwarder)
        return {
            "masterAddress": receipt.master_address.to_hex(),
            "encryptedMasterKey": bytes_to_hex(receipt.encrypted_master_key),
            "measurement": bytes_to_hex(receipt.measurement),
            "channelPubkey": bytes_to_hex(receipt.channel_pubkey),
        }

    def _build_policy(self, overrides: dict) -> SpendingPolicy:
        allowed = overrides.get("allowedRecipients")
        return SpendingPolicy(
            max_gas_limit=hex_to_quantity(
                overrides.get("maxGasLimit", self.config.max_gas_limit)),
            max_gas_price=hex_to_quantity(
                overrides.get("maxGasPrice", self.config.max_gas_price)),
            default_gas_price=hex_to_quantity(
                overrides.get("defaultGasPrice", self.config.default_gas_price)),
            allowed_recipients=(
                frozenset(hex_to_address(a) for a in allowed)
                if allowed is not None else None),
        )

    def admin_add_secondary(self, count: int) -> list:
        return self.enclave.ecall_add_secondary(count)


# -- HTTP layer ------------------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    service: RelayService = None

    def _reply(self, status: int, body: dict) -> None:
        payload = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _read_json(self) -> dict:
        length = int(self.headers.get("content-length", 0))
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length))

    def do_GET(self):  # noqa: N802
        try:
            if self.path == "/health":
                self._reply(200, {"status": "ok",
                                  "initialized": self.service.enclave.initialized})
            elif self.path == "/info":
                self._reply(200, self.service.info_view())
            elif self.path.startswith("/status/"):
                tx_hash = hex_to_bytes(self.path[len("/status/"):])
                view = self.service.status_view(tx_hash)
                if view is None:
                    self._reply(404, {"error": "unknown transaction hash"})
                else:
                    self._reply(200, view)
            else:
                self._reply(404, {"error": "no such endpoint"})
        except ValueError as exc:
            self._reply(400, {"error": str(exc)})
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("GET %s failed", self.path)
            self._reply(500, {"error": str(exc)})

    def do_POST(self):  # noqa: N802
        try:
            body = self._read_json()
            if self.path == "/relay":
                self._handle_relay(body)
            elif self.path == "/admin/init":
                self._handle_init(body)
            elif self.path == "/admin/secondary":
                count = int(body.get("count", 1))
                addresses = self.service.admin_add_secondary(count)
                self._reply(200, {"addresses": [a.to_hex() for a in addresses]})
            elif self.path == "/admin/fund":
                self._reply(200, {"dispatched": self.service.funding_tick()})
            else:
                self._reply(404, {"error": "no such endpoint"})
        except json.JSONDecodeError as exc:
            self._reply(400, {"error": f"bad JSON: {exc}"})
        except UninitializedError as exc:
            self._reply(503, {"error": str(exc)})
        except (RequestParseError, ValueError) as exc:
            self._reply(400, {"error": str(exc)})
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("POST %s failed", self.path)
            self._reply(500, {"error": str(exc)})

    def _handle_relay(self, body: dict) -> None:
        request = MetaTxRequest.from_json_dict(body)
        try:
            record = self.service.relay(request)
        except RelayError as exc:
            self._reply(exc.status, {"error": str(exc)})
            return
        self._reply(200, {"txHash": bytes_to_hex(record.tx_hash),
                          "signer": record.signer.to_hex(),
                          "state": record.state})

    def _handle_init(self, body: dict) -> None:
        try:
            owner_pubkey = hex_to_bytes(body["ownerPubkey"])
        except KeyError:
            self._reply(400, {"error": "ownerPubkey required"})
            return
        try:
            receipt = self.service.admin_init(owner_pubkey,
                                              body.get("policy", {}))
        except AlreadyInitializedError as exc:
            self._reply(409, {"error": str(exc)})
            return
        except InvalidOwnerKeyError as exc:
            self._reply(400, {"error": f"bad owner key: {exc}"})
            return
        self._reply(200, receipt)

    def log_message(self, fmt, *args):
        log.debug("relay http: " + fmt, *args)


def start_http(service: RelayService, host: str = "127.0.0.1",
               port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    threading.Thread(target=server.serve_forever, name="relay-http",
                     daemon=True).start()
    return server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="meta-transaction relay service")
    parser.add_argument("--config", help="flat key=value config file")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    config = RelayConfig.from_file(args.config) if args.config else RelayConfig()
    secret = platform_secret_from_env()
    enclave = Enclave(HostStorage(config.data_dir / "enclave"), secret)
    service = RelayService(config, enclave)
    service.start()
    server = ThreadingHTTPServer(
        (config.listen_host, config.listen_port),
        type("BoundHandler", (_Handler,), {"service": service}))
    log.info("relay listening on %s:%d", config.listen_host,
             server.server_address[1])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
