"""Shared fixtures: a full in-process stack (mock node + enclave + relay)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import pytest
import requests as http

from metarelay import envelope as envelope_mod
from metarelay.chainsim import ChainSim, start_server
from metarelay.enclave import BoundaryTranscript, Enclave, HostStorage
from metarelay.relay import RelayConfig, RelayService, start_http
from metarelay.txcore import Address
from metarelay.txcore.hexcodec import hex_to_address

FORWARDER = Address(bytes.fromhex("f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0"))
PLATFORM_SECRET = b"test platform secret"
CHAIN_ID = 1337

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@dataclass
class Stack:
    sim: ChainSim
    node_server: object
    node_url: str
    enclave: Enclave
    transcript: BoundaryTranscript
    service: RelayService
    http_server: object
    base_url: str
    owner_scalar: int = 0
    owner_pubkey: bytes = b""
    receipt: Optional[dict] = None
    _stopped: bool = field(default=False, repr=False)

    def init(self, faucet_wei: int = 0, policy: Optional[dict] = None) -> dict:
        self.owner_scalar, self.owner_pubkey = envelope_mod.generate_keypair()
        body = {"ownerPubkey": "0x" + self.owner_pubkey.hex()}
        if policy:
            body["policy"] = policy
        response = http.post(self.base_url + "/admin/init", json=body, timeout=10)
        assert response.status_code == 200, response.text
        self.receipt = response.json()
        if faucet_wei:
            self.sim.faucet(self.master_address, faucet_wei)
        return self.receipt

    @property
    def master_address(self) -> Address:
        return hex_to_address(self.receipt["masterAddress"])

    def post_relay(self, body: dict) -> http.Response:
        return http.post(self.base_url + "/relay", json=body, timeout=10)

    def status(self, tx_hash_hex: str) -> dict:
        response = http.get(self.base_url + f"/status/{tx_hash_hex}", timeout=10)
        assert response.status_code == 200, response.text
        return response.json()

    def wait_final(self, tx_hash_hex: str, timeout: float = 8.0) -> dict:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            view = self.status(tx_hash_hex)
            if view["state"] in ("confirmed", "failed", "aborted"):
                return view
            time.sleep(0.02)
        raise AssertionError(f"{tx_hash_hex} still {view['state']} after {timeout}s")

    def relay_and_wait(self, body: dict, timeout: float = 8.0) -> dict:
        response = self.post_relay(body)
        assert response.status_code == 200, response.text
        return self.wait_final(response.json()["txHash"], timeout)

    def stop(self) -> None:
        if self._stopped:
            return
        self._stopped = True
        self.service.stop()
        for server in (self.http_server, self.node_server):
            server.shutdown()
            server.server_close()


@pytest.fixture
def make_stack(tmp_path):
    stacks = []

    def factory(seal_delay: float = 0.0, confirmation_timeout: float = 5.0,
                poll_interval: float = 0.02, funding_period: float = 0.0,
                funding_min_balance: int = 0, funding_top_up: int = 0,
                default_gas_price: int = 10 ** 9, subdir: str = None) -> Stack:
        root = tmp_path / (subdir or f"stack{len(stacks)}")
        sim = ChainSim(chain_id=CHAIN_ID, forwarder=FORWARDER,
                       seal_delay=seal_delay)
        node_server = start_server(sim)
        node_url = f"http://127.0.0.1:{node_server.server_address[1]}"
        config = RelayConfig(
            rpc_endpoint=node_url, chain_id=CHAIN_ID,
            confirmation_timeout=confirmation_timeout,
            poll_interval=poll_interval, funding_period=funding_period,
            funding_min_balance=funding_min_balance,
            funding_top_up=funding_top_up, forwarder=FORWARDER,
            data_dir=root / "relay", default_gas_price=default_gas_price)
        transcript = BoundaryTranscript()
        enclave = Enclave(HostStorage(root / "enclave"), PLATFORM_SECRET,
                          transcript=transcript)
        service = RelayService(config, enclave)
        service.start()
        http_server = start_http(service)
        stack = Stack(
            sim=sim, node_server=node_server, node_url=node_url,
            enclave=enclave, transcript=transcript, service=service,
            http_server=http_server,
            base_url=f"http://127.0.0.1:{http_server.server_address[1]}")
        stacks.append(stack)
        return stack

    yield factory
    for stack in stacks:
        stack.stop()


@pytest.fixture
def stack(make_stack) -> Stack:
    return make_stack()
