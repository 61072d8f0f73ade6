import threading
import time

import pytest
import requests as http

from metarelay.chainsim import start_server
from metarelay.enclave import Enclave, HostStorage, PolicyViolationError, SpendingPolicy
from metarelay.relay import (
    ABORTED,
    CONFIRMED,
    FAILED,
    SUBMITTED,
    RecordStore,
    RelayConfig,
    RelayError,
    RelayService,
    resolve_gas,
)
from metarelay.requests import MetaTxRequest
from metarelay.txcore import Address, decode_signed
from metarelay.txcore.hexcodec import hex_to_bytes, hex_to_quantity

from conftest import FORWARDER, PLATFORM_SECRET

TARGET_HEX = "0x" + "11" * 20
TARGET = Address(b"\x11" * 20)


def test_relay_end_to_end(stack):
    stack.init(faucet_wei=10 ** 18)
    response = stack.post_relay({"to": TARGET_HEX, "data": "0xdeadbeef"})
    assert response.status_code == 200
    body = response.json()
    assert body["state"] == SUBMITTED
    assert body["signer"] == stack.receipt["masterAddress"]
    final = stack.wait_final(body["txHash"])
    assert final["state"] == CONFIRMED
    assert final["receipt"]["status"] == "0x1"
    assert stack.sim.call_log[TARGET][0].calldata == b"\xde\xad\xbe\xef"
    # exactly one transition per state, forward только
    assert set(final["timestamps"]) == {"signed", "submitted", "confirmed"}


def test_status_unknown_hash_404(stack):
    stack.init()
    response = http.get(stack.base_url + "/status/0x" + "00" * 32)
    assert response.status_code == 404


def test_health_and_uninitialized_relay(stack):
    health = http.get(stack.base_url + "/health").json()
    assert health == {"status": "ok", "initialized": False}
    response = stack.post_relay({"to": TARGET_HEX, "data": "0x"})
    assert response.status_code == 503


def test_info_balance_tracks_fees(stack):
    stack.init(faucet_wei=10 ** 18)
    fees = 0
    for index in range(3):
        final = stack.relay_and_wait({"to": TARGET_HEX,
                                      "data": "0x" + f"{index:02x}"})
        fees += hex_to_quantity(final["receipt"]["feePaid"])
    info = http.get(stack.base_url + "/info").json()
    master = stack.receipt["masterAddress"]
    assert hex_to_quantity(info["balances"][master]) == 10 ** 18 - fees
    assert hex_to_quantity(info["nextNonces"][master]) == 3


def test_gas_override_respected_and_capped(stack):
    stack.init(faucet_wei=10 ** 18)
    final = stack.relay_and_wait(
        {"to": TARGET_HEX, "data": "0x", "gasPrice": "0x5",
         "gasLimit": "0x5208"})
    receipt = final["receipt"]
    assert hex_to_quantity(receipt["feePaid"]) == 21000 * 5
    over_cap = stack.post_relay(
        {"to": TARGET_HEX, "data": "0x",
         "gasPrice": hex(stack.service.config.max_gas_price + 1)})
    assert over_cap.status_code == 400
    assert "policy" in over_cap.json()["error"]


def test_resolve_gas_unit():
    policy = SpendingPolicy(max_gas_limit=100_000, max_gas_price=50,
                            default_gas_price=10)
    no_overrides = MetaTxRequest(to=TARGET)
    assert resolve_gas(no_overrides, policy) == (100_000, 10)
    overridden = MetaTxRequest(to=TARGET, gas_limit=30_000, gas_price=49)
    assert resolve_gas(overridden, policy) == (30_000, 49)
    with pytest.raises(PolicyViolationError):
        resolve_gas(MetaTxRequest(to=TARGET, gas_price=51), policy)


def test_all_accounts_busy_409(make_stack):
    stack = make_stack(seal_delay=1.0, confirmation_timeout=5.0)
    stack.init(faucet_wei=10 ** 18)
    first = stack.post_relay({"to": TARGET_HEX, "data": "0x01"})
    assert first.status_code == 200
    second = stack.post_relay({"to": TARGET_HEX, "data": "0x02"})
    assert second.status_code == 409
    stack.wait_final(first.json()["txHash"])


def test_node_down_502_and_nonce_unchanged(make_stack):
    stack = make_stack()
    stack.init(faucet_wei=10 ** 18)
    node_port = stack.node_server.server_address[1]
    stack.node_server.shutdown()
    stack.node_server.server_close()
    response = stack.post_relay({"to": TARGET_HEX, "data": "0xaa"})
    assert response.status_code == 502
    assert not stack.enclave._keystore.master.busy  # abort fired
    # node returns on the same endpoint; the nonce was never consumed
    stack.node_server = start_server(stack.sim, port=node_port)
    final = stack.relay_and_wait({"to": TARGET_HEX, "data": "0xbb"})
    assert final["state"] == CONFIRMED
    raw = stack.sim.applied_raws()[-1]
    assert decode_signed(raw).tx.nonce == 0


def test_dropped_transaction_times_out_and_nonce_reused(make_stack):
    stack = make_stack(confirmation_timeout=0.6, poll_interval=0.05)
    stack.init(faucet_wei=10 ** 18)
    stack.sim.drop_next_transaction()
    response = stack.post_relay({"to": TARGET_HEX, "data": "0x01"})
    assert response.status_code == 200
    final = stack.wait_final(response.json()["txHash"], timeout=5.0)
    assert final["state"] == FAILED
    assert "timeout" in final["error"]
    retry = stack.relay_and_wait({"to": TARGET_HEX, "data": "0x02"})
    assert retry["state"] == CONFIRMED
    assert decode_signed(stack.sim.applied_raws()[-1]).tx.nonce == 0


def test_duplicate_submission_rejected(make_stack):
    stack = make_stack()
    stack.init(faucet_wei=10 ** 18)
    final = stack.relay_and_wait({"to": TARGET_HEX, "data": "0x07"})
    raw = stack.sim.applied_raws()[-1]
    # hand-crafted duplicate of already-confirmed raw bytes
    record = stack.service.store.create(b"\x77" * 32,
                                        stack.master_address, raw)
    with pytest.raises(RelayError) as excinfo:
        stack.service._submit(record)
    assert excinfo.value.status == 400
    assert stack.service.store.get(b"\x77" * 32).state == ABORTED


def test_forward_relay_over_http(stack):
    import secrets as sec
    from metarelay.txcore import derive_address, sign_forward_request
    from metarelay.requests import _forward_to_json

    stack.init(faucet_wei=10 ** 18)
    user_key = sec.token_bytes(32)
    inner_target = Address(b"\x31" * 20)
    fr = sign_forward_request(user_key, inner_target, 0, 100_000, 0,
                              b"token move", 1337, FORWARDER)
    final = stack.relay_and_wait({"forward": _forward_to_json(fr)})
    assert final["state"] == CONFIRMED
    assert final["receipt"]["status"] == "0x1"
    entry = stack.sim.call_log[inner_target][0]
    assert entry.effective_sender == derive_address(user_key)


def test_envelope_relay_over_http(stack):
    from metarelay import envelope as envelope_mod

    stack.init(faucet_wei=10 ** 18)
    channel_pub = hex_to_bytes(stack.receipt["channelPubkey"])
    inner = MetaTxRequest(to=Address(b"\x32" * 20), data=b"\x0a\x0b")
    env = envelope_mod.seal(channel_pub, inner.canonical_bytes())
    final = stack.relay_and_wait(MetaTxRequest(envelope=env).to_json_dict())
    assert final["state"] == CONFIRMED
    assert stack.sim.call_log[Address(b"\x32" * 20)][0].calldata == b"\x0a\x0b"


def test_tampered_envelope_rejected(stack):
    from metarelay import envelope as envelope_mod
    from metarelay.envelope import Envelope

    stack.init(faucet_wei=10 ** 18)
    channel_pub = hex_to_bytes(stack.receipt["channelPubkey"])
    inner = MetaTxRequest(to=Address(b"\x32" * 20), data=b"\x0a")
    env = envelope_mod.seal(channel_pub, inner.canonical_bytes())
    bad = Envelope(env.ephemeral_pubkey,
                   bytes([env.ciphertext[0] ^ 1]) + env.ciphertext[1:],
                   env.auth_tag)
    response = stack.post_relay(MetaTxRequest(envelope=bad).to_json_dict())
    assert response.status_code == 400


def test_malformed_body_400(stack):
    stack.init()
    response = http.post(stack.base_url + "/relay", data=b"{not json",
                         headers={"Content-Type": "application/json"})
    assert response.status_code == 400
    response = stack.post_relay({"data": "0x00"})  # missing recipient
    assert response.status_code == 400


def test_funding_daemon_keeps_secondaries_funded(make_stack):
    stack = make_stack(funding_period=0.1, funding_min_balance=10 ** 15,
                       funding_top_up=10 ** 16)
    stack.init(faucet_wei=10 ** 18)
    response = http.post(stack.base_url + "/admin/secondary",
                         json={"count": 2}, timeout=10)
    addresses = [Address(hex_to_bytes(a)) for a in response.json()["addresses"]]
    deadline = time.monotonic() + 5.0
    while time.monotonic() < deadline:
        if all(stack.sim.get_balance(a) >= 10 ** 15 for a in addresses):
            break
        time.sleep(0.05)
    balances = [stack.sim.get_balance(a) for a in addresses]
    assert all(b == 10 ** 16 for b in balances), balances
    faucet_in, accounted = stack.sim.audit_conservation()
    assert faucet_in == accounted


def test_manual_fund_tick_counts(stack):
    stack.init(faucet_wei=10 ** 18)
    assert stack.service.funding_tick() == 0  # no secondaries yet
    http.post(stack.base_url + "/admin/secondary", json={"count": 3},
              timeout=10)
    stack.service.config.funding_min_balance = 10 ** 15
    stack.service.config.funding_top_up = 10 ** 16
    dispatched = http.post(stack.base_url + "/admin/fund", json={},
                           timeout=10).json()["dispatched"]
    assert dispatched == 3
    deadline = time.monotonic() + 5.0
    while time.monotonic() < deadline and any(
            r.state == SUBMITTED for r in stack.service.store.all_records()):
        time.sleep(0.05)
    assert http.post(stack.base_url + "/admin/fund", json={},
                     timeout=10).json()["dispatched"] == 0


def test_wal_redrive_after_restart(make_stack, tmp_path):
    stack = make_stack(seal_delay=0.4, confirmation_timeout=0.2,
                       poll_interval=0.05)
    stack.init(faucet_wei=10 ** 18)
    response = stack.post_relay({"to": TARGET_HEX, "data": "0x55"})
    assert response.status_code == 200
    tx_hash = hex_to_bytes(response.json()["txHash"])
    # stop before the delayed receipt becomes visible -> still submitted
    stack.service.stop()
    record = stack.service.store.get(tx_hash)
    assert record.state in (SUBMITTED, FAILED)
    if record.state == FAILED:
        pytest.skip("receipt surfaced before shutdown; nothing left to re-drive")
    time.sleep(0.5)  # receipt now visible on the node
    config = stack.service.config
    store = RecordStore(config.data_dir / "relay-wal.jsonl")
    assert store.get(tx_hash).state == SUBMITTED
    revived = RelayService(config, stack.enclave, store=store)
    revived.start()
    deadline = time.monotonic() + 5.0
    while time.monotonic() < deadline \
            and store.get(tx_hash).state == SUBMITTED:
        time.sleep(0.05)
    assert store.get(tx_hash).state == CONFIRMED
    assert not stack.enclave._keystore.master.busy
    revived.stop()


def test_redrive_tolerates_already_confirmed(make_stack):
    stack = make_stack()
    stack.init(faucet_wei=10 ** 18)
    final = stack.relay_and_wait({"to": TARGET_HEX, "data": "0x66"})
    tx_hash = hex_to_bytes(final["txHash"])
    # forge a WAL where the confirm never landed
    config = stack.service.config
    stack.service.stop()
    wal = config.data_dir / "relay-wal.jsonl"
    lines = [line for line in wal.read_text().splitlines()
             if '"confirmed"' not in line]
    wal.write_text("\n".join(lines) + "\n")
    store = RecordStore(wal)
    assert store.get(tx_hash).state == SUBMITTED
    revived = RelayService(config, stack.enclave, store=store)
    revived.start()  # re-drive path: receipt exists, enclave already confirmed
    assert store.get(tx_hash).state == CONFIRMED
    revived.stop()


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "relay.conf"
    path.write_text("""
# relay config
rpc_endpoint=http://127.0.0.1:9999
chain_id=7
listen_host=0.0.0.0
listen_port=8700
confirmation_timeout=2.5
poll_interval=0.25
funding_min_balance=1000
funding_top_up=2000
funding_period=3.0
forwarder=0xf0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0
data_dir={tmp}/data
max_gas_limit=300000
max_gas_price=90000000000
default_gas_price=2000000000
""".format(tmp=tmp_path))
    config = RelayConfig.from_file(path)
    assert config.chain_id == 7
    assert config.rpc_endpoint.endswith(":9999")
    assert config.forwarder == FORWARDER
    assert config.funding_period == 3.0
    assert config.max_gas_limit == 300_000
    bad = tmp_path / "bad.conf"
    bad.write_text("poll_interval=5\nconfirmation_timeout=1\n")
    with pytest.raises(ValueError):
        RelayConfig.from_file(bad)
    unknown = tmp_path / "unknown.conf"
    unknown.write_text("nonsense_key=1\n")
    with pytest.raises(ValueError):
        RelayConfig.from_file(unknown)


def test_round_robin_spreads_load(make_stack):
    stack = make_stack(funding_min_balance=10 ** 15, funding_top_up=10 ** 17)
    stack.init(faucet_wei=10 ** 18)
    http.post(stack.base_url + "/admin/secondary", json={"count": 3},
              timeout=10)
    http.post(stack.base_url + "/admin/fund", json={}, timeout=10)
    deadline = time.monotonic() + 5.0
    info = stack.enclave.info()
    while time.monotonic() < deadline and any(
            stack.sim.get_balance(a) == 0 for a in info.secondary_addresses):
        time.sleep(0.05)
    signers = set()
    for index in range(3):
        final = stack.relay_and_wait({"to": TARGET_HEX,
                                      "data": "0x" + f"{index:02x}"})
        signers.add(final["signer"])
    assert len(signers) == 3  # each relay landed on a different secondary
