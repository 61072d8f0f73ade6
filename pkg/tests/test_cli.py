import json

import pytest
import requests as http

from metarelay.cli import main
from metarelay.enclave import ENCLAVE_MEASUREMENT
from metarelay.txcore import Address, derive_address
from metarelay.txcore.hexcodec import hex_to_bytes, hex_to_quantity

MEASUREMENT_HEX = "0x" + ENCLAVE_MEASUREMENT.hex()
TARGET_HEX = "0x" + "11" * 20


@pytest.fixture
def passphrase(monkeypatch):
    monkeypatch.setenv("METARELAY_OWNER_PASSPHRASE", "correct horse")
    return "correct horse"


def run_cli(*args: str) -> int:
    return main(list(args))


def test_init_writes_backup_and_prints_master(stack, tmp_path, passphrase,
                                              capsys):
    backup = tmp_path / "backup.json"
    code = run_cli("--endpoint", stack.base_url, "init",
                   "--measurement", MEASUREMENT_HEX,
                   "--backup-file", str(backup))
    assert code == 0
    out = capsys.readouterr().out
    assert backup.exists()
    saved = json.loads(backup.read_text())
    assert saved["receipt"]["masterAddress"] in out
    assert stack.enclave.initialized
    # never the decrypted master key on disk
    master_hex = saved["receipt"]["masterAddress"]
    assert "privateKey" not in backup.read_text()


def test_init_measurement_mismatch_aborts(stack, tmp_path, passphrase, capsys):
    backup = tmp_path / "backup.json"
    wrong = "0x" + "ab" * 32
    code = run_cli("--endpoint", stack.base_url, "init",
                   "--measurement", wrong, "--backup-file", str(backup))
    assert code == 2
    assert not backup.exists()  # nothing persisted
    assert not stack.enclave.initialized  # nothing initialized either


def test_init_twice_surfaces_already_initialized(stack, tmp_path, passphrase):
    backup = tmp_path / "backup.json"
    assert run_cli("--endpoint", stack.base_url, "init",
                   "--measurement", MEASUREMENT_HEX,
                   "--backup-file", str(backup)) == 0
    second = tmp_path / "second.json"
    code = run_cli("--endpoint", stack.base_url, "init",
                   "--measurement", MEASUREMENT_HEX,
                   "--backup-file", str(second))
    assert code == 3
    assert not second.exists()


def test_export_key_roundtrip(stack, tmp_path, passphrase, capsys):
    backup = tmp_path / "backup.json"
    run_cli("--endpoint", stack.base_url, "init",
            "--measurement", MEASUREMENT_HEX, "--backup-file", str(backup))
    capsys.readouterr()
    code = run_cli("export-key", "--backup-file", str(backup))
    assert code == 0
    key_hex = capsys.readouterr().out.strip()
    master = json.loads(backup.read_text())["receipt"]["masterAddress"]
    assert derive_address(hex_to_bytes(key_hex)).to_hex() == master


def test_export_key_wrong_passphrase(stack, tmp_path, passphrase, monkeypatch,
                                     capsys):
    backup = tmp_path / "backup.json"
    run_cli("--endpoint", stack.base_url, "init",
            "--measurement", MEASUREMENT_HEX, "--backup-file", str(backup))
    monkeypatch.setenv("METARELAY_OWNER_PASSPHRASE", "wrong horse")
    capsys.readouterr()
    code = run_cli("export-key", "--backup-file", str(backup))
    assert code == 2
    assert capsys.readouterr().out.strip() == ""  # nothing printed


def test_export_key_tampered_backup(stack, tmp_path, passphrase, capsys):
    backup = tmp_path / "backup.json"
    run_cli("--endpoint", stack.base_url, "init",
            "--measurement", MEASUREMENT_HEX, "--backup-file", str(backup))
    saved = json.loads(backup.read_text())
    blob = bytearray(hex_to_bytes(saved["receipt"]["encryptedMasterKey"]))
    blob[70] ^= 0x01  # inside the ciphertext
    saved["receipt"]["encryptedMasterKey"] = "0x" + bytes(blob).hex()
    backup.write_text(json.dumps(saved))
    capsys.readouterr()
    assert run_cli("export-key", "--backup-file", str(backup)) == 2


def test_status_fresh_and_after_relays(stack, tmp_path, passphrase, capsys):
    backup = tmp_path / "backup.json"
    run_cli("--endpoint", stack.base_url, "init",
            "--measurement", MEASUREMENT_HEX, "--backup-file", str(backup))
    stack.receipt = json.loads(backup.read_text())["receipt"]
    capsys.readouterr()
    assert run_cli("--endpoint", stack.base_url, "status") == 0
    out = capsys.readouterr().out
    master = stack.receipt["masterAddress"]
    row = next(line for line in out.splitlines() if master in line)
    assert " 0" in row  # zero balance, nonce 0

    stack.sim.faucet(stack.master_address, 10 ** 18)
    fees = 0
    for index in range(3):
        final = stack.relay_and_wait({"to": TARGET_HEX,
                                      "data": "0x" + f"{index:02x}"})
        fees += hex_to_quantity(final["receipt"]["feePaid"])
    assert run_cli("--endpoint", stack.base_url, "--json", "status") == 0
    info = json.loads(capsys.readouterr().out)
    assert hex_to_quantity(info["balances"][master]) == 10 ** 18 - fees
    assert hex_to_quantity(info["nextNonces"][master]) == 3


def test_secondary_add_and_fund(stack, tmp_path, passphrase, capsys):
    backup = tmp_path / "backup.json"
    run_cli("--endpoint", stack.base_url, "init",
            "--measurement", MEASUREMENT_HEX, "--backup-file", str(backup))
    stack.receipt = json.loads(backup.read_text())["receipt"]
    stack.sim.faucet(stack.master_address, 10 ** 18)
    capsys.readouterr()

    assert run_cli("--endpoint", stack.base_url, "secondary", "add", "4") == 0
    addresses = capsys.readouterr().out.split()
    assert len(addresses) == 4

    # all topped up -> zero dispatched
    stack.service.config.funding_min_balance = 0
    stack.service.config.funding_top_up = 10 ** 16
    assert run_cli("--endpoint", stack.base_url, "secondary", "fund") == 0
    assert capsys.readouterr().out.startswith("0 funding")

    stack.service.config.funding_min_balance = 10 ** 15
    assert run_cli("--endpoint", stack.base_url, "secondary", "fund") == 0
    assert capsys.readouterr().out.startswith("4 funding")
    import time
    deadline = time.monotonic() + 5.0
    while time.monotonic() < deadline:
        balances = [stack.sim.get_balance(Address(hex_to_bytes(a)))
                    for a in addresses]
        if all(b == 10 ** 16 for b in balances):
            break
        time.sleep(0.05)
    assert all(b == 10 ** 16 for b in balances)


def test_unreachable_service(tmp_path, passphrase, capsys):
    code = run_cli("--endpoint", "http://127.0.0.1:1", "status")
    assert code == 3
    assert "unreachable" in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    assert main([]) == 1
    assert main(["secondary"]) == 1
