"""Owner workflow: enclave initialization ceremony, key backup, oversight.

Exit codes: 0 success, 1 usage, 2 verification/measurement failure,
3 service error.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from pathlib import Path

import requests as http_requests
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from . import envelope as envelope_mod
from .envelope import Envelope, EnvelopeAuthError
from .txcore.hexcodec import bytes_to_hex, hex_to_bytes, hex_to_quantity
from .txcore.signing import derive_address

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_SERVICE = 3

DEFAULT_PASSPHRASE_ENV = "METARELAY_OWNER_PASSPHRASE"
_SCRYPT_N = 2 ** 14


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, f"usage error: {message}")


# -- owner keyfile -----------------------------------------------------------------


def _passphrase(env_name: str) -> bytes:
    value = os.environ.get(env_name)
    if not value:
        raise CliError(EXIT_USAGE, f"passphrase env var {env_name} is not set")
    return value.encode()


def _encrypt_owner_key(scalar: int, passphrase: bytes) -> dict:
    salt = secrets.token_bytes(16)
    key = Scrypt(salt=salt, length=32, n=_SCRYPT_N, r=8, p=1).derive(passphrase)
    nonce = secrets.token_bytes(12)
    sealed = AESGCM(key).encrypt(nonce, scalar.to_bytes(32, "big"), b"owner-key")
    return {
        "kdf": {"name": "scrypt", "salt": bytes_to_hex(salt),
                "n": _SCRYPT_N, "r": 8, "p": 1},
        "nonce": bytes_to_hex(nonce),
        "sealed": bytes_to_hex(sealed),
    }


def _decrypt_owner_key(entry: dict, passphrase: bytes) -> int:
    kdf = entry["kdf"]
    key = Scrypt(salt=hex_to_bytes(kdf["salt"]), length=32, n=kdf["n"],
                 r=kdf["r"], p=kdf["p"]).derive(passphrase)
    try:
        plain = AESGCM(key).decrypt(hex_to_bytes(entry["nonce"]),
                                    hex_to_bytes(entry["sealed"]), b"owner-key")
    except InvalidTag as exc:
        raise CliError(EXIT_VERIFY, "wrong passphrase or corrupted keyfile") from exc
    return int.from_bytes(plain, "big")


def _load_backup(path: Path) -> dict:
    if not path.exists():
        raise CliError(EXIT_USAGE, f"backup file {path} not found")
    return json.loads(path.read_text())


# -- service client ------------------------------------------------------------------


def _get(endpoint: str, path: str) -> dict:
    try:
        response = http_requests.get(endpoint.rstrip("/") + path, timeout=10)
        body = response.json()
    except (http_requests.RequestException, ValueError) as exc:
        raise CliError(EXIT_SERVICE, f"service unreachable: {exc}") from exc
    if response.status_code >= 400:
        raise CliError(EXIT_SERVICE,
                       f"service error {response.status_code}: "
                       f"{body.get('error', 'unknown')}")
    return body


def _post(endpoint: str, path: str, payload: dict) -> dict:
    try:
        response = http_requests.post(endpoint.rstrip("/") + path, json=payload,
                                      timeout=30)
        body = response.json()
    except (http_requests.RequestException, ValueError) as exc:
        raise CliError(EXIT_SERVICE, f"service unreachable: {exc}") from exc
    if response.status_code >= 400:
        raise CliError(EXIT_SERVICE,
                       f"service error {response.status_code}: "
                       f"{body.get('error', 'unknown')}")
    return body


# -- commands ----------------------------------------------------------------------


def cmd_init(args) -> int:
    expected = hex_to_bytes(args.measurement)
    backup_path = Path(args.backup_file)
    passphrase = _passphrase(args.passphrase_env)

    # verify the enclave identity before initializing anything
    info = _get(args.endpoint, "/info")
    seen = hex_to_bytes(info["measurement"])
    if seen != expected:
        raise CliError(EXIT_VERIFY,
                       f"measurement mismatch: service reports {info['measurement']}, "
                       f"expected {args.measurement}")

    if backup_path.exists():
        backup = _load_backup(backup_path)
        if "receipt" in backup:
            raise CliError(EXIT_SERVICE,
                           f"{backup_path} already holds an initialization receipt")
        owner_scalar = _decrypt_owner_key(backup["ownerKey"], passphrase)
        owner_pubkey = hex_to_bytes(backup["ownerPubkey"])
    else:
        owner_scalar, owner_pubkey = envelope_mod.generate_keypair()
        backup = {
            "ownerKey": _encrypt_owner_key(owner_scalar, passphrase),
            "ownerPubkey": bytes_to_hex(owner_pubkey),
        }

    receipt = _post(args.endpoint, "/admin/init",
                    {"ownerPubkey": bytes_to_hex(owner_pubkey)})
    if hex_to_bytes(receipt["measurement"]) != expected:
        raise CliError(EXIT_VERIFY, "receipt measurement mismatch; nothing persisted")

    # sanity: the encrypted backup must open with our key and match the address
    master_key = envelope_mod.open_envelope(
        owner_scalar, Envelope.from_bytes(hex_to_bytes(receipt["encryptedMasterKey"])))
    if derive_address(master_key).to_hex() != receipt["masterAddress"]:
        raise CliError(EXIT_VERIFY, "backup key does not match master address")

    backup["receipt"] = receipt
    backup_path.write_text(json.dumps(backup, indent=2) + "\n")
    _emit(args, {"masterAddress": receipt["masterAddress"],
                 "backupFile": str(backup_path)},
          f"master address: {receipt['masterAddress']}\n"
          f"backup written: {backup_path}")
    return EXIT_OK


def cmd_export_key(args) -> int:
    backup = _load_backup(Path(args.backup_file))
    passphrase = _passphrase(args.passphrase_env)
    owner_scalar = _decrypt_owner_key(backup["ownerKey"], passphrase)
    receipt = backup.get("receipt")
    if not receipt:
        raise CliError(EXIT_USAGE, "backup holds no initialization receipt")
    try:
        master_key = envelope_mod.open_envelope(
            owner_scalar,
            Envelope.from_bytes(hex_to_bytes(receipt["encryptedMasterKey"])))
    except EnvelopeAuthError as exc:
        raise CliError(EXIT_VERIFY, f"backup decryption failed: {exc}") from exc
    derived = derive_address(master_key).to_hex()
    if derived != receipt["masterAddress"]:
        raise CliError(EXIT_VERIFY,
                       f"derived address {derived} does not match recorded "
                       f"{receipt['masterAddress']} (corrupted backup)")
    print(bytes_to_hex(master_key))
    return EXIT_OK


def cmd_status(args) -> int:
    info = _get(args.endpoint, "/info")
    if args.json:
        print(json.dumps(info, indent=2))
        return EXIT_OK
    if not info.get("initialized"):
        print("enclave: uninitialized")
        print(f"measurement: {info['measurement']}")
        return EXIT_OK
    rows = [("account", "role", "balance (wei)", "nonce")]
    master = info["master"]
    for address in [master, *info["secondaries"]]:
        role = "master" if address == master else "secondary"
        balance = info["balances"].get(address)
        nonce = info["nextNonces"].get(address)
        rows.append((address, role,
                     str(hex_to_quantity(balance)) if balance else "?",
                     str(hex_to_quantity(nonce)) if nonce else "?"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for row in rows:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    pending = info.get("pending", [])
    print(f"pending relays: {len(pending)}")
    for record in pending:
        print(f"  {record['txHash']}  {record['state']}  signer {record['signer']}")
    return EXIT_OK


def cmd_secondary(args) -> int:
    if args.action == "add":
        body = _post(args.endpoint, "/admin/secondary", {"count": args.count})
        _emit(args, body, "\n".join(body["addresses"]))
    else:  # fund
        body = _post(args.endpoint, "/admin/fund", {})
        _emit(args, body, f"{body['dispatched']} funding transaction(s) dispatched")
    return EXIT_OK


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, indent=2) if args.json else text)


def build_parser() -> _Parser:
    parser = _Parser(prog="metarelay-owner",
                     description="DApp-owner ceremony and oversight")
    parser.add_argument("--endpoint", default="http://127.0.0.1:8600",
                        help="relay service base URL")
    parser.add_argument("--json", action="store_true", help="machine output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="run the initialization ceremony")
    p_init.add_argument("--measurement", required=True,
                        help="expected enclave measurement (0x...)")
    p_init.add_argument("--backup-file", default="owner-backup.json")
    p_init.add_argument("--passphrase-env", default=DEFAULT_PASSPHRASE_ENV)
    p_init.set_defaults(func=cmd_init)

    p_export = sub.add_parser("export-key",
                              help="decrypt the master key backup to stdout")
    p_export.add_argument("--backup-file", default="owner-backup.json")
    p_export.add_argument("--passphrase-env", default=DEFAULT_PASSPHRASE_ENV)
    p_export.set_defaults(func=cmd_export_key)

    p_status = sub.add_parser("status", help="accounts, balances, pending relays")
    p_status.set_defaults(func=cmd_status)

    p_sec = sub.add_parser("secondary", help="manage confined signing accounts")
    sec_sub = p_sec.add_subparsers(dest="action", required=True)
    p_add = sec_sub.add_parser("add")
    p_add.add_argument("count", type=int)
    p_add.set_defaults(func=cmd_secondary)
    p_fund = sec_sub.add_parser("fund")
    p_fund.set_defaults(func=cmd_secondary)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
