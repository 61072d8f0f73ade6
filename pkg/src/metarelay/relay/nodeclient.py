"""Thin JSON-RPC client for the node endpoint."""

from __future__ import annotations

import itertools

import requests as http_requests

from ..txcore.hexcodec import bytes_to_hex, hex_to_quantity, quantity_to_hex
from ..txcore.signing import Address


class NodeUnreachableError(Exception):
    """Transport-level failure talking to the node."""


class NodeRejectionError(Exception):
    """The node answered with an RPC error object."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class NodeClient:
    def __init__(self, endpoint: str, timeout: float = 5.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._ids = itertools.count(1)
        self._session = http_requests.Session()

    def call(self, method: str, params: list):
        payload = {"jsonrpc": "2.0", "id": next(self._ids),
                   "method": method, "params": params}
        try:
            response = self._session.post(self.endpoint, json=payload,
                                          timeout=self.timeout)
            body = response.json()
        except (http_requests.RequestException, ValueError) as exc:
            raise NodeUnreachableError(f"{method}: {exc}") from exc
        if "error" in body:
            error = body["error"]
            raise NodeRejectionError(error.get("code", 0),
                                     error.get("message", "unknown error"))
        return body.get("result")

    def chain_id(self) -> int:
        return hex_to_quantity(self.call("eth_chainId", []))

    def gas_price(self) -> int:
        return hex_to_quantity(self.call("eth_gasPrice", []))

    def get_balance(self, address: Address) -> int:
        return hex_to_quantity(
            self.call("eth_getBalance", [address.to_hex(), "latest"]))

    def get_nonce(self, address: Address) -> int:
        return hex_to_quantity(
            self.call("eth_getTransactionCount", [address.to_hex(), "latest"]))

    def send_raw(self, raw: bytes) -> str:
        return self.call("eth_sendRawTransaction", [bytes_to_hex(raw)])

    def get_receipt(self, tx_hash: bytes):
        return self.call("eth_getTransactionReceipt", [bytes_to_hex(tx_hash)])

    def faucet(self, address: Address, amount: int) -> int:
        return hex_to_quantity(
            self.call("dev_faucet", [address.to_hex(), quantity_to_hex(amount)]))
