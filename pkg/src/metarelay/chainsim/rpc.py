"""JSON-RPC 2.0 surface of the mock node, served over HTTP."""

from __future__ import annotations

import argparse
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..txcore.hexcodec import (
    bytes_to_hex,
    hex_to_address,
    hex_to_bytes,
    hex_to_quantity,
    quantity_to_hex,
)
from .state import ChainSim, Receipt, TxRejected

log = logging.getLogger(__name__)

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
SERVER_ERROR = -32000


class RPCError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def receipt_to_json(receipt: Receipt) -> dict:
    return {
        "transactionHash": bytes_to_hex(receipt.tx_hash),
        "status": "0x1" if receipt.status else "0x0",
        "gasUsed": quantity_to_hex(receipt.gas_used),
        "feePaid": quantity_to_hex(receipt.fee_paid),
        "blockNumber": quantity_to_hex(receipt.block_number),
        "from": receipt.from_addr.to_hex(),
        "to": receipt.to.to_hex(),
    }


def rpc_dispatch(sim: ChainSim, method: str, params: list):
    """Execute one RPC method; results use Ethereum hex-quantity encoding."""
    try:
        if method == "eth_chainId":
            return quantity_to_hex(sim.chain_id)
        if method == "eth_gasPrice":
            return quantity_to_hex(sim.base_gas_price)
        if method == "eth_getTransactionCount":
            return quantity_to_hex(sim.get_nonce(hex_to_address(params[0])))
        if method == "eth_getBalance":
            return quantity_to_hex(sim.get_balance(hex_to_address(params[0])))
        if method == "eth_sendRawTransaction":
            try:
                return bytes_to_hex(sim.send_raw(hex_to_bytes(params[0])))
            except TxRejected as exc:
                raise RPCError(SERVER_ERROR, str(exc)) from exc
        if method == "eth_getTransactionReceipt":
            receipt = sim.get_receipt(hex_to_bytes(params[0]))
            return None if receipt is None else receipt_to_json(receipt)
        if method == "dev_faucet":
            # test/ops extension, not part of the standard surface
            return quantity_to_hex(
                sim.faucet(hex_to_address(params[0]), hex_to_quantity(params[1])))
    except RPCError:
        raise
    except (IndexError, TypeError, ValueError) as exc:
        raise RPCError(INVALID_PARAMS, f"invalid params: {exc}") from exc
    raise RPCError(METHOD_NOT_FOUND, f"unknown method {method}")


class _Handler(BaseHTTPRequestHandler):
    sim: ChainSim = None

    def do_POST(self):  # noqa: N802  (stdlib naming)
        length = int(self.headers.get("content-length", 0))
        body = self.rfile.read(length)
        response = {"jsonrpc": "2.0", "id": None}
        try:
            request = json.loads(body)
            response["id"] = request.get("id")
            if not isinstance(request, dict) or "method" not in request:
                raise RPCError(INVALID_REQUEST, "not a JSON-RPC request")
            result = rpc_dispatch(self.sim, request["method"],
                                  request.get("params", []))
            response["result"] = result
        except json.JSONDecodeError:
            response["error"] = {"code": PARSE_ERROR, "message": "parse error"}
        except RPCError as exc:
            response["error"] = {"code": exc.code, "message": exc.message}
        payload = json.dumps(response).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, fmt, *args):
        log.debug("rpc http: " + fmt, *args)


def start_server(sim: ChainSim, host: str = "127.0.0.1",
                 port: int = 0) -> ThreadingHTTPServer:
    """Serve the node in a daemon thread; returns the bound server."""
    handler = type("BoundHandler", (_Handler,), {"sim": sim})
    server = ThreadingHTTPServer((host, port), handler)
    thread = threading.Thread(target=server.serve_forever,
                              name="chainsim-rpc", daemon=True)
    thread.start()
    return server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="mock Ethereum node")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8545)
    parser.add_argument("--chain-id", type=int, default=1337)
    parser.add_argument("--gas-price", type=int, default=10 ** 9)
    parser.add_argument("--forwarder", help="trusted forwarder address (0x...)")
    parser.add_argument("--seal-delay", type=float, default=0.0,
                        help="seconds before a receipt becomes visible")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    forwarder = hex_to_address(args.forwarder) if args.forwarder else None
    sim = ChainSim(chain_id=args.chain_id, base_gas_price=args.gas_price,
                   forwarder=forwarder, seal_delay=args.seal_delay)
    server = ThreadingHTTPServer(
        (args.host, args.port), type("BoundHandler", (_Handler,), {"sim": sim}))
    log.info("mock node on %s:%d, chain id %d", args.host,
             server.server_address[1], args.chain_id)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
