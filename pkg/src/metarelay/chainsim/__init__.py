"""Mock Ethereum node: validation state machine plus JSON-RPC over HTTP."""

from .state import (
    CallEntry,
    ChainSim,
    ForwardExecutionFailed,
    Receipt,
    TxRejected,
    gas_used_model,
)
from .rpc import RPCError, receipt_to_json, rpc_dispatch, start_server

__all__ = [
    "CallEntry",
    "ChainSim",
    "ForwardExecutionFailed",
    "Receipt",
    "TxRejected",
    "gas_used_model",
    "RPCError",
    "receipt_to_json",
    "rpc_dispatch",
    "start_server",
]
