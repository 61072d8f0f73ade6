"""Pure transaction construction: RLP, keccak, ECDSA, fees, forwarding."""

from .keccak import keccak256
from .rlp import RLPDecodeError
from .secp256k1 import InvalidPointError, InvalidScalarError, RecoveryError
from .signing import Address, Signature, derive_address, recover_signer, sign_digest
from .transaction import (
    MIN_GAS_LIMIT,
    InvalidVError,
    SignedTransaction,
    TransactionDecodeError,
    UnsignedTransaction,
    compute_fee,
    decode_signed,
    encode_signed,
    signing_preimage,
)
from .forward import (
    ForwardDecodeError,
    ForwardRequest,
    append_sender,
    decode_forward_calldata,
    encode_forward_calldata,
    extract_sender,
    forward_digest,
    sign_forward_request,
    verify_forward,
)

__all__ = [
    "keccak256",
    "RLPDecodeError",
    "InvalidPointError",
    "InvalidScalarError",
    "RecoveryError",
    "Address",
    "Signature",
    "derive_address",
    "recover_signer",
    "sign_digest",
    "MIN_GAS_LIMIT",
    "InvalidVError",
    "SignedTransaction",
    "TransactionDecodeError",
    "UnsignedTransaction",
    "compute_fee",
    "decode_signed",
    "encode_signed",
    "signing_preimage",
    "ForwardDecodeError",
    "ForwardRequest",
    "append_sender",
    "decode_forward_calldata",
    "encode_forward_calldata",
    "extract_sender",
    "forward_digest",
    "sign_forward_request",
    "verify_forward",
]
