"""Identity-preserving inner-signature scheme (trusted-forwarder convention).

An end user signs a digest binding their call to a chain, a forwarder address,
and a per-user replay nonce. The relayer wraps that request into the outer
calldata with the verified sender appended as a 20-byte suffix; the forwarder
recipient re-verifies and executes with the user's identity attached.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import rlp
from .keccak import keccak256
from .rlp import RLPDecodeError
from .signing import Address, Signature, recover_signer, sign_digest


class ForwardDecodeError(ValueError):
    """Calldata does not carry a well-formed embedded forward request."""


@dataclass(frozen=True)
class ForwardRequest:
    from_addr: Address
    to: Address
    value: int
    gas: int
    user_nonce: int
    data: bytes
    user_sig: Signature


def append_sender(calldata: bytes, user: Address) -> bytes:
    """Suffix the verified 20-byte sender, the trusted-forwarder convention."""
    return bytes(calldata) + bytes(user)


def extract_sender(calldata: bytes) -> tuple[bytes, Address]:
    if len(calldata) < 20:
        raise ForwardDecodeError("calldata shorter than a sender suffix")
    return calldata[:-20], Address(calldata[-20:])


def forward_digest(req: ForwardRequest, chain_id: int, forwarder: Address) -> bytes:
    """Digest the user signs; domain-separated by chain id and forwarder."""
    return keccak256(rlp.encode([
        chain_id,
        bytes(forwarder),
        bytes(req.from_addr),
        bytes(req.to),
        req.value,
        req.gas,
        req.user_nonce,
        keccak256(req.data),
    ]))


def sign_forward_request(user_key: bytes | int, to: Address, value: int, gas: int,
                         user_nonce: int, data: bytes, chain_id: int,
                         forwarder: Address) -> ForwardRequest:
    """Client-side helper: build and inner-sign a forward request."""
    from .signing import derive_address

    unsigned = ForwardRequest(
        from_addr=derive_address(user_key), to=to, value=value, gas=gas,
        user_nonce=user_nonce, data=data,
        user_sig=Signature(1, 1, 0),  # placeholder, replaced below
    )
    digest = forward_digest(unsigned, chain_id, forwarder)
    sig = sign_digest(user_key, digest)
    return ForwardRequest(unsigned.from_addr, to, value, gas, user_nonce, data, sig)


def verify_forward(req: ForwardRequest, chain_id: int, forwarder: Address) -> bool:
    """True iff the inner signature recovers to the claimed sender."""
    try:
        recovered = recover_signer(forward_digest(req, chain_id, forwarder), req.user_sig)
    except ValueError:
        return False
    return recovered == req.from_addr


def encode_forward_calldata(req: ForwardRequest) -> bytes:
    """Outer calldata for the forwarder: RLP body plus the sender suffix."""
    body = rlp.encode([
        bytes(req.from_addr),
        bytes(req.to),
        req.value,
        req.gas,
        req.user_nonce,
        req.data,
        req.user_sig.r,
        req.user_sig.s,
        req.user_sig.recovery_id,
    ])
    return append_sender(body, req.from_addr)


def decode_forward_calldata(calldata: bytes) -> tuple[ForwardRequest, Address]:
    """Inverse of encode_forward_calldata; returns the request and the suffix."""
    body, claimed = extract_sender(calldata)
    try:
        items = rlp.decode(body)
        if not isinstance(items, list) or len(items) != 9:
            raise ForwardDecodeError("expected a nine-item request body")
        if not all(isinstance(item, bytes) for item in items):
            raise ForwardDecodeError("nested list in request body")
        recovery_id = rlp.decode_int(items[8])
        req = ForwardRequest(
            from_addr=Address(items[0]),
            to=Address(items[1]),
            value=rlp.decode_int(items[2]),
            gas=rlp.decode_int(items[3]),
            user_nonce=rlp.decode_int(items[4]),
            data=items[5],
            user_sig=Signature(rlp.decode_int(items[6]), rlp.decode_int(items[7]),
                               recovery_id),
        )
    except (RLPDecodeError, ValueError) as exc:
        raise ForwardDecodeError(str(exc)) from exc
    return req, claimed
