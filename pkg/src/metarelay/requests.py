"""Meta-transaction request model and its JSON wire form.

The same schema is used as the HTTP request body and, serialized, as the
plaintext of an encrypted request envelope. Hex fields are 0x-prefixed
lowercase; quantities are accepted as hex strings or JSON integers and always
emitted as hex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .envelope import Envelope
from .txcore.forward import ForwardRequest
from .txcore.hexcodec import (
    bytes_to_hex,
    hex_to_address,
    hex_to_bytes,
    hex_to_quantity,
    quantity_to_hex,
)
from .txcore.signing import Address, Signature


class RequestParseError(ValueError):
    """Request body is not a well-formed meta-transaction request."""


@dataclass(frozen=True)
class MetaTxRequest:
    to: Optional[Address] = None
    data: bytes = b""
    value: int = 0
    gas_limit: Optional[int] = None
    gas_price: Optional[int] = None
    forward: Optional[ForwardRequest] = None
    envelope: Optional[Envelope] = None

    def __post_init__(self):
        if self.envelope is not None:
            if (self.to is not None or self.data or self.value or self.forward
                    or self.gas_limit is not None or self.gas_price is not None):
                raise RequestParseError("envelope excludes plaintext fields")
        elif self.forward is not None:
            if self.to is not None or self.data:
                raise RequestParseError("forward excludes explicit to/data")
        elif self.to is None:
            raise RequestParseError("missing recipient")

    def to_json_dict(self) -> dict:
        out: dict = {}
        if self.envelope is not None:
            out["envelope"] = {
                "ephemeralPubkey": bytes_to_hex(self.envelope.ephemeral_pubkey),
                "ciphertext": bytes_to_hex(self.envelope.ciphertext),
                "authTag": bytes_to_hex(self.envelope.auth_tag),
            }
            return out
        if self.forward is not None:
            out["forward"] = _forward_to_json(self.forward)
        else:
            out["to"] = self.to.to_hex()
            out["data"] = bytes_to_hex(self.data)
        if self.value:
            out["value"] = quantity_to_hex(self.value)
        if self.gas_limit is not None:
            out["gasLimit"] = quantity_to_hex(self.gas_limit)
        if self.gas_price is not None:
            out["gasPrice"] = quantity_to_hex(self.gas_price)
        return out

    @classmethod
    def from_json_dict(cls, body) -> "MetaTxRequest":
        if not isinstance(body, dict):
            raise RequestParseError("request body must be an object")
        try:
            envelope = None
            if "envelope" in body:
                env = body["envelope"]
                envelope = Envelope(
                    ephemeral_pubkey=hex_to_bytes(env["ephemeralPubkey"]),
                    ciphertext=hex_to_bytes(env["ciphertext"]),
                    auth_tag=hex_to_bytes(env["authTag"]),
                )
            forward = None
            if "forward" in body:
                forward = _forward_from_json(body["forward"])
            return cls(
                to=hex_to_address(body["to"]) if "to" in body else None,
                data=hex_to_bytes(body["data"]) if "data" in body else b"",
                value=hex_to_quantity(body.get("value", 0)),
                gas_limit=(hex_to_quantity(body["gasLimit"])
                           if "gasLimit" in body else None),
                gas_price=(hex_to_quantity(body["gasPrice"])
                           if "gasPrice" in body else None),
                forward=forward,
                envelope=envelope,
            )
        except RequestParseError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise RequestParseError(f"malformed request: {exc}") from exc

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization; envelope plaintext and transcript form."""
        return json.dumps(self.to_json_dict(), sort_keys=True,
                          separators=(",", ":")).encode()

    @classmethod
    def from_canonical_bytes(cls, raw: bytes) -> "MetaTxRequest":
        try:
            body = json.loads(raw.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise RequestParseError(f"bad request encoding: {exc}") from exc
        return cls.from_json_dict(body)


def _forward_to_json(fr: ForwardRequest) -> dict:
    return {
        "from": fr.from_addr.to_hex(),
        "to": fr.to.to_hex(),
        "value": quantity_to_hex(fr.value),
        "gas": quantity_to_hex(fr.gas),
        "userNonce": quantity_to_hex(fr.user_nonce),
        "data": bytes_to_hex(fr.data),
        "sig": {
            "r": quantity_to_hex(fr.user_sig.r),
            "s": quantity_to_hex(fr.user_sig.s),
            "recoveryId": fr.user_sig.recovery_id,
        },
    }


def _forward_from_json(body: dict) -> ForwardRequest:
    sig = body["sig"]
    return ForwardRequest(
        from_addr=hex_to_address(body["from"]),
        to=hex_to_address(body["to"]),
        value=hex_to_quantity(body.get("value", 0)),
        gas=hex_to_quantity(body["gas"]),
        user_nonce=hex_to_quantity(body["userNonce"]),
        data=hex_to_bytes(body.get("data", "0x")),
        user_sig=Signature(hex_to_quantity(sig["r"]), hex_to_quantity(sig["s"]),
                           int(sig["recoveryId"])),
    )
