"""Authenticated encryption envelope for requests and the master-key backup.

One crypto surface for every sealed payload that crosses a trust boundary:
an ephemeral Diffie-Hellman agreement on the signing curve, extract-and-expand
key derivation, and AES-GCM. The GCM nonce is derived alongside the key, so an
envelope is fully described by (ephemeral public key, ciphertext, tag).
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .txcore import secp256k1
from .txcore.secp256k1 import InvalidPointError

_INFO = b"metarelay envelope v1"
_TAG_LEN = 16


class EnvelopeAuthError(ValueError):
    """Envelope failed authentication or is structurally invalid."""


@dataclass(frozen=True)
class Envelope:
    ephemeral_pubkey: bytes  # 64-byte uncompressed point
    ciphertext: bytes
    auth_tag: bytes

    def to_bytes(self) -> bytes:
        return self.ephemeral_pubkey + self.ciphertext + self.auth_tag

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        if len(data) < 64 + _TAG_LEN:
            raise EnvelopeAuthError("envelope too short")
        return cls(data[:64], data[64:-_TAG_LEN], data[-_TAG_LEN:])


def generate_keypair(entropy=secrets.token_bytes) -> tuple[int, bytes]:
    """(private scalar, 64-byte public key)."""
    scalar = secp256k1.generate_scalar(entropy)
    return scalar, secp256k1.encode_point(secp256k1.public_point(scalar))


def _derive_key_nonce(shared_x: bytes, ephemeral_pubkey: bytes) -> tuple[bytes, bytes]:
    okm = HKDF(algorithm=hashes.SHA256(), length=44, salt=ephemeral_pubkey,
               info=_INFO).derive(shared_x)
    return okm[:32], okm[32:]


def seal(recipient_pubkey: bytes, plaintext: bytes,
         entropy=secrets.token_bytes) -> Envelope:
    """Encrypt to the holder of recipient_pubkey's private scalar."""
    try:
        recipient_point = secp256k1.decode_point(recipient_pubkey)
    except InvalidPointError as exc:
        raise EnvelopeAuthError(f"bad recipient key: {exc}") from exc
    eph_scalar, eph_pub = generate_keypair(entropy)
    shared = secp256k1.ecdh_shared_x(eph_scalar, recipient_point)
    key, nonce = _derive_key_nonce(shared, eph_pub)
    sealed = AESGCM(key).encrypt(nonce, plaintext, eph_pub)
    return Envelope(eph_pub, sealed[:-_TAG_LEN], sealed[-_TAG_LEN:])


def open_envelope(private_key: int, env: Envelope) -> bytes:
    """Decrypt and authenticate; raises EnvelopeAuthError on any mismatch."""
    try:
        eph_point = secp256k1.decode_point(env.ephemeral_pubkey)
        shared = secp256k1.ecdh_shared_x(private_key, eph_point)
    except (InvalidPointError, secp256k1.InvalidScalarError) as exc:
        raise EnvelopeAuthError(str(exc)) from exc
    key, nonce = _derive_key_nonce(shared, env.ephemeral_pubkey)
    try:
        return AESGCM(key).decrypt(nonce, env.ciphertext + env.auth_tag,
                                   env.ephemeral_pubkey)
    except InvalidTag as exc:
        raise EnvelopeAuthError("envelope authentication failed") from exc
