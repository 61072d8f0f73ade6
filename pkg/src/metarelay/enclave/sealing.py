"""Sealing: authenticated encryption of the keystore under a platform-bound key.

The sealing key is derived (extract-and-expand) from an operator-supplied
platform secret and the enclave measurement, reproducing the hardware-binding
semantics: a blob sealed on one platform or build does not open on another.

Blob layout: 4-byte magic, 1-byte format version, 32-byte measurement,
12-byte nonce, 8-byte version counter, ciphertext, 16-byte tag. Everything
before the ciphertext doubles as the authenticated header.
"""

from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import (
    EmptySecretError,
    MeasurementMismatchError,
    RollbackError,
    SealAuthError,
)
from .keystore import Keystore

_MAGIC = b"MRKS"
_FORMAT = 1
_NONCE_LEN = 12
_TAG_LEN = 16
_HEADER_LEN = 4 + 1 + 32 + _NONCE_LEN + 8


def derive_sealing_key(platform_secret: bytes, measurement: bytes) -> bytes:
    """Deterministic 32-byte key bound to both the secret and the measurement."""
    if not platform_secret:
        raise EmptySecretError("platform secret must be non-empty")
    if len(measurement) != 32:
        raise ValueError("measurement must be 32 bytes")
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=measurement,
                info=b"metarelay sealing key v1").derive(platform_secret)


@dataclass(frozen=True)
class SealedBlob:
    measurement: bytes
    nonce: bytes
    version: int
    ciphertext: bytes
    auth_tag: bytes

    def header(self) -> bytes:
        return (_MAGIC + bytes([_FORMAT]) + self.measurement + self.nonce
                + struct.pack(">Q", self.version))

    def to_bytes(self) -> bytes:
        return self.header() + self.ciphertext + self.auth_tag

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SealedBlob":
        if len(raw) < _HEADER_LEN + _TAG_LEN:
            raise SealAuthError("blob too short")
        if raw[:4] != _MAGIC:
            raise SealAuthError("bad magic")
        if raw[4] != _FORMAT:
            raise SealAuthError(f"unsupported blob format {raw[4]}")
        measurement = raw[5:37]
        nonce = raw[37:37 + _NONCE_LEN]
        (version,) = struct.unpack(">Q", raw[37 + _NONCE_LEN:_HEADER_LEN])
        return cls(measurement, nonce, version, raw[_HEADER_LEN:-_TAG_LEN],
                   raw[-_TAG_LEN:])


def seal(keystore: Keystore, sealing_key: bytes, measurement: bytes,
         entropy=secrets.token_bytes) -> SealedBlob:
    nonce = entropy(_NONCE_LEN)
    header = (_MAGIC + bytes([_FORMAT]) + measurement + nonce
              + struct.pack(">Q", keystore.version))
    sealed = AESGCM(sealing_key).encrypt(nonce, keystore.to_bytes(), header)
    return SealedBlob(measurement, nonce, keystore.version,
                      sealed[:-_TAG_LEN], sealed[-_TAG_LEN:])


def unseal(blob, sealing_key: bytes, measurement: bytes,
           min_version: int = 0) -> Keystore:
    """Authenticate and decode; ``min_version`` is the freshest version the
    host has already observed (anti-rollback is detection, not prevention)."""
    if isinstance(blob, (bytes, bytearray)):
        blob = SealedBlob.from_bytes(bytes(blob))
    if blob.measurement != measurement:
        raise MeasurementMismatchError("blob sealed under a different identity")
    if blob.version < min_version:
        raise RollbackError(
            f"blob version {blob.version} older than observed {min_version}")
    try:
        plaintext = AESGCM(sealing_key).decrypt(
            blob.nonce, blob.ciphertext + blob.auth_tag, blob.header())
    except InvalidTag as exc:
        raise SealAuthError("sealed blob failed authentication") from exc
    keystore = Keystore.from_bytes(plaintext)
    if keystore.version != blob.version:
        raise SealAuthError("header version does not match keystore")
    return keystore
