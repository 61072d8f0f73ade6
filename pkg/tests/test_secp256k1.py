import secrets

import pytest
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    Prehashed,
    encode_dss_signature,
)
from cryptography.hazmat.primitives import hashes
from hypothesis import given, settings
from hypothesis import strategies as st

from metarelay.txcore import secp256k1
from metarelay.txcore.signing import (
    Address,
    InvalidScalarError,
    RecoveryError,
    Signature,
    derive_address,
    recover_signer,
    sign_digest,
)

from vectors import ADDRESS, RECOVERY


def test_address_frozen_vectors():
    assert len(ADDRESS) >= 10
    for key_hex, addr_hex in ADDRESS:
        assert derive_address(bytes.fromhex(key_hex)).hex() == addr_hex


def test_spec_address_example():
    key = (1).to_bytes(32, "big")
    assert derive_address(key).to_hex() == (
        "0x7e5f4552091a69125d5dfcb7b8c2659029395bdf")


def test_scalar_bounds():
    with pytest.raises(InvalidScalarError):
        derive_address((0).to_bytes(32, "big"))
    with pytest.raises(InvalidScalarError):
        derive_address(secp256k1.N.to_bytes(32, "big"))
    derive_address((secp256k1.N - 1).to_bytes(32, "big"))  # boundary is valid


def test_address_stable_across_calls():
    key = secrets.token_bytes(32)
    assert derive_address(key) == derive_address(key)


def test_recovery_frozen_vectors():
    assert len(RECOVERY) >= 10
    for digest_hex, r_hex, s_hex, recid, addr_hex in RECOVERY:
        sig = Signature(int(r_hex, 16), int(s_hex, 16), recid)
        assert recover_signer(bytes.fromhex(digest_hex), sig).hex() == addr_hex


def test_sign_is_deterministic_and_low_s():
    key, digest = secrets.token_bytes(32), secrets.token_bytes(32)
    first = sign_digest(key, digest)
    second = sign_digest(key, digest)
    assert first == second
    assert first.is_low_s


def test_sign_recover_roundtrip_fixed():
    key, digest = secrets.token_bytes(32), secrets.token_bytes(32)
    assert recover_signer(digest, sign_digest(key, digest)) == derive_address(key)


def test_tampered_digest_changes_recovery():
    key, digest = secrets.token_bytes(32), bytearray(secrets.token_bytes(32))
    sig = sign_digest(key, bytes(digest))
    digest[7] ^= 0x10
    try:
        recovered = recover_signer(bytes(digest), sig)
    except RecoveryError:
        return
    assert recovered != derive_address(key)


def test_recover_rejects_out_of_range():
    digest = secrets.token_bytes(32)
    with pytest.raises(ValueError):
        Signature(0, 1, 0)
    with pytest.raises(RecoveryError):
        secp256k1.recover(digest, secp256k1.N, 5, 0)
    with pytest.raises(RecoveryError):
        secp256k1.recover(digest, 5, 5, 2)


def _openssl_verify(scalar: int, digest: bytes, sig: Signature) -> bool:
    pub = ec.derive_private_key(scalar, ec.SECP256K1()).public_key()
    try:
        pub.verify(encode_dss_signature(sig.r, sig.s), digest,
                   ec.ECDSA(Prehashed(hashes.SHA256())))
        return True
    except InvalidSignature:
        return False


@given(st.integers(min_value=1, max_value=secp256k1.N - 1),
       st.binary(min_size=32, max_size=32))
@settings(max_examples=25, deadline=None)
def test_signatures_verify_under_openssl(scalar, digest):
    sig = sign_digest(scalar, digest)
    assert sig.is_low_s
    assert _openssl_verify(scalar, digest, sig)
    assert recover_signer(digest, sig) == derive_address(scalar)


def test_public_point_matches_openssl():
    for _ in range(5):
        scalar = secp256k1.generate_scalar(secrets.token_bytes)
        ours = secp256k1.public_point(scalar)
        theirs = ec.derive_private_key(scalar, ec.SECP256K1()) \
            .public_key().public_numbers()
        assert ours == (theirs.x, theirs.y)


def test_ecdh_agreement():
    a = secp256k1.generate_scalar(secrets.token_bytes)
    b = secp256k1.generate_scalar(secrets.token_bytes)
    shared_ab = secp256k1.ecdh_shared_x(a, secp256k1.public_point(b))
    shared_ba = secp256k1.ecdh_shared_x(b, secp256k1.public_point(a))
    assert shared_ab == shared_ba


def test_point_codec():
    scalar = secp256k1.generate_scalar(secrets.token_bytes)
    encoded = secp256k1.encode_point(secp256k1.public_point(scalar))
    assert len(encoded) == 64
    assert secp256k1.decode_point(encoded) == secp256k1.public_point(scalar)
    with pytest.raises(secp256k1.InvalidPointError):
        secp256k1.decode_point(b"\x00" * 64)
    with pytest.raises(secp256k1.InvalidPointError):
        secp256k1.decode_point(encoded[:-1])
