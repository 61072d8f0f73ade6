"""secp256k1 group arithmetic, deterministic ECDSA, and public-key recovery.

Scalar multiplication uses Jacobian coordinates; base-point multiplication
additionally uses a precomputed 4-bit comb table, which keeps a full sign
well under the service latency budget without native code.
"""

from __future__ import annotations

import hashlib
import hmac

P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
HALF_N = N // 2
GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8

_INFINITY = (0, 1, 0)


class InvalidScalarError(ValueError):
    """Private scalar outside [1, N-1]."""


class InvalidPointError(ValueError):
    """Byte string that does not name a point on the curve."""


class RecoveryError(ValueError):
    """No public point recoverable from the (digest, signature) pair."""


def _jac_double(X1, Y1, Z1):
    if not Y1 or not Z1:
        return _INFINITY
    A = X1 * X1 % P
    B = Y1 * Y1 % P
    C = B * B % P
    t = X1 + B
    D = 2 * (t * t - A - C) % P
    E = 3 * A % P
    F = E * E % P
    X3 = (F - 2 * D) % P
    Y3 = (E * (D - X3) - 8 * C) % P
    Z3 = 2 * Y1 * Z1 % P
    return X3, Y3, Z3


def _jac_add(X1, Y1, Z1, X2, Y2, Z2):
    if not Z1:
        return X2, Y2, Z2
    if not Z2:
        return X1, Y1, Z1
    Z1Z1 = Z1 * Z1 % P
    Z2Z2 = Z2 * Z2 % P
    U1 = X1 * Z2Z2 % P
    U2 = X2 * Z1Z1 % P
    S1 = Y1 * Z2 * Z2Z2 % P
    S2 = Y2 * Z1 * Z1Z1 % P
    if U1 == U2:
        if S1 != S2:
            return _INFINITY
        return _jac_double(X1, Y1, Z1)
    H = (U2 - U1) % P
    I = 4 * H * H % P
    J = H * I % P
    r = 2 * (S2 - S1) % P
    V = U1 * I % P
    X3 = (r * r - J - 2 * V) % P
    Y3 = (r * (V - X3) - 2 * S1 * J) % P
    Z3 = (Z1 + Z2)
    Z3 = (Z3 * Z3 - Z1Z1 - Z2Z2) % P
    Z3 = Z3 * H % P
    return X3, Y3, Z3


def _jac_add_affine(X1, Y1, Z1, x2, y2):
    # mixed addition, Z2 = 1
    if not Z1:
        return x2, y2, 1
    Z1Z1 = Z1 * Z1 % P
    U2 = x2 * Z1Z1 % P
    S2 = y2 * Z1 * Z1Z1 % P
    if X1 == U2:
        if Y1 != S2:
            return _INFINITY
        return _jac_double(X1, Y1, Z1)
    H = (U2 - X1) % P
    HH = H * H % P
    I = 4 * HH % P
    J = H * I % P
    r = 2 * (S2 - Y1) % P
    V = X1 * I % P
    X3 = (r * r - J - 2 * V) % P
    Y3 = (r * (V - X3) - 2 * Y1 * J) % P
    Z3 = (Z1 + H)
    Z3 = (Z3 * Z3 - Z1Z1 - HH) % P
    return X3, Y3, Z3


def _to_affine(X, Y, Z):
    if not Z:
        return None
    z_inv = pow(Z, -1, P)
    z_inv2 = z_inv * z_inv % P
    return X * z_inv2 % P, Y * z_inv2 * z_inv % P


def _build_base_table():
    # table[w][d] = affine point for digit d+1 at 4-bit window w of the scalar
    table = []
    window_base = (GX, GY, 1)
    for _ in range(64):
        row = []
        acc = _INFINITY
        base_affine = _to_affine(*window_base)
        for _d in range(15):
            acc = _jac_add_affine(*acc, *base_affine)
            row.append(_to_affine(*acc))
        table.append(tuple(row))
        window_base = _jac_add_affine(*acc, *base_affine)  # 16x previous base
    return table


_BASE_TABLE = _build_base_table()


def _mul_base_jac(k: int):
    k %= N
    acc = _INFINITY
    for w in range(64):
        digit = (k >> (4 * w)) & 0xF
        if digit:
            acc = _jac_add_affine(*acc, *_BASE_TABLE[w][digit - 1])
    return acc


def _mul_point_jac(k: int, point):
    k %= N
    if k == 0:
        return _INFINITY
    x, y = point
    # 4-bit fixed window built on the fly
    table = [(x, y, 1)]
    for _ in range(14):
        table.append(_jac_add_affine(*table[-1], x, y))
    acc = _INFINITY
    for shift in range(4 * ((k.bit_length() + 3) // 4) - 4, -1, -4):
        if acc[2]:
            acc = _jac_double(*acc)
            acc = _jac_double(*acc)
            acc = _jac_double(*acc)
            acc = _jac_double(*acc)
        digit = (k >> shift) & 0xF
        if digit:
            acc = _jac_add(*acc, *table[digit - 1])
    return acc


def validate_scalar(value: int) -> int:
    if not 0 < value < N:
        raise InvalidScalarError("scalar must be in [1, n-1]")
    return value


def scalar_from_bytes(key: bytes) -> int:
    if len(key) != 32:
        raise InvalidScalarError("private key must be 32 bytes")
    return validate_scalar(int.from_bytes(key, "big"))


def generate_scalar(entropy) -> int:
    """Rejection-sample a uniform scalar from an os.urandom-like callable."""
    while True:
        candidate = int.from_bytes(entropy(32), "big")
        if 0 < candidate < N:
            return candidate


def public_point(private_key: int) -> tuple[int, int]:
    validate_scalar(private_key)
    return _to_affine(*_mul_base_jac(private_key))


def encode_point(point: tuple[int, int]) -> bytes:
    """64-byte uncompressed x || y, no 0x04 prefix."""
    return point[0].to_bytes(32, "big") + point[1].to_bytes(32, "big")


def decode_point(data: bytes) -> tuple[int, int]:
    if len(data) != 64:
        raise InvalidPointError("expected 64-byte uncompressed point")
    x = int.from_bytes(data[:32], "big")
    y = int.from_bytes(data[32:], "big")
    if x >= P or y >= P or (y * y - (x * x * x + 7)) % P != 0:
        raise InvalidPointError("point is not on the curve")
    return x, y


def _rfc6979_nonce(private_key: int, digest: bytes, extra: int = 0) -> int:
    key_bytes = private_key.to_bytes(32, "big")
    V = b"\x01" * 32
    K = b"\x00" * 32
    K = hmac.new(K, V + b"\x00" + key_bytes + digest, hashlib.sha256).digest()
    V = hmac.new(K, V, hashlib.sha256).digest()
    K = hmac.new(K, V + b"\x01" + key_bytes + digest, hashlib.sha256).digest()
    V = hmac.new(K, V, hashlib.sha256).digest()
    skip = extra
    while True:
        V = hmac.new(K, V, hashlib.sha256).digest()
        k = int.from_bytes(V, "big")
        if 1 <= k < N and skip == 0:
            return k
        if 1 <= k < N:
            skip -= 1
        K = hmac.new(K, V + b"\x00", hashlib.sha256).digest()
        V = hmac.new(K, V, hashlib.sha256).digest()


def sign(private_key: int, digest: bytes) -> tuple[int, int, int]:
    """Deterministic ECDSA; returns (r, s, recovery_id) with s <= n/2."""
    validate_scalar(private_key)
    if len(digest) != 32:
        raise ValueError("digest must be 32 bytes")
    z = int.from_bytes(digest, "big")
    attempt = 0
    while True:
        k = _rfc6979_nonce(private_key, digest, attempt)
        Rx, Ry = _to_affine(*_mul_base_jac(k))
        # Rx >= N would force a recovery id outside {0, 1}; probability ~2^-128
        if Rx >= N:
            attempt += 1
            continue
        r = Rx % N
        if r == 0:
            attempt += 1
            continue
        s = pow(k, -1, N) * (z + r * private_key) % N
        if s == 0:
            attempt += 1
            continue
        recovery_id = Ry & 1
        if s > HALF_N:
            s = N - s
            recovery_id ^= 1
        return r, s, recovery_id


def recover(digest: bytes, r: int, s: int, recovery_id: int) -> tuple[int, int]:
    """Public point that produced (r, s) over digest; raises RecoveryError."""
    if len(digest) != 32:
        raise ValueError("digest must be 32 bytes")
    if not 0 < r < N or not 0 < s < N or recovery_id not in (0, 1):
        raise RecoveryError("signature fields out of range")
    x = r
    y_sq = (pow(x, 3, P) + 7) % P
    y = pow(y_sq, (P + 1) // 4, P)
    if y * y % P != y_sq:
        raise RecoveryError("r is not an x-coordinate on the curve")
    if (y & 1) != recovery_id:
        y = P - y
    z = int.from_bytes(digest, "big")
    r_inv = pow(r, -1, N)
    u1 = -z * r_inv % N
    u2 = s * r_inv % N
    point = _jac_add(*_mul_base_jac(u1), *_mul_point_jac(u2, (x, y)))
    affine = _to_affine(*point)
    if affine is None:
        raise RecoveryError("recovered point at infinity")
    return affine


def ecdh_shared_x(private_key: int, peer_point: tuple[int, int]) -> bytes:
    """x-coordinate of the Diffie-Hellman shared point, 32 bytes."""
    validate_scalar(private_key)
    shared = _to_affine(*_mul_point_jac(private_key, peer_point))
    if shared is None:
        raise InvalidPointError("shared point at infinity")
    return shared[0].to_bytes(32, "big")
