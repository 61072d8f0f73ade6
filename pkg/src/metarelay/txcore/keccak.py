"""Keccak-256 (original multi-rate padding, as used by Ethereum, not SHA3-256)."""

_MASK = (1 << 64) - 1

_ROUND_CONSTANTS = (
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
)

_ROTATIONS = (
    (0, 36, 3, 41, 18),
    (1, 44, 10, 45, 2),
    (62, 6, 43, 15, 61),
    (28, 55, 25, 21, 56),
    (27, 20, 39, 8, 14),
)

# Flat state layout: lane (x, y) lives at index x + 5*y. The rho/pi step is
# precomputed as (destination, source, rotation) triples so the permutation
# loop below does no index arithmetic.
_PI_STEPS = tuple(
    (y + 5 * ((2 * x + 3 * y) % 5), x + 5 * y, _ROTATIONS[x][y])
    for x in range(5)
    for y in range(5)
)

_RATE = 136  # bytes; rate 1088 bits, capacity 512 bits


def _permute(a: list) -> None:
    mask = _MASK
    steps = _PI_STEPS
    for rc in _ROUND_CONSTANTS:
        # theta
        c0 = a[0] ^ a[5] ^ a[10] ^ a[15] ^ a[20]
        c1 = a[1] ^ a[6] ^ a[11] ^ a[16] ^ a[21]
        c2 = a[2] ^ a[7] ^ a[12] ^ a[17] ^ a[22]
        c3 = a[3] ^ a[8] ^ a[13] ^ a[18] ^ a[23]
        c4 = a[4] ^ a[9] ^ a[14] ^ a[19] ^ a[24]
        d0 = c4 ^ (((c1 << 1) | (c1 >> 63)) & mask)
        d1 = c0 ^ (((c2 << 1) | (c2 >> 63)) & mask)
        d2 = c1 ^ (((c3 << 1) | (c3 >> 63)) & mask)
        d3 = c2 ^ (((c4 << 1) | (c4 >> 63)) & mask)
        d4 = c3 ^ (((c0 << 1) | (c0 >> 63)) & mask)
        for i in (0, 5, 10, 15, 20):
            a[i] ^= d0
            a[i + 1] ^= d1
            a[i + 2] ^= d2
            a[i + 3] ^= d3
            a[i + 4] ^= d4
        # rho + pi
        b = [0] * 25
        for dst, src, rot in steps:
            v = a[src]
            b[dst] = ((v << rot) | (v >> (64 - rot))) & mask if rot else v
        # chi
        for i in (0, 5, 10, 15, 20):
            b0, b1, b2, b3, b4 = b[i], b[i + 1], b[i + 2], b[i + 3], b[i + 4]
            a[i] = b0 ^ (~b1 & b2)
            a[i + 1] = b1 ^ (~b2 & b3)
            a[i + 2] = b2 ^ (~b3 & b4)
            a[i + 3] = b3 ^ (~b4 & b0)
            a[i + 4] = b4 ^ (~b0 & b1)
        # iota
        a[0] ^= rc


def _sponge_256(data: bytes, pad_byte: int) -> bytes:
    # pad_byte 0x01 is the original Keccak domain; 0x06 would give SHA3-256
    state = [0] * 25
    pad_len = _RATE - (len(data) % _RATE)
    if pad_len == 1:
        padded = data + bytes([pad_byte | 0x80])
    else:
        padded = data + bytes([pad_byte]) + b"\x00" * (pad_len - 2) + b"\x80"
    for off in range(0, len(padded), _RATE):
        block = padded[off:off + _RATE]
        for i in range(17):
            state[i] ^= int.from_bytes(block[8 * i:8 * i + 8], "little")
        _permute(state)
    return b"".join(state[i].to_bytes(8, "little") for i in range(4))


def keccak256(data: bytes) -> bytes:
    """Keccak-256 digest of ``data`` (32 bytes)."""
    return _sponge_256(data, 0x01)
