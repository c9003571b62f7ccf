"""SHA-256 implemented from scratch: pad, split into 512-bit blocks, iterate the
compression function from the standard initial value, emit a 256-bit digest.

The hash state is an immutable value: ``update`` and ``compress`` return new
states instead of mutating, so a state can be copied, forked, and finalized
more than once. Digests display in the dash-grouped form used throughout this
project (8 groups of 8 lowercase hex digits).

No ``hashlib`` anywhere in this module; the test suite compares against it as
an independent oracle. For bulk workloads see :mod:`siot.hashbatch`, a
vectorized front-end over the same constants.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MASK32 = 0xFFFFFFFF

# Initial hash value: first 32 bits of the fractional parts of the square
# roots of the first 8 primes.
IHV0 = (
    0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
    0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19,
)

# Round constants: first 32 bits of the fractional parts of the cube roots of
# the first 64 primes.
K = (
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5,
    0x3956C25B, 0x59F111F1, 0x923F82A4, 0xAB1C5ED5,
    0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174,
    0xE49B69C1, 0xEFBE4786, 0x0FC19DC6, 0x240CA1CC,
    0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7,
    0xC6E00BF3, 0xD5A79147, 0x06CA6351, 0x14292967,
    0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85,
    0xA2BFE8A1, 0xA81A664B, 0xC24B8B70, 0xC76C51A3,
    0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5,
    0x391C0CB3, 0x4ED8AA4A, 0x5B9CCA4F, 0x682E6FF3,
    0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
)

BLOCK_SIZE = 64  # 512 bits
DIGEST_SIZE = 32


class MessageTooLong(Exception):
    """Message bit-length would reach 2**64, which the length field cannot encode."""


class Digest256(bytes):
    """A 32-byte SHA-256 digest.

    Compares as raw bytes; ``str()`` gives the dash-grouped display form.
    """

    def __new__(cls, raw: bytes) -> "Digest256":
        b = bytes(raw)
        if len(b) != DIGEST_SIZE:
            raise ValueError(f"digest must be exactly {DIGEST_SIZE} bytes, got {len(b)}")
        return super().__new__(cls, b)

    def __str__(self) -> str:
        return format_digest(self)

    def __repr__(self) -> str:
        return f"Digest256({format_digest(self)!r})"


@dataclass(frozen=True)
class HashState:
    """Immutable hashing state: chaining value, message-length counter, and the
    0-63 buffered octets of an incomplete block."""

    chaining: tuple[int, ...] = IHV0
    total_bits: int = 0
    pending: bytes = b""


def initial_state() -> HashState:
    """Fresh state with the standard initial chaining value."""
    return HashState()


def pad(message: bytes) -> bytes:
    """Pad a whole message to a multiple of 64 octets.

    Appends 0x80, the minimum number of zero octets, then the original
    bit-length as a 64-bit big-endian integer.
    """
    bit_len = 8 * len(message)
    if bit_len >= 1 << 64:
        raise MessageTooLong(f"message is {bit_len} bits; limit is 2**64 - 1")
    return message + _padding(bit_len)


def _padding(total_bits: int) -> bytes:
    # Zero fill so that data + 0x80 + zeros + 8-byte length is block-aligned.
    used = (total_bits // 8) % BLOCK_SIZE
    zeros = (BLOCK_SIZE - 9 - used) % BLOCK_SIZE
    return b"\x80" + b"\x00" * zeros + struct.pack(">Q", total_bits)


def _compress_words(chaining: tuple[int, ...], buf: bytes, off: int = 0) -> tuple[int, ...]:
    """One application of the block compression to an 8-word chaining value.

    This is the hot path for every signature in the system, so it trades
    looks for speed: eight rounds per loop iteration with the working
    variables renamed instead of shuffled (the classic unroll), choice as
    ``g ^ (e & (f ^ g))``, majority as ``((a | b) & c) | (a & b)``, and all
    rotations inlined. The plain one-round-per-iteration form is what the
    unit tests cross-check block by block.
    """
    w = list(struct.unpack_from(">16I", buf, off))
    wappend = w.append
    for i in range(16, 64):
        x = w[i - 15]
        y = w[i - 2]
        wappend((w[i - 16]
                 + (((x >> 7 | x << 25) ^ (x >> 18 | x << 14) ^ (x >> 3)) & MASK32)
                 + w[i - 7]
                 + (((y >> 17 | y << 15) ^ (y >> 19 | y << 13) ^ (y >> 10)) & MASK32)) & MASK32)

    a, b, c, d, e, f, g, h = chaining
    k = K
    for i in range(0, 64, 8):
        t = (h + (((e >> 6 | e << 26) ^ (e >> 11 | e << 21) ^ (e >> 25 | e << 7)) & MASK32) + (g ^ (e & (f ^ g))) + k[i] + w[i]) & MASK32; d = (d + t) & MASK32; h = (t + (((a >> 2 | a << 30) ^ (a >> 13 | a << 19) ^ (a >> 22 | a << 10)) & MASK32) + (((a | b) & c) | (a & b))) & MASK32
        t = (g + (((d >> 6 | d << 26) ^ (d >> 11 | d << 21) ^ (d >> 25 | d << 7)) & MASK32) + (f ^ (d & (e ^ f))) + k[i + 1] + w[i + 1]) & MASK32; c = (c + t) & MASK32; g = (t + (((h >> 2 | h << 30) ^ (h >> 13 | h << 19) ^ (h >> 22 | h << 10)) & MASK32) + (((h | a) & b) | (h & a))) & MASK32
        t = (f + (((c >> 6 | c << 26) ^ (c >> 11 | c << 21) ^ (c >> 25 | c << 7)) & MASK32) + (e ^ (c & (d ^ e))) + k[i + 2] + w[i + 2]) & MASK32; b = (b + t) & MASK32; f = (t + (((g >> 2 | g << 30) ^ (g >> 13 | g << 19) ^ (g >> 22 | g << 10)) & MASK32) + (((g | h) & a) | (g & h))) & MASK32
        t = (e + (((b >> 6 | b << 26) ^ (b >> 11 | b << 21) ^ (b >> 25 | b << 7)) & MASK32) + (d ^ (b & (c ^ d))) + k[i + 3] + w[i + 3]) & MASK32; a = (a + t) & MASK32; e = (t + (((f >> 2 | f << 30) ^ (f >> 13 | f << 19) ^ (f >> 22 | f << 10)) & MASK32) + (((f | g) & h) | (f & g))) & MASK32
        t = (d + (((a >> 6 | a << 26) ^ (a >> 11 | a << 21) ^ (a >> 25 | a << 7)) & MASK32) + (c ^ (a & (b ^ c))) + k[i + 4] + w[i + 4]) & MASK32; h = (h + t) & MASK32; d = (t + (((e >> 2 | e << 30) ^ (e >> 13 | e << 19) ^ (e >> 22 | e << 10)) & MASK32) + (((e | f) & g) | (e & f))) & MASK32
        t = (c + (((h >> 6 | h << 26) ^ (h >> 11 | h << 21) ^ (h >> 25 | h << 7)) & MASK32) + (b ^ (h & (a ^ b))) + k[i + 5] + w[i + 5]) & MASK32; g = (g + t) & MASK32; c = (t + (((d >> 2 | d << 30) ^ (d >> 13 | d << 19) ^ (d >> 22 | d << 10)) & MASK32) + (((d | e) & f) | (d & e))) & MASK32
        t = (b + (((g >> 6 | g << 26) ^ (g >> 11 | g << 21) ^ (g >> 25 | g << 7)) & MASK32) + (a ^ (g & (h ^ a))) + k[i + 6] + w[i + 6]) & MASK32; f = (f + t) & MASK32; b = (t + (((c >> 2 | c << 30) ^ (c >> 13 | c << 19) ^ (c >> 22 | c << 10)) & MASK32) + (((c | d) & e) | (c & d))) & MASK32
        t = (a + (((f >> 6 | f << 26) ^ (f >> 11 | f << 21) ^ (f >> 25 | f << 7)) & MASK32) + (h ^ (f & (g ^ h))) + k[i + 7] + w[i + 7]) & MASK32; e = (e + t) & MASK32; a = (t + (((b >> 2 | b << 30) ^ (b >> 13 | b << 19) ^ (b >> 22 | b << 10)) & MASK32) + (((b | c) & d) | (b & c))) & MASK32

    c0, c1, c2, c3, c4, c5, c6, c7 = chaining
    return (
        (c0 + a) & MASK32,
        (c1 + b) & MASK32,
        (c2 + c) & MASK32,
        (c3 + d) & MASK32,
        (c4 + e) & MASK32,
        (c5 + f) & MASK32,
        (c6 + g) & MASK32,
        (c7 + h) & MASK32,
    )


def compress(state: HashState, block: bytes) -> HashState:
    """Apply the 64-round compression for one 512-bit block.

    Returns a new state with the chaining value updated; the input state is
    untouched. The length counter and pending buffer are the caller's problem
    (``update`` manages them for the streaming path).
    """
    if len(block) != BLOCK_SIZE:
        raise ValueError(f"block must be exactly {BLOCK_SIZE} bytes, got {len(block)}")
    return HashState(_compress_words(state.chaining, bytes(block)),
                     state.total_bits, state.pending)


def update(state: HashState, data: bytes) -> HashState:
    """Absorb ``data``, compressing every completed 64-octet block in order.

    Partial trailing input stays buffered in the returned state.
    """
    total_bits = state.total_bits + 8 * len(data)
    if total_bits >= 1 << 64:
        raise MessageTooLong("total message length reached 2**64 bits")
    buf = state.pending + bytes(data)
    whole = len(buf) - (len(buf) % BLOCK_SIZE)
    chaining = state.chaining
    for off in range(0, whole, BLOCK_SIZE):
        chaining = _compress_words(chaining, buf, off)
    return HashState(chaining, total_bits, buf[whole:])


def finalize(state: HashState) -> Digest256:
    """Pad the buffered tail, compress the remaining block(s), and serialize
    the chaining value big-endian. Pure: the same state finalizes to the same
    digest any number of times."""
    tail = state.pending + _padding(state.total_bits)
    chaining = state.chaining
    for off in range(0, len(tail), BLOCK_SIZE):
        chaining = _compress_words(chaining, tail, off)
    return Digest256(struct.pack(">8I", *chaining))


def digest_of(message: bytes) -> Digest256:
    """One-shot digest; identical to update-then-finalize from a fresh state."""
    return finalize(update(initial_state(), message))


def format_digest(digest: bytes) -> str:
    """Display form: 8 dash-separated groups of 8 lowercase hex digits."""
    h = bytes(digest).hex()
    if len(h) != 64:
        raise ValueError("can only format 32-byte digests")
    return "-".join(h[i:i + 8] for i in range(0, 64, 8))


def parse_digest(text: str) -> Digest256:
    """Inverse of :func:`format_digest`; also accepts plain 64-char hex."""
    h = text.strip().replace("-", "").lower()
    if len(h) != 64:
        raise ValueError(f"expected 64 hex digits, got {len(h)}")
    return Digest256(bytes.fromhex(h))


def _self_test() -> None:
    # Guards against corrupted constant tables at import time.
    expected = "ba7816bf-8f01cfea-414140de-5dae2223-b00361a3-96177a9c-b410ff61-f20015ad"
    if format_digest(digest_of(b"abc")) != expected:
        raise RuntimeError("SHA-256 self-test failed: constant tables are corrupt")


_self_test()
