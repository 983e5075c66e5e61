"""Per-core write signatures: a Bloom filter over line addresses with an
exact-set mode for differential testing and for the model checker (exact sets
keep state counts independent of hash aliasing).

Hashing is double hashing over two seeded splitmix64 mixes:
    pos_i = (h1(addr) + i * h2(addr)) mod m,   h2 forced odd,
which is deterministic across runs and platforms."""

from __future__ import annotations

import struct

_MASK64 = (1 << 64) - 1
_SEED1 = 0x9E3779B97F4A7C15
_SEED2 = 0xC2B2AE3D27D4EB4F

SPARSE_TAG = 0x00
DENSE_TAG = 0x01


class SignatureDecodeError(ValueError):
    pass


def _splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def hash_positions(addr: int, k: int, m: int) -> list[int]:
    """The k bit positions in [0, m) an address maps to."""
    h1 = _splitmix64(addr ^ _SEED1) % m
    h2 = _splitmix64(addr ^ _SEED2) | 1
    return [(h1 + i * h2) % m for i in range(k)]


class WriteSignature:
    """May-contain set of line addresses; no false negatives until clear()."""

    __slots__ = ("bits_len", "hashes", "exact", "bits", "exact_set")

    def __init__(self, bits_len: int = 1008, hashes: int = 4, exact: bool = False):
        self.bits_len = bits_len
        self.hashes = hashes
        self.exact = exact
        self.bits = 0
        self.exact_set: frozenset[int] = frozenset()

    def copy(self) -> WriteSignature:
        dup = WriteSignature(self.bits_len, self.hashes, self.exact)
        dup.bits = self.bits
        dup.exact_set = self.exact_set
        return dup

    def key(self) -> tuple:
        if self.exact:
            return tuple(sorted(self.exact_set))
        return (self.bits,)

    def insert(self, addr: int) -> None:
        if self.exact:
            self.exact_set = self.exact_set | {addr}
            return
        for pos in hash_positions(addr, self.hashes, self.bits_len):
            self.bits |= 1 << pos

    def may_contain(self, addr: int) -> bool:
        if self.exact:
            return addr in self.exact_set
        for pos in hash_positions(addr, self.hashes, self.bits_len):
            if not self.bits >> pos & 1:
                return False
        return True

    def clear(self) -> None:
        self.bits = 0
        self.exact_set = frozenset()

    @property
    def empty(self) -> bool:
        return not self.bits and not self.exact_set

    def set_positions(self) -> list[int]:
        out = []
        bits = self.bits
        idx = 0
        while bits:
            if bits & 1:
                out.append(idx)
            bits >>= 1
            idx += 1
        return out

    def serialize(self) -> bytes:
        """Smaller of the dense bitmap and the sparse position list; ties go
        dense. Dense: tag + ceil(m/8) bitmap bytes (little-endian bit order).
        Sparse: tag + u16 count + u16 positions, ascending."""
        if self.exact:
            raise ValueError("serialize applies to bloom mode only")
        dense_len = (self.bits_len + 7) // 8
        positions = self.set_positions()
        sparse_size = 3 + 2 * len(positions)
        dense_size = 1 + dense_len
        if sparse_size < dense_size:
            out = bytearray([SPARSE_TAG]) + struct.pack("<H", len(positions))
            for pos in positions:
                out += struct.pack("<H", pos)
            return bytes(out)
        return bytes([DENSE_TAG]) + self.bits.to_bytes(dense_len, "little")


def deserialize(payload: bytes, bits_len: int = 1008, hashes: int = 4) -> WriteSignature:
    if not payload:
        raise SignatureDecodeError("empty payload")
    sig = WriteSignature(bits_len, hashes)
    tag = payload[0]
    body = payload[1:]
    if tag == DENSE_TAG:
        if len(body) != (bits_len + 7) // 8:
            raise SignatureDecodeError("bad dense length")
        bits = int.from_bytes(body, "little")
        if bits >> bits_len:
            raise SignatureDecodeError("bits set beyond signature width")
        sig.bits = bits
    elif tag == SPARSE_TAG:
        if len(body) < 2:
            raise SignatureDecodeError("truncated sparse header")
        (count,) = struct.unpack("<H", body[:2])
        if len(body) != 2 + 2 * count:
            raise SignatureDecodeError("bad sparse length")
        for i in range(count):
            (pos,) = struct.unpack("<H", body[2 + 2 * i:4 + 2 * i])
            if pos >= bits_len:
                raise SignatureDecodeError("position out of range")
            sig.bits |= 1 << pos
    else:
        raise SignatureDecodeError(f"unknown payload tag {tag:#x}")
    return sig
