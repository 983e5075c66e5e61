"""Private cache lines with per-byte write bits, address arithmetic, and the
flat-memory last-write oracle used by both engines."""

from __future__ import annotations

from enum import IntEnum


class LineState(IntEnum):
    I = 0   # invalid
    V = 1   # valid
    PI = 2  # partially invalid: clean bytes may be stale, dirty bytes are safe


def split_address(byte_addr: int, line_size: int) -> tuple[int, int]:
    """Split a global byte address into (line address, byte offset)."""
    return byte_addr // line_size, byte_addr % line_size


class L1Line:
    """One private cache line: data bytes plus a write-bit mask (bit i set means
    byte i was written locally and not yet committed)."""

    __slots__ = ("addr", "state", "data", "write_bits")

    def __init__(self, addr: int, state: LineState, data: bytes, write_bits: int = 0):
        self.addr = addr
        self.state = state
        self.data = data
        self.write_bits = write_bits

    def copy(self) -> L1Line:
        return L1Line(self.addr, self.state, self.data, self.write_bits)

    def key(self) -> tuple:
        return (self.addr, int(self.state), self.data, self.write_bits)

    @property
    def dirty(self) -> bool:
        return self.state != LineState.I and self.write_bits != 0

    def write(self, offset: int, value: bytes) -> None:
        end = offset + len(value)
        self.data = self.data[:offset] + value + self.data[end:]
        self.write_bits |= ((1 << len(value)) - 1) << offset

    def read(self, offset: int, length: int) -> bytes:
        return self.data[offset:offset + length]

    def range_dirty(self, offset: int, length: int) -> bool:
        """True when every byte in [offset, offset+length) has its write bit set."""
        mask = ((1 << length) - 1) << offset
        return self.write_bits & mask == mask

    def clear_write_bits(self) -> None:
        self.write_bits = 0


def merge_fetched(line: L1Line, fetched: bytes) -> None:
    """Fill a PI line's clean bytes from `fetched`, leaving dirty bytes and the
    write bits untouched; the line becomes V."""
    if line.state != LineState.PI:
        raise ValueError("merge_fetched requires a partially-invalid line")
    merged = bytearray(fetched)
    bits = line.write_bits
    idx = 0
    while bits:
        if bits & 1:
            merged[idx] = line.data[idx]
        bits >>= 1
        idx += 1
    line.data = bytes(merged)
    line.state = LineState.V


def extract_dirty(line: L1Line) -> list[tuple[int, int]]:
    """The (offset, value) pairs whose write bits are set, ascending by offset."""
    out = []
    bits = line.write_bits
    idx = 0
    while bits:
        if bits & 1:
            out.append((idx, line.data[idx]))
        bits >>= 1
        idx += 1
    return out


class FlatMemoryOracle:
    """Ground-truth memory updated exactly at program-order write events; reads
    must observe the value of the last write (zero before any write)."""

    __slots__ = ("line_size", "_mem")

    def __init__(self, line_size: int):
        self.line_size = line_size
        self._mem: dict[tuple[int, int], int] = {}

    def apply_write(self, line_addr: int, offset: int, value: bytes) -> None:
        for i, b in enumerate(value):
            self._mem[(line_addr, offset + i)] = b

    def read(self, line_addr: int, offset: int, length: int = 1) -> bytes:
        return bytes(self._mem.get((line_addr, offset + i), 0) for i in range(length))

    def copy(self) -> FlatMemoryOracle:
        dup = FlatMemoryOracle(self.line_size)
        dup._mem = dict(self._mem)
        return dup

    def key(self) -> tuple:
        return tuple(sorted(self._mem.items()))
