"""Wire messages between cores and the LLC, with canonical byte serialization
and the flit-size accounting used everywhere traffic is charged.

Wire-size convention: every message pays a 16-byte (one flit) header, except
the signature response, which pays a 1-byte header so that the worst-case
serialized signature (127 bytes) still fits eight 16-byte flits."""

from __future__ import annotations

import struct

HEADER_BYTES = 16
SIG_RESP_HEADER_BYTES = 1


class Message:
    """Immutable once constructed; key() is cached and used for hashing,
    canonical network ordering, and state reconstruction."""

    __slots__ = ("_k",)

    def key(self) -> tuple:
        try:
            return self._k
        except AttributeError:
            self._k = self._key()
            return self._k

    def _key(self) -> tuple:
        raise NotImplementedError

    def __repr__(self) -> str:  # labels in checker traces
        return f"{type(self).__name__}{self.key()[1:]}"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())


class GetLine(Message):
    __slots__ = ("addr", "requester")

    def __init__(self, addr: int, requester: int):
        self.addr = addr
        self.requester = requester

    def _key(self):
        return ("GetLine", self.addr, self.requester)


class Data(Message):
    __slots__ = ("addr", "data", "dest")

    def __init__(self, addr: int, data: bytes, dest: int):
        self.addr = addr
        self.data = data
        self.dest = dest

    def _key(self):
        return ("Data", self.addr, self.data, self.dest)


class WriteBack(Message):
    """Dirty bytes plus write-bit mask. cnt=1 for an individual eviction,
    cnt=0 for write-backs inside an SI/CM episode. A data-less WriteBack with
    count_msg set closes an episode: its cnt is the number of cnt=0
    write-backs the LLC should have received."""

    __slots__ = ("addr", "dirty", "write_bits", "cnt", "sender", "count_msg")

    def __init__(self, addr: int, dirty: tuple[tuple[int, int], ...], write_bits: int,
                 cnt: int, sender: int, count_msg: bool = False):
        self.addr = addr
        self.dirty = tuple(dirty)
        self.write_bits = write_bits
        self.cnt = cnt
        self.sender = sender
        self.count_msg = count_msg

    def _key(self):
        return ("WriteBack", self.addr, self.dirty, self.write_bits, self.cnt,
                self.sender, self.count_msg)


class PutAck(Message):
    __slots__ = ("addr", "dest")

    def __init__(self, addr: int, dest: int):
        self.addr = addr
        self.dest = dest

    def _key(self):
        return ("PutAck", self.addr, self.dest)


class PutAllAck(Message):
    __slots__ = ("dest",)

    def __init__(self, dest: int):
        self.dest = dest

    def _key(self):
        return ("PutAllAck", self.dest)


class GetWrSig(Message):
    __slots__ = ("requester",)

    def __init__(self, requester: int):
        self.requester = requester

    def _key(self):
        return ("GetWrSig", self.requester)


class WrSigResp(Message):
    __slots__ = ("payload", "dest")

    def __init__(self, payload: bytes, dest: int):
        self.payload = payload
        self.dest = dest

    def _key(self):
        return ("WrSigResp", self.payload, self.dest)


def from_key(key: tuple) -> Message:
    """Rebuild a message from its canonical key."""
    kind = key[0]
    if kind == "GetLine":
        return GetLine(key[1], key[2])
    if kind == "Data":
        return Data(key[1], key[2], key[3])
    if kind == "WriteBack":
        return WriteBack(key[1], key[2], key[3], key[4], key[5], key[6])
    if kind == "PutAck":
        return PutAck(key[1], key[2])
    if kind == "PutAllAck":
        return PutAllAck(key[1])
    if kind == "GetWrSig":
        return GetWrSig(key[1])
    if kind == "WrSigResp":
        return WrSigResp(key[1], key[2])
    raise ValueError(f"unknown message key {key!r}")


class DecodeError(ValueError):
    pass


_TYPE_IDS = {GetLine: 1, Data: 2, WriteBack: 3, PutAck: 4, PutAllAck: 5,
             GetWrSig: 6, WrSigResp: 7}


def serialize(msg: Message, line_size: int) -> bytes:
    """Canonical little-endian encoding; `deserialize` is its exact inverse."""
    out = bytearray([_TYPE_IDS[type(msg)]])
    if isinstance(msg, GetLine):
        out += struct.pack("<QB", msg.addr, msg.requester)
    elif isinstance(msg, Data):
        if len(msg.data) != line_size:
            raise ValueError("Data payload must be one full line")
        out += struct.pack("<QB", msg.addr, msg.dest) + msg.data
    elif isinstance(msg, WriteBack):
        mask_bytes = msg.write_bits.to_bytes((line_size + 7) // 8, "little")
        out += struct.pack("<QBIB", msg.addr, msg.sender, msg.cnt, int(msg.count_msg))
        out += mask_bytes
        out += struct.pack("<H", len(msg.dirty))
        for off, val in msg.dirty:
            out += struct.pack("<HB", off, val)
    elif isinstance(msg, PutAck):
        out += struct.pack("<QB", msg.addr, msg.dest)
    elif isinstance(msg, PutAllAck):
        out += struct.pack("<B", msg.dest)
    elif isinstance(msg, GetWrSig):
        out += struct.pack("<B", msg.requester)
    elif isinstance(msg, WrSigResp):
        out += struct.pack("<BH", msg.dest, len(msg.payload)) + msg.payload
    else:
        raise ValueError(f"unknown message type {type(msg)}")
    return bytes(out)


def deserialize(raw: bytes, line_size: int) -> Message:
    try:
        kind = raw[0]
        body = raw[1:]
        if kind == 1:
            addr, req = struct.unpack("<QB", body)
            return GetLine(addr, req)
        if kind == 2:
            addr, dest = struct.unpack("<QB", body[:9])
            data = body[9:]
            if len(data) != line_size:
                raise DecodeError("bad Data payload length")
            return Data(addr, data, dest)
        if kind == 3:
            addr, sender, cnt, is_count = struct.unpack("<QBIB", body[:14])
            mask_len = (line_size + 7) // 8
            write_bits = int.from_bytes(body[14:14 + mask_len], "little")
            pos = 14 + mask_len
            (ndirty,) = struct.unpack("<H", body[pos:pos + 2])
            pos += 2
            dirty = []
            for _ in range(ndirty):
                off, val = struct.unpack("<HB", body[pos:pos + 3])
                dirty.append((off, val))
                pos += 3
            if pos != len(body):
                raise DecodeError("trailing bytes in WriteBack")
            return WriteBack(addr, tuple(dirty), write_bits, cnt, sender, bool(is_count))
        if kind == 4:
            addr, dest = struct.unpack("<QB", body)
            return PutAck(addr, dest)
        if kind == 5:
            (dest,) = struct.unpack("<B", body)
            return PutAllAck(dest)
        if kind == 6:
            (req,) = struct.unpack("<B", body)
            return GetWrSig(req)
        if kind == 7:
            dest, plen = struct.unpack("<BH", body[:3])
            payload = body[3:]
            if len(payload) != plen:
                raise DecodeError("bad WrSigResp payload length")
            return WrSigResp(payload, dest)
    except (struct.error, IndexError) as exc:
        raise DecodeError(str(exc)) from exc
    raise DecodeError(f"unknown message kind {raw[:1]!r}")


def wire_bytes(msg: Message, line_size: int) -> int:
    """Accounted on-wire size; independent of the `serialize` encoding."""
    if isinstance(msg, Data):
        return HEADER_BYTES + line_size
    if isinstance(msg, WriteBack):
        if msg.count_msg:
            return HEADER_BYTES
        return HEADER_BYTES + len(msg.dirty) + (line_size + 7) // 8
    if isinstance(msg, WrSigResp):
        return SIG_RESP_HEADER_BYTES + len(msg.payload)
    return HEADER_BYTES


def flits_for_bytes(nbytes: int, flit_size: int) -> int:
    return (nbytes + flit_size - 1) // flit_size


def flits(msg: Message, line_size: int, flit_size: int) -> int:
    return flits_for_bytes(wire_bytes(msg, line_size), flit_size)


def signature_roundtrip_flits(signature_bits: int, flit_size: int) -> int:
    """Fixed flit cost the timing model charges per signature fetch: control
    bytes plus the dense bitmap (eight flits at the 1008-bit default)."""
    return flits_for_bytes(2 + (signature_bits + 7) // 8, flit_size)
