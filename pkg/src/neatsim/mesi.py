"""Directory-based MESI at message level with transient states, for the model
checker. The normative transition tables live in docs/mesi-protocol.md; any
deviation between that file and this module is a bug.

System model: requests (core to directory) and core-to-core responses travel on
an unordered network; directory-to-core messages are delivered FIFO per
destination core. The protocol is deadlock-free under exactly that assumption
(a PutAck may never overtake a forwarded request to the same core)."""

from __future__ import annotations

from enum import IntEnum

from .lines import LineState  # noqa: F401  (re-exported convenience)
from .neat import (AccessResult, CompletedAccess, PendingAccess, ProtocolError)

DIR = -1

# Sentinel: the destination cannot consume this message yet; delivery is
# deferred (the checker simply does not take that transition).
STALL = object()


class CacheState(IntEnum):
    I = 0
    IS_D = 1
    IM_AD = 2
    IM_A = 3
    S = 4
    SM_AD = 5
    SM_A = 6
    M = 7
    E = 8
    MI_A = 9
    EI_A = 10
    SI_A = 11
    II_A = 12


STABLE = {CacheState.I, CacheState.S, CacheState.E, CacheState.M}
WRITABLE = {CacheState.M, CacheState.E}
# states whose data payload is dead (canonicalized to zeros in hashing)
_DATA_DEAD = {CacheState.IS_D, CacheState.IM_AD, CacheState.SM_AD,
              CacheState.SI_A, CacheState.II_A}
_ACKS_LIVE = {CacheState.IM_AD, CacheState.IM_A, CacheState.SM_AD, CacheState.SM_A}
_EVICTING = {CacheState.MI_A, CacheState.EI_A, CacheState.SI_A, CacheState.II_A}


class DirState(IntEnum):
    I = 0
    S = 1
    E = 2
    M = 3
    S_D = 4


class MesiMessage:
    __slots__ = ("addr", "dest", "src", "_k")

    def __init__(self, addr: int, dest: int, src: int):
        self.addr = addr
        self.dest = dest
        self.src = src

    def key(self) -> tuple:
        try:
            return self._k
        except AttributeError:
            self._k = self._key()
            return self._k

    def _key(self) -> tuple:
        return (type(self).__name__, self.addr, self.dest, self.src)

    def __repr__(self):
        return f"{type(self).__name__}(addr={self.addr}, dest={self.dest}, src={self.src})"

    def __eq__(self, other):
        return type(self) is type(other) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    @property
    def dir_to_core(self) -> bool:
        return self.src == DIR and self.dest != DIR


class GetS(MesiMessage):
    def __init__(self, addr, requester):
        super().__init__(addr, DIR, requester)


class GetM(MesiMessage):
    def __init__(self, addr, requester):
        super().__init__(addr, DIR, requester)


class PutS(MesiMessage):
    def __init__(self, addr, requester):
        super().__init__(addr, DIR, requester)


class PutE(MesiMessage):
    def __init__(self, addr, requester):
        super().__init__(addr, DIR, requester)


class PutM(MesiMessage):
    __slots__ = ("data",)

    def __init__(self, addr, data: bytes, requester):
        super().__init__(addr, DIR, requester)
        self.data = data

    def _key(self):
        return super()._key() + (self.data,)


class FwdGetS(MesiMessage):
    __slots__ = ("requester",)

    def __init__(self, addr, requester, owner):
        super().__init__(addr, owner, DIR)
        self.requester = requester

    def _key(self):
        return super()._key() + (self.requester,)


class FwdGetM(FwdGetS):
    pass


class Inv(MesiMessage):
    __slots__ = ("requester",)

    def __init__(self, addr, requester, sharer):
        super().__init__(addr, sharer, DIR)
        self.requester = requester

    def _key(self):
        return super()._key() + (self.requester,)


class InvAck(MesiMessage):
    def __init__(self, addr, sender, requester):
        super().__init__(addr, requester, sender)


class MesiData(MesiMessage):
    __slots__ = ("data", "ack_count", "excl", "from_owner")

    def __init__(self, addr, data: bytes, dest, ack_count=0, excl=False,
                 from_owner=False, src=DIR):
        super().__init__(addr, dest, src)
        self.data = data
        self.ack_count = ack_count
        self.excl = excl
        self.from_owner = from_owner

    def _key(self):
        return super()._key() + (self.data, self.ack_count, self.excl, self.from_owner)


class DataToDir(MesiMessage):
    __slots__ = ("data",)

    def __init__(self, addr, data: bytes, sender):
        super().__init__(addr, DIR, sender)
        self.data = data

    def _key(self):
        return super()._key() + (self.data,)


class PutAckDir(MesiMessage):
    def __init__(self, addr, dest):
        super().__init__(addr, dest, DIR)


def mesi_message_from_key(key: tuple) -> MesiMessage:
    """Rebuild a MESI message from its canonical key
    (name, addr, dest, src, *extras)."""
    kind, addr, dest, src = key[0], key[1], key[2], key[3]
    if kind == "GetS":
        return GetS(addr, src)
    if kind == "GetM":
        return GetM(addr, src)
    if kind == "PutS":
        return PutS(addr, src)
    if kind == "PutE":
        return PutE(addr, src)
    if kind == "PutM":
        return PutM(addr, key[4], src)
    if kind == "FwdGetS":
        return FwdGetS(addr, key[4], dest)
    if kind == "FwdGetM":
        return FwdGetM(addr, key[4], dest)
    if kind == "Inv":
        return Inv(addr, key[4], dest)
    if kind == "InvAck":
        return InvAck(addr, src, dest)
    if kind == "MesiData":
        return MesiData(addr, key[4], dest, key[5], key[6], key[7], src)
    if kind == "DataToDir":
        return DataToDir(addr, key[4], src)
    if kind == "PutAckDir":
        return PutAckDir(addr, dest)
    raise ValueError(f"unknown MESI message key {key!r}")


class MesiLine:
    __slots__ = ("state", "data", "acks")

    def __init__(self, state: CacheState, data: bytes, acks: int = 0):
        self.state = state
        self.data = data
        self.acks = acks

    def copy(self) -> MesiLine:
        return MesiLine(self.state, self.data, self.acks)

    def key(self, line_size: int) -> tuple:
        data = bytes(line_size) if self.state in _DATA_DEAD else self.data
        acks = self.acks if self.state in _ACKS_LIVE else 0
        return (int(self.state), data, acks)


class MesiCoreState:
    """L1 controller. Absent lines are in state I."""

    __slots__ = ("core_id", "line_size", "lines", "pending")

    def __init__(self, core_id: int, line_size: int):
        self.core_id = core_id
        self.line_size = line_size
        self.lines: dict[int, MesiLine] = {}
        self.pending: PendingAccess | None = None

    def copy(self) -> MesiCoreState:
        dup = MesiCoreState(self.core_id, self.line_size)
        dup.lines = {a: ln.copy() for a, ln in self.lines.items()}
        p = self.pending
        dup.pending = None if p is None else PendingAccess(p.op, p.addr, p.offset,
                                                           p.length, p.value)
        return dup

    def key(self) -> tuple:
        return (None if self.pending is None else self.pending.key(),
                tuple((a, self.lines[a].key(self.line_size))
                      for a in sorted(self.lines)))

    @property
    def blocked(self) -> bool:
        return self.pending is not None

    def state_of(self, addr: int) -> CacheState:
        line = self.lines.get(addr)
        return CacheState.I if line is None else line.state

    def can_access(self, addr: int) -> bool:
        return self.state_of(addr) in STABLE

    def can_evict(self, addr: int) -> bool:
        # one replacement in flight per core: a second eviction waits for the
        # first PutAck (single write-back buffer entry)
        if self.state_of(addr) not in (CacheState.S, CacheState.E, CacheState.M):
            return False
        return not any(ln.state in _EVICTING for ln in self.lines.values())

    # -- program operations -------------------------------------------------

    def access(self, op: str, addr: int, offset: int, length: int = 1,
               value: bytes | None = None):
        if self.blocked:
            raise ProtocolError("access while a request is outstanding")
        state = self.state_of(addr)
        if state not in STABLE:
            raise ProtocolError("access to a line in a transient state")
        if op == "read":
            if state == CacheState.I:
                self.lines[addr] = MesiLine(CacheState.IS_D, bytes(self.line_size))
                self.pending = PendingAccess(op, addr, offset, length, None)
                return [GetS(addr, self.core_id)], AccessResult(hit=False)
            got = self.lines[addr].data[offset:offset + length]
            done = CompletedAccess(self.core_id, op, addr, offset, length, got)
            return [], AccessResult(hit=True, completed=done)
        # write
        if state in (CacheState.M, CacheState.E):
            line = self.lines[addr]
            line.state = CacheState.M  # silent E upgrade
            line.data = line.data[:offset] + value + line.data[offset + length:]
            done = CompletedAccess(self.core_id, op, addr, offset, length, value)
            return [], AccessResult(hit=True, completed=done)
        if state == CacheState.S:
            self.lines[addr].state = CacheState.SM_AD
            self.lines[addr].acks = 0
        else:
            self.lines[addr] = MesiLine(CacheState.IM_AD, bytes(self.line_size))
        self.pending = PendingAccess(op, addr, offset, length, value)
        return [GetM(addr, self.core_id)], AccessResult(hit=False)

    def evict(self, addr: int):
        if not self.can_evict(addr):
            raise ProtocolError("evicting a line that is not in a stable valid "
                                "state, or the write-back buffer is busy")
        line = self.lines.get(addr)
        if line.state == CacheState.S:
            line.state = CacheState.SI_A
            return [PutS(addr, self.core_id)]
        if line.state == CacheState.E:
            line.state = CacheState.EI_A
            return [PutE(addr, self.core_id)]
        line.state = CacheState.MI_A
        return [PutM(addr, line.data, self.core_id)]

    # -- message handlers -----------------------------------------------------

    def on_message(self, msg: MesiMessage):
        """Returns (messages, completed_access | None) or STALL."""
        if isinstance(msg, MesiData):
            return self._on_data(msg)
        if isinstance(msg, InvAck):
            return self._on_inv_ack(msg)
        if isinstance(msg, Inv):
            return self._on_inv(msg)
        if isinstance(msg, FwdGetM):
            return self._on_fwd_get_m(msg)
        if isinstance(msg, FwdGetS):
            return self._on_fwd_get_s(msg)
        if isinstance(msg, PutAckDir):
            return self._on_put_ack(msg)
        raise ProtocolError(f"core cannot handle {msg!r}")

    def _complete(self, line: MesiLine):
        p = self.pending
        self.pending = None
        if p.op == "write":
            line.data = (line.data[:p.offset] + p.value
                         + line.data[p.offset + p.length:])
            return CompletedAccess(self.core_id, "write", p.addr, p.offset,
                                   p.length, p.value)
        got = line.data[p.offset:p.offset + p.length]
        return CompletedAccess(self.core_id, "read", p.addr, p.offset, p.length, got)

    def _on_data(self, msg: MesiData):
        line = self.lines.get(msg.addr)
        if line is None:
            raise ProtocolError("Data for a line with no transient state")
        if line.state == CacheState.IS_D:
            line.data = msg.data
            line.state = CacheState.E if msg.excl else CacheState.S
            return [], self._complete(line)
        if line.state in (CacheState.IM_AD, CacheState.SM_AD):
            line.data = msg.data
            if msg.from_owner:
                line.state = CacheState.M
                return [], self._complete(line)
            line.acks += msg.ack_count
            if line.acks == 0:
                line.state = CacheState.M
                return [], self._complete(line)
            line.state = (CacheState.IM_A if line.state == CacheState.IM_AD
                          else CacheState.SM_A)
            return [], None
        raise ProtocolError(f"Data in state {line.state.name}")

    def _on_inv_ack(self, msg: InvAck):
        line = self.lines.get(msg.addr)
        if line is None or line.state not in _ACKS_LIVE:
            raise ProtocolError("InvAck without a pending write request")
        line.acks -= 1
        if line.state in (CacheState.IM_A, CacheState.SM_A) and line.acks == 0:
            line.state = CacheState.M
            return [], self._complete(line)
        return [], None

    def _on_inv(self, msg: Inv):
        line = self.lines.get(msg.addr)
        state = CacheState.I if line is None else line.state
        ack = InvAck(msg.addr, self.core_id, msg.requester)
        if state == CacheState.S:
            del self.lines[msg.addr]
            return [ack], None
        if state == CacheState.SM_AD:
            line.state = CacheState.IM_AD  # our own GetM continues from I
            return [ack], None
        if state == CacheState.IS_D:
            return STALL
        if state == CacheState.SI_A:
            line.state = CacheState.II_A
            return [ack], None
        if state in (CacheState.I, CacheState.II_A):
            return [ack], None  # late Inv after this copy was already given up
        raise ProtocolError(f"Inv in state {state.name}")

    def _on_fwd_get_s(self, msg: FwdGetS):
        line = self.lines.get(msg.addr)
        state = CacheState.I if line is None else line.state
        if state in (CacheState.M, CacheState.E):
            line.state = CacheState.S
            return [MesiData(msg.addr, line.data, msg.requester, from_owner=True,
                             src=self.core_id),
                    DataToDir(msg.addr, line.data, self.core_id)], None
        if state in (CacheState.MI_A, CacheState.EI_A):
            line.state = CacheState.SI_A
            return [MesiData(msg.addr, line.data, msg.requester, from_owner=True,
                             src=self.core_id),
                    DataToDir(msg.addr, line.data, self.core_id)], None
        if state in _ACKS_LIVE:
            return STALL  # owner-to-be: serve after our own GetM completes
        raise ProtocolError(f"FwdGetS in state {state.name}")

    def _on_fwd_get_m(self, msg: FwdGetM):
        line = self.lines.get(msg.addr)
        state = CacheState.I if line is None else line.state
        if state in (CacheState.M, CacheState.E):
            data = line.data
            del self.lines[msg.addr]
            return [MesiData(msg.addr, data, msg.requester, from_owner=True,
                             src=self.core_id)], None
        if state in (CacheState.MI_A, CacheState.EI_A):
            line.state = CacheState.II_A
            return [MesiData(msg.addr, line.data, msg.requester, from_owner=True,
                             src=self.core_id)], None
        if state in _ACKS_LIVE:
            return STALL
        raise ProtocolError(f"FwdGetM in state {state.name}")

    def _on_put_ack(self, msg: PutAckDir):
        line = self.lines.get(msg.addr)
        state = CacheState.I if line is None else line.state
        if state in (CacheState.MI_A, CacheState.EI_A, CacheState.SI_A,
                     CacheState.II_A):
            del self.lines[msg.addr]
            return [], None
        raise ProtocolError(f"PutAck in state {state.name}")


class DirEntry:
    __slots__ = ("state", "owner", "sharers")

    def __init__(self, state: DirState = DirState.I, owner: int | None = None,
                 sharers: frozenset[int] = frozenset()):
        self.state = state
        self.owner = owner
        self.sharers = sharers

    def copy(self) -> DirEntry:
        return DirEntry(self.state, self.owner, self.sharers)

    def key(self) -> tuple:
        return (int(self.state), self.owner, tuple(sorted(self.sharers)))


class MesiDirState:
    """Directory embedded in the LLC; full map, holds the memory image."""

    __slots__ = ("line_size", "entries", "memory")

    def __init__(self, line_size: int):
        self.line_size = line_size
        self.entries: dict[int, DirEntry] = {}
        self.memory: dict[int, bytes] = {}

    def copy(self) -> MesiDirState:
        dup = MesiDirState(self.line_size)
        dup.entries = {a: e.copy() for a, e in self.entries.items()}
        dup.memory = dict(self.memory)
        return dup

    def key(self) -> tuple:
        return (tuple((a, self.entries[a].key()) for a in sorted(self.entries)),
                tuple(sorted(self.memory.items())))

    def entry(self, addr: int) -> DirEntry:
        ent = self.entries.get(addr)
        if ent is None:
            ent = DirEntry()
            self.entries[addr] = ent
        return ent

    def mem(self, addr: int) -> bytes:
        return self.memory.get(addr, bytes(self.line_size))

    def on_message(self, msg: MesiMessage):
        if isinstance(msg, GetS):
            return self._on_get_s(msg)
        if isinstance(msg, GetM):
            return self._on_get_m(msg)
        if isinstance(msg, PutS):
            return self._on_put_s(msg)
        if isinstance(msg, PutM):
            return self._on_put_m(msg)
        if isinstance(msg, PutE):
            return self._on_put_e(msg)
        if isinstance(msg, DataToDir):
            return self._on_data_to_dir(msg)
        raise ProtocolError(f"directory cannot handle {msg!r}")

    def _on_get_s(self, msg: GetS):
        ent = self.entry(msg.addr)
        req = msg.src
        if ent.state == DirState.I:
            ent.state = DirState.E
            ent.owner = req
            return [MesiData(msg.addr, self.mem(msg.addr), req, excl=True)], None
        if ent.state == DirState.S:
            ent.sharers = ent.sharers | {req}
            return [MesiData(msg.addr, self.mem(msg.addr), req)], None
        if ent.state in (DirState.E, DirState.M):
            owner = ent.owner
            ent.sharers = frozenset({owner, req})
            ent.state = DirState.S_D
            ent.owner = None  # dead until the downgrade data arrives
            return [FwdGetS(msg.addr, req, owner)], None
        return STALL  # S_D

    def _on_get_m(self, msg: GetM):
        ent = self.entry(msg.addr)
        req = msg.src
        if ent.state == DirState.I:
            ent.state = DirState.M
            ent.owner = req
            return [MesiData(msg.addr, self.mem(msg.addr), req)], None
        if ent.state == DirState.S:
            others = sorted(ent.sharers - {req})
            msgs = [MesiData(msg.addr, self.mem(msg.addr), req,
                             ack_count=len(others))]
            msgs += [Inv(msg.addr, req, sharer) for sharer in others]
            ent.state = DirState.M
            ent.owner = req
            ent.sharers = frozenset()
            return msgs, None
        if ent.state in (DirState.E, DirState.M):
            owner = ent.owner
            ent.owner = req
            ent.state = DirState.M
            return [FwdGetM(msg.addr, req, owner)], None
        return STALL  # S_D

    def _on_put_s(self, msg: PutS):
        ent = self.entry(msg.addr)
        req = msg.src
        ent.sharers = ent.sharers - {req}
        if ent.state == DirState.S and not ent.sharers:
            ent.state = DirState.I
        return [PutAckDir(msg.addr, req)], None

    def _on_put_m(self, msg: PutM):
        ent = self.entry(msg.addr)
        req = msg.src
        if ent.state == DirState.S_D:
            return STALL  # the forwarded request will extract this core's data
        if ent.state in (DirState.M, DirState.E) and ent.owner == req:
            self.memory[msg.addr] = msg.data
            ent.state = DirState.I
            ent.owner = None
            return [PutAckDir(msg.addr, req)], None
        # stale write-back from a core that lost ownership: data is dropped
        if ent.state == DirState.S:
            ent.sharers = ent.sharers - {req}
            if not ent.sharers:
                ent.state = DirState.I
        return [PutAckDir(msg.addr, req)], None

    def _on_put_e(self, msg: PutE):
        ent = self.entry(msg.addr)
        req = msg.src
        if ent.state == DirState.S_D:
            return STALL
        if ent.state == DirState.E and ent.owner == req:
            ent.state = DirState.I
            ent.owner = None
            return [PutAckDir(msg.addr, req)], None
        if ent.state == DirState.S:
            ent.sharers = ent.sharers - {req}
            if not ent.sharers:
                ent.state = DirState.I
        return [PutAckDir(msg.addr, req)], None

    def _on_data_to_dir(self, msg: DataToDir):
        ent = self.entry(msg.addr)
        if ent.state != DirState.S_D:
            raise ProtocolError("owner data outside an M->S downgrade")
        self.memory[msg.addr] = msg.data
        ent.state = DirState.S
        ent.owner = None
        return [], None
