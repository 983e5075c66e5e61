"""Neat controller transitions: per-line and core-wide state for the private
cache, and the LLC side with bulk write-back acknowledgment and per-core write
signatures. Pure state machines: engines own all mutation and deliver messages;
the model checker and the timing simulator drive the same code.

Core modes: NE (normal execution), SI (self-invalidation episode at an
acquire), CM (commit episode at a release). Variants:
  base     acquire invalidates every valid line, writing back dirty ones
  pi-only  acquire marks every valid line partially invalid, keeping write bits
  full     pi-only plus write signatures: only lines in the fetched signature
           are partially invalidated

Bulk acknowledgment: episode write-backs carry cnt=0; a data-less count
message closes the episode with cnt equal to the number sent, and the LLC
answers PutAllAck once its per-core received counter matches, tolerating
arbitrary reordering. Individual dirty evictions carry cnt=1 and are answered
with PutAck immediately. An episode that wrote nothing back skips the count
message and completes locally (`strict_empty` sends a cnt=0 count message and
waits, for A/B comparison in the checker).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

from .lines import L1Line, LineState, extract_dirty, merge_fetched
from .messages import (Data, GetLine, GetWrSig, Message, PutAck, PutAllAck,
                       WriteBack, WrSigResp)
from .signature import WriteSignature, deserialize as deserialize_signature

LLC = -1  # destination id of the shared cache in message routing


class NeatVariant(Enum):
    BASE = "neat-base"
    PI_ONLY = "neat-pi"
    FULL = "neat-full"


class Mode(IntEnum):
    NE = 0
    SI = 1
    CM = 2


class ProtocolError(RuntimeError):
    """An impossible message or transition; surfaces as a checker violation."""


@dataclass
class PendingAccess:
    op: str            # "read" | "write"
    addr: int
    offset: int
    length: int
    value: bytes | None  # bytes to store when op == "write"

    def key(self) -> tuple:
        return (self.op, self.addr, self.offset, self.length, self.value)


@dataclass
class CompletedAccess:
    core: int
    op: str
    addr: int
    offset: int
    length: int
    value: bytes       # bytes written, or bytes observed by the read


@dataclass
class AccessResult:
    hit: bool
    completed: CompletedAccess | None = None


@dataclass
class EpisodeResult:
    write_backs: int = 0    # cnt=0 write-backs emitted
    invalidated: int = 0    # lines V/PI -> I
    partial: int = 0        # lines V -> PI
    scanned: int = 0        # valid lines examined (simulator scan cost)


class NeatCoreState:
    """One core's private-cache controller. Lines absent from `lines` are
    invalid; stored lines are V or PI."""

    __slots__ = ("core_id", "variant", "line_size", "mode", "lines", "pending",
                 "evict_wbs", "await_put_all", "await_wrsig", "si_waits_putacks",
                 "strict_empty", "mutation")

    def __init__(self, core_id: int, variant: NeatVariant, line_size: int,
                 si_waits_putacks: bool = False, strict_empty: bool = False,
                 mutation: str | None = None):
        self.core_id = core_id
        self.variant = variant
        self.line_size = line_size
        self.mode = Mode.NE
        self.lines: dict[int, L1Line] = {}
        self.pending: PendingAccess | None = None
        self.evict_wbs: set[int] = set()   # addrs with an eviction awaiting PutAck
        self.await_put_all = False
        self.await_wrsig = False
        self.si_waits_putacks = si_waits_putacks
        self.strict_empty = strict_empty
        self.mutation = mutation

    # -- engine plumbing ----------------------------------------------------

    def copy(self) -> NeatCoreState:
        dup = NeatCoreState(self.core_id, self.variant, self.line_size,
                            self.si_waits_putacks, self.strict_empty, self.mutation)
        dup.mode = self.mode
        dup.lines = {a: ln.copy() for a, ln in self.lines.items()}
        dup.pending = None if self.pending is None else PendingAccess(*(
            self.pending.op, self.pending.addr, self.pending.offset,
            self.pending.length, self.pending.value))
        dup.evict_wbs = set(self.evict_wbs)
        dup.await_put_all = self.await_put_all
        dup.await_wrsig = self.await_wrsig
        return dup

    def key(self) -> tuple:
        return (int(self.mode), self.await_put_all, self.await_wrsig,
                None if self.pending is None else self.pending.key(),
                tuple(self.lines[a].key() for a in sorted(self.lines)),
                tuple(sorted(self.evict_wbs)))

    @property
    def blocked(self) -> bool:
        """No program transitions while waiting on a fetch or inside SI/CM."""
        return self.pending is not None or self.mode != Mode.NE

    def can_access(self, addr: int) -> bool:
        # A pending eviction write-back occupies the request-buffer slot for its
        # address; a refetch of that address waits for the PutAck.
        return addr not in self.evict_wbs

    def can_evict(self, addr: int) -> bool:
        # Request buffer holds one eviction write-back at a time: a second
        # dirty eviction stalls until the first PutAck arrives. Clean evictions
        # are silent and never stall.
        line = self.lines.get(addr)
        if line is None:
            return False
        return not line.dirty or not self.evict_wbs

    # -- program operations ---------------------------------------------------

    def access(self, op: str, addr: int, offset: int, length: int = 1,
               value: bytes | None = None) -> tuple[list[Message], AccessResult]:
        if self.blocked:
            raise ProtocolError("access while blocked")
        if offset + length > self.line_size:
            raise ValueError("access crosses a line boundary; caller must split")
        if not self.can_access(addr):
            raise ProtocolError("access to address with outstanding eviction")
        line = self.lines.get(addr)
        if line is None:
            self.pending = PendingAccess(op, addr, offset, length, value)
            return [GetLine(addr, self.core_id)], AccessResult(hit=False)
        if op == "write":
            line.write(offset, value)
            done = CompletedAccess(self.core_id, op, addr, offset, length, value)
            return [], AccessResult(hit=True, completed=done)
        if line.state == LineState.PI and not line.range_dirty(offset, length):
            # reading a clean byte of a partially-invalid line refetches
            self.pending = PendingAccess(op, addr, offset, length, None)
            return [GetLine(addr, self.core_id)], AccessResult(hit=False)
        got = line.read(offset, length)
        done = CompletedAccess(self.core_id, op, addr, offset, length, got)
        return [], AccessResult(hit=True, completed=done)

    def evict(self, addr: int) -> tuple[list[Message], bool]:
        """Replace a valid line. Clean lines leave silently; dirty lines send a
        cnt=1 write-back and hold the request-buffer slot until PutAck."""
        if not self.can_evict(addr):
            raise ProtocolError("evicting an invalid line or eviction slot busy")
        line = self.lines.pop(addr, None)
        if line is None:
            raise ProtocolError("evicting an invalid line")
        if not line.dirty:
            return [], False
        if self.mutation == "silent-dirty-evict":
            return [], True
        self.evict_wbs.add(addr)
        wb = WriteBack(addr, tuple(extract_dirty(line)), line.write_bits, 1,
                       self.core_id)
        return [wb], True

    def begin_release(self) -> tuple[list[Message], EpisodeResult]:
        if self.blocked:
            raise ProtocolError("release while blocked")
        res = EpisodeResult(scanned=len(self.lines))
        if self.mutation == "skip-commit":
            return [], res
        self.mode = Mode.CM
        msgs: list[Message] = []
        for addr in sorted(self.lines):
            line = self.lines[addr]
            if line.dirty:
                msgs.append(WriteBack(addr, tuple(extract_dirty(line)),
                                      line.write_bits, 0, self.core_id))
                line.clear_write_bits()
                res.write_backs += 1
        msgs += self._close_episode(res.write_backs)
        if self.mutation == "early-cm-exit":
            self.await_put_all = False
            self.mode = Mode.NE
        self._maybe_finish()
        return msgs, res

    def begin_acquire(self) -> tuple[list[Message], EpisodeResult]:
        if self.blocked:
            raise ProtocolError("acquire while blocked")
        res = EpisodeResult(scanned=len(self.lines))
        if self.variant == NeatVariant.BASE and self.mutation == "no-self-invalidate":
            return [], res
        self.mode = Mode.SI
        msgs: list[Message] = []
        if self.variant == NeatVariant.BASE:
            for addr in sorted(self.lines):
                line = self.lines[addr]
                if line.dirty:
                    msgs.append(WriteBack(addr, tuple(extract_dirty(line)),
                                          line.write_bits, 0, self.core_id))
                    res.write_backs += 1
                res.invalidated += 1
            self.lines.clear()
            msgs += self._close_episode(res.write_backs)
        elif self.variant == NeatVariant.PI_ONLY:
            for line in self.lines.values():
                if line.state == LineState.V:
                    line.state = LineState.PI
                    res.partial += 1
            msgs += self._close_episode(0)
        else:  # FULL: decide per line once the signature arrives
            msgs.append(GetWrSig(self.core_id))
            self.await_wrsig = True
        self._maybe_finish()
        return msgs, res

    # -- message handlers -----------------------------------------------------

    def on_data(self, addr: int, data: bytes) -> CompletedAccess:
        p = self.pending
        if p is None or p.addr != addr:
            raise ProtocolError("Data without a matching outstanding fetch")
        self.pending = None
        line = self.lines.get(addr)
        if line is None:
            line = L1Line(addr, LineState.V, data)
            self.lines[addr] = line
        else:
            if line.state != LineState.PI:
                raise ProtocolError("fetch response for a line that is not I or PI")
            merge_fetched(line, data)
        if p.op == "write":
            line.write(p.offset, p.value)
            return CompletedAccess(self.core_id, "write", addr, p.offset, p.length,
                                   p.value)
        got = line.read(p.offset, p.length)
        return CompletedAccess(self.core_id, "read", addr, p.offset, p.length, got)

    def on_wrsig(self, payload, signature_bits: int = 1008,
                 signature_hashes: int = 4) -> tuple[list[Message], EpisodeResult]:
        """Apply the fetched write signature: valid lines it may contain become
        partially invalid. `payload` is serialized bytes (bloom) or a tuple of
        addresses (exact mode)."""
        if self.mode != Mode.SI or not self.await_wrsig:
            raise ProtocolError("write-signature response outside an acquire")
        self.await_wrsig = False
        if isinstance(payload, tuple):
            member = frozenset(payload).__contains__
        else:
            sig = deserialize_signature(payload, signature_bits, signature_hashes)
            member = sig.may_contain
        res = EpisodeResult(scanned=len(self.lines))
        for line in self.lines.values():
            if line.state == LineState.V and member(line.addr):
                line.state = LineState.PI
                res.partial += 1
        msgs = self._close_episode(0)
        self._maybe_finish()
        return msgs, res

    def on_put_ack(self, addr: int) -> None:
        if addr not in self.evict_wbs:
            raise ProtocolError("PutAck without a matching eviction write-back")
        self.evict_wbs.discard(addr)
        self._maybe_finish()

    def on_put_all_ack(self) -> None:
        if not self.await_put_all:
            if self.mutation == "early-cm-exit":
                return  # the episode already exited; swallow the late ack
            raise ProtocolError("PutAllAck without an open episode")
        self.await_put_all = False
        self._maybe_finish()

    # -- internals ------------------------------------------------------------

    def _close_episode(self, write_backs: int) -> list[Message]:
        if write_backs == 0 and not self.strict_empty:
            return []
        self.await_put_all = True
        return [WriteBack(0, (), 0, write_backs, self.core_id, count_msg=True)]

    def _maybe_finish(self) -> None:
        if self.mode == Mode.CM:
            # releases drain every outstanding eviction acknowledgment
            if not self.await_put_all and not self.evict_wbs:
                self.mode = Mode.NE
        elif self.mode == Mode.SI:
            if self.await_put_all or self.await_wrsig:
                return
            if self.si_waits_putacks and self.evict_wbs:
                return
            self.mode = Mode.NE


class NeatLlcState:
    """Shared-cache controller: line data (backing memory folded in), per-core
    bulk write-back counters, and per-core write signatures (full variant)."""

    __slots__ = ("line_size", "ncores", "variant", "lines", "wb_received",
                 "pending_cnt", "sigs", "mutation", "signature_bits",
                 "signature_hashes")

    def __init__(self, ncores: int, variant: NeatVariant, line_size: int,
                 exact_signatures: bool = True, signature_bits: int = 1008,
                 signature_hashes: int = 4, mutation: str | None = None):
        self.line_size = line_size
        self.ncores = ncores
        self.variant = variant
        self.lines: dict[int, bytes] = {}
        self.wb_received = [0] * ncores
        self.pending_cnt: list[int | None] = [None] * ncores
        self.mutation = mutation
        self.signature_bits = signature_bits
        self.signature_hashes = signature_hashes
        if variant == NeatVariant.FULL:
            self.sigs = [WriteSignature(signature_bits, signature_hashes,
                                        exact=exact_signatures)
                         for _ in range(ncores)]
        else:
            self.sigs = None

    def copy(self) -> NeatLlcState:
        dup = NeatLlcState(self.ncores, self.variant, self.line_size,
                           signature_bits=self.signature_bits,
                           signature_hashes=self.signature_hashes,
                           mutation=self.mutation)
        dup.lines = dict(self.lines)
        dup.wb_received = list(self.wb_received)
        dup.pending_cnt = list(self.pending_cnt)
        dup.sigs = None if self.sigs is None else [s.copy() for s in self.sigs]
        return dup

    def key(self) -> tuple:
        return (tuple(sorted(self.lines.items())), tuple(self.wb_received),
                tuple(self.pending_cnt),
                None if self.sigs is None else tuple(s.key() for s in self.sigs))

    def line_bytes(self, addr: int) -> bytes:
        return self.lines.get(addr, bytes(self.line_size))

    def on_message(self, msg: Message) -> list[Message]:
        if isinstance(msg, GetLine):
            return [Data(msg.addr, self.line_bytes(msg.addr), msg.requester)]
        if isinstance(msg, WriteBack):
            return self._on_write_back(msg)
        if isinstance(msg, GetWrSig):
            return self._on_get_wrsig(msg.requester)
        raise ProtocolError(f"LLC cannot handle {msg!r}")

    def _on_write_back(self, msg: WriteBack) -> list[Message]:
        sender = msg.sender
        if msg.count_msg:
            self.pending_cnt[sender] = msg.cnt
            return self._check_episode(sender)
        if msg.cnt > 1:
            raise ProtocolError("data-bearing write-back with cnt > 1")
        buf = bytearray(self.line_bytes(msg.addr))
        for off, val in msg.dirty:
            buf[off] = val
        self.lines[msg.addr] = bytes(buf)
        if self.sigs is not None and self.mutation != "skip-ws-insert":
            for core in range(self.ncores):
                if core != sender:
                    self.sigs[core].insert(msg.addr)
        if msg.cnt == 1:
            return [PutAck(msg.addr, sender)]
        self.wb_received[sender] += 1
        return self._check_episode(sender)

    def _check_episode(self, core: int) -> list[Message]:
        cnt = self.pending_cnt[core]
        if cnt is not None and self.wb_received[core] == cnt:
            self.pending_cnt[core] = None
            self.wb_received[core] = 0
            return [PutAllAck(core)]
        return []

    def _on_get_wrsig(self, requester: int) -> list[Message]:
        if self.sigs is None:
            raise ProtocolError("GetWrSig without write signatures")
        sig = self.sigs[requester]
        payload = tuple(sorted(sig.exact_set)) if sig.exact else sig.serialize()
        sig.clear()
        return [WrSigResp(payload, requester)]


def message_dest(msg: Message) -> int:
    """Routing: every Neat message has the LLC as exactly one endpoint."""
    if isinstance(msg, (GetLine, WriteBack, GetWrSig)):
        return LLC
    if isinstance(msg, Data):
        return msg.dest
    if isinstance(msg, (PutAck, PutAllAck, WrSigResp)):
        return msg.dest
    raise ProtocolError(f"unroutable message {msg!r}")
