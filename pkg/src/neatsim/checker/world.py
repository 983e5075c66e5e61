"""Checker world states: programless nondeterminism over a fixed set of cores,
a shared LLC, an unordered message multiset, one lock, and ghost state. Any
enabled operation may fire; message deliveries interleave freely (with the
MESI exception that directory-to-core messages are FIFO per destination).

Worlds round-trip through their canonical key (`key()` / `from_key`), so the
explorer stores only keys: the canonical form IS the state."""

from __future__ import annotations

from dataclasses import dataclass

from .. import mesi as mp
from .. import neat as np_
from ..lines import L1Line, LineState
from ..messages import Data, PutAck, PutAllAck, WrSigResp, from_key as msg_from_key
from ..neat import (LLC, Mode, NeatCoreState, NeatLlcState, NeatVariant,
                    PendingAccess, ProtocolError)
from ..signature import WriteSignature
from .ghosts import GhostState

RACE_RESET = "race-reset"


@dataclass
class Step:
    label: str
    world: object | None = None      # None: racy successor replaced by the initial state
    violation: tuple[str, str] | None = None  # (kind, detail)


@dataclass
class WorldConfig:
    protocol: str
    lines: int = 1
    bytes_per_line: int = 1
    cores: int = 2
    values: tuple[int, ...] = (0, 1)
    drf_filter: bool = True
    si_waits_putacks: bool = False
    strict_empty_episode: bool = False
    mutation: str | None = None


_VARIANTS = {
    "neat-base": NeatVariant.BASE,
    "neat-pi": NeatVariant.PI_ONLY,
    "neat-full": NeatVariant.FULL,
}


def _ghost_key(g: GhostState) -> tuple:
    if not g.track_races:
        return (tuple(g.oracle), (), (), 0)
    # canonical form: once every core is synchronized with a byte's last write,
    # the published bit for that byte can no longer matter
    all_visible = ~0
    for mask in g.visible:
        all_visible &= mask
    return (tuple(g.oracle), tuple(g.last_writer), tuple(g.visible),
            g.published | all_visible)


def _ghost_from_key(key: tuple, ncores: int, track: bool) -> GhostState:
    oracle, last_writer, visible, published = key
    g = GhostState(len(oracle), ncores, track_races=track)
    g.oracle = list(oracle)
    if track:
        g.last_writer = list(last_writer)
        g.visible = list(visible)
        g.published = published
    return g


class _WorldBase:
    cfg: WorldConfig
    ghosts: GhostState

    def _byte_index(self, addr: int, offset: int) -> int:
        return addr * self.cfg.bytes_per_line + offset

    def _handle_completed(self, done) -> tuple[str, str | None]:
        """Returns ("race"|"ok"|"violation", detail)."""
        idx = self._byte_index(done.addr, done.offset)
        if self.ghosts.is_race(done.core, idx):
            return "race", None
        if done.op == "write":
            self.ghosts.on_write(done.core, idx, done.value[0])
            return "ok", None
        expected = self.ghosts.expected(idx)
        if done.value[0] != expected:
            return ("violation",
                    f"c{done.core} read L{done.addr}[{done.offset}] = "
                    f"{done.value[0]}, last write was {expected}")
        return "ok", None


class NeatWorld(_WorldBase):
    __slots__ = ("cfg", "variant", "cores", "llc", "network", "lock_holder",
                 "lock_releasing", "ghosts", "net_bound")

    def __init__(self, cfg: WorldConfig, _build: bool = True):
        self.cfg = cfg
        self.variant = _VARIANTS[cfg.protocol]
        self.net_bound = cfg.cores * (2 * cfg.lines + 8) + 8
        if not _build:
            return
        self.cores = [
            NeatCoreState(i, self.variant, cfg.bytes_per_line,
                          si_waits_putacks=cfg.si_waits_putacks,
                          strict_empty=cfg.strict_empty_episode,
                          mutation=cfg.mutation)
            for i in range(cfg.cores)
        ]
        self.llc = NeatLlcState(cfg.cores, self.variant, cfg.bytes_per_line,
                                exact_signatures=True, mutation=cfg.mutation)
        self.network: dict = {}
        self.lock_holder: int | None = None
        self.lock_releasing = False
        self.ghosts = GhostState(cfg.lines * cfg.bytes_per_line, cfg.cores,
                                 track_races=cfg.drf_filter)

    def clone(self) -> NeatWorld:
        dup = NeatWorld(self.cfg, _build=False)
        dup.cores = [c.copy() for c in self.cores]
        dup.llc = self.llc.copy()
        dup.network = dict(self.network)
        dup.lock_holder = self.lock_holder
        dup.lock_releasing = self.lock_releasing
        dup.ghosts = self.ghosts.copy()
        return dup

    def key(self) -> tuple:
        return (tuple(c.key() for c in self.cores), self.llc.key(),
                tuple(sorted((m.key(), n) for m, n in self.network.items())),
                self.lock_holder, self.lock_releasing, _ghost_key(self.ghosts))

    @classmethod
    def from_key(cls, cfg: WorldConfig, key: tuple) -> NeatWorld:
        core_keys, llc_key, net_items, lock_holder, lock_releasing, gkey = key
        w = cls(cfg, _build=False)
        w.cores = []
        for i, ck in enumerate(core_keys):
            mode, await_pa, await_ws, pkey, line_keys, evicts = ck
            core = NeatCoreState(i, w.variant, cfg.bytes_per_line,
                                 si_waits_putacks=cfg.si_waits_putacks,
                                 strict_empty=cfg.strict_empty_episode,
                                 mutation=cfg.mutation)
            core.mode = Mode(mode)
            core.await_put_all = await_pa
            core.await_wrsig = await_ws
            core.pending = None if pkey is None else PendingAccess(*pkey)
            core.lines = {lk[0]: L1Line(lk[0], LineState(lk[1]), lk[2], lk[3])
                          for lk in line_keys}
            core.evict_wbs = set(evicts)
            w.cores.append(core)
        llc = NeatLlcState(cfg.cores, w.variant, cfg.bytes_per_line,
                           exact_signatures=True, mutation=cfg.mutation)
        lines_items, wb_received, pending_cnt, sig_keys = llc_key
        llc.lines = dict(lines_items)
        llc.wb_received = list(wb_received)
        llc.pending_cnt = list(pending_cnt)
        if sig_keys is not None:
            llc.sigs = []
            for sk in sig_keys:
                sig = WriteSignature(llc.signature_bits, llc.signature_hashes,
                                     exact=True)
                sig.exact_set = frozenset(sk)
                llc.sigs.append(sig)
        w.llc = llc
        w.network = {msg_from_key(mk): n for mk, n in net_items}
        w.lock_holder = lock_holder
        w.lock_releasing = lock_releasing
        w.ghosts = _ghost_from_key(gkey, cfg.cores, cfg.drf_filter)
        return w

    def _send(self, msgs) -> None:
        for m in msgs:
            self.network[m] = self.network.get(m, 0) + 1

    def _structural_violation(self) -> str | None:
        if sum(self.network.values()) > self.net_bound:
            return f"network multiset exceeded structural bound {self.net_bound}"
        for core in self.cores:
            for line in core.lines.values():
                if line.state == LineState.I:
                    return "invalid line stored in the cache map"
            if core.mode == Mode.NE and (core.await_put_all or core.await_wrsig):
                return "episode wait flags set outside SI/CM"
        return None

    def _finish_step(self, label: str, world: NeatWorld) -> Step:
        detail = world._structural_violation()
        if detail:
            return Step(label, world, ("structural", detail))
        return Step(label, world)

    def successors(self) -> list[Step]:
        steps: list[Step] = []
        cfg = self.cfg
        for c in range(cfg.cores):
            core = self.cores[c]
            if core.blocked:
                continue
            for addr in range(cfg.lines):
                if not core.can_access(addr):
                    continue
                for off in range(cfg.bytes_per_line):
                    steps.append(self._do_access(c, "read", addr, off, None))
                    for v in cfg.values:
                        steps.append(self._do_access(c, "write", addr, off, v))
            for addr in sorted(core.lines):
                if core.can_evict(addr):
                    steps.append(self._do_evict(c, addr))
            if self.lock_holder is None:
                steps.append(self._do_acquire(c))
            elif self.lock_holder == c and not self.lock_releasing:
                steps.append(self._do_release(c))
        for msg in sorted(self.network, key=lambda m: m.key()):
            steps.append(self._do_deliver(msg))
        return steps

    def _do_access(self, c: int, op: str, addr: int, off: int, v: int | None) -> Step:
        label = (f"c{c}: rd L{addr}[{off}]" if op == "read"
                 else f"c{c}: wr L{addr}[{off}]={v}")
        w = self.clone()
        value = None if v is None else bytes([v])
        try:
            msgs, res = w.cores[c].access(op, addr, off, 1, value)
        except ProtocolError as exc:
            return Step(label, w, ("structural", str(exc)))
        w._send(msgs)
        if res.completed is not None:
            status, detail = w._handle_completed(res.completed)
            if status == "race":
                return Step(label + f" [{RACE_RESET}]", None)
            if status == "violation":
                return Step(label, w, ("lastWrite", detail))
        return self._finish_step(label, w)

    def _do_evict(self, c: int, addr: int) -> Step:
        label = f"c{c}: evict L{addr}"
        w = self.clone()
        try:
            msgs, _ = w.cores[c].evict(addr)
        except ProtocolError as exc:
            return Step(label, w, ("structural", str(exc)))
        w._send(msgs)
        return self._finish_step(label, w)

    def _do_acquire(self, c: int) -> Step:
        label = f"c{c}: acquire"
        w = self.clone()
        w.lock_holder = c
        w.ghosts.on_acquire(c)
        try:
            msgs, _ = w.cores[c].begin_acquire()
        except ProtocolError as exc:
            return Step(label, w, ("structural", str(exc)))
        w._send(msgs)
        return self._finish_step(label, w)

    def _do_release(self, c: int) -> Step:
        label = f"c{c}: release"
        w = self.clone()
        w.ghosts.on_release(c)
        try:
            msgs, _ = w.cores[c].begin_release()
        except ProtocolError as exc:
            return Step(label, w, ("structural", str(exc)))
        w._send(msgs)
        if w.cores[c].mode == Mode.NE:
            w.lock_holder = None
        else:
            w.lock_releasing = True
        return self._finish_step(label, w)

    def _do_deliver(self, msg) -> Step:
        label = f"net: {msg!r}"
        w = self.clone()
        if w.network[msg] == 1:
            del w.network[msg]
        else:
            w.network[msg] -= 1
        try:
            dest = np_.message_dest(msg)
            if dest == LLC:
                w._send(w.llc.on_message(msg))
            else:
                core = w.cores[dest]
                if isinstance(msg, Data):
                    done = core.on_data(msg.addr, msg.data)
                    status, detail = w._handle_completed(done)
                    if status == "race":
                        return Step(label + f" [{RACE_RESET}]", None)
                    if status == "violation":
                        return Step(label, w, ("lastWrite", detail))
                elif isinstance(msg, PutAck):
                    core.on_put_ack(msg.addr)
                    w._after_episode_step(dest)
                elif isinstance(msg, PutAllAck):
                    core.on_put_all_ack()
                    w._after_episode_step(dest)
                elif isinstance(msg, WrSigResp):
                    msgs, _ = core.on_wrsig(msg.payload)
                    w._send(msgs)
                    w._after_episode_step(dest)
                else:
                    raise ProtocolError(f"core received {msg!r}")
        except ProtocolError as exc:
            return Step(label, w, ("structural", str(exc)))
        return self._finish_step(label, w)

    def _after_episode_step(self, c: int) -> None:
        # a completed commit episode makes the release visible: free the lock
        if (self.lock_releasing and self.lock_holder == c
                and self.cores[c].mode == Mode.NE):
            self.lock_holder = None
            self.lock_releasing = False


class MesiWorld(_WorldBase):
    __slots__ = ("cfg", "cores", "dirst", "network", "fifos", "lock_holder",
                 "ghosts", "net_bound")

    def __init__(self, cfg: WorldConfig, _build: bool = True):
        self.cfg = cfg
        self.net_bound = cfg.cores * (4 * cfg.lines + 8) + 8
        if not _build:
            return
        self.cores = [mp.MesiCoreState(i, cfg.bytes_per_line)
                      for i in range(cfg.cores)]
        self.dirst = mp.MesiDirState(cfg.bytes_per_line)
        self.network: dict = {}                  # unordered messages
        self.fifos: dict[int, tuple] = {}        # dir->core FIFO per destination
        self.lock_holder: int | None = None
        self.ghosts = GhostState(cfg.lines * cfg.bytes_per_line, cfg.cores,
                                 track_races=cfg.drf_filter)

    def clone(self) -> MesiWorld:
        dup = MesiWorld(self.cfg, _build=False)
        dup.cores = [c.copy() for c in self.cores]
        dup.dirst = self.dirst.copy()
        dup.network = dict(self.network)
        dup.fifos = dict(self.fifos)
        dup.lock_holder = self.lock_holder
        dup.ghosts = self.ghosts.copy()
        return dup

    def key(self) -> tuple:
        return (tuple(c.key() for c in self.cores), self.dirst.key(),
                tuple(sorted((m.key(), n) for m, n in self.network.items())),
                tuple((dst, tuple(m.key() for m in q))
                      for dst, q in sorted(self.fifos.items()) if q),
                self.lock_holder, _ghost_key(self.ghosts))

    @classmethod
    def from_key(cls, cfg: WorldConfig, key: tuple) -> MesiWorld:
        core_keys, dir_key, net_items, fifo_items, lock_holder, gkey = key
        w = cls(cfg, _build=False)
        w.cores = []
        for i, ck in enumerate(core_keys):
            pkey, line_items = ck
            core = mp.MesiCoreState(i, cfg.bytes_per_line)
            core.pending = None if pkey is None else PendingAccess(*pkey)
            core.lines = {addr: mp.MesiLine(mp.CacheState(lk[0]), lk[1], lk[2])
                          for addr, lk in line_items}
            w.cores.append(core)
        dirst = mp.MesiDirState(cfg.bytes_per_line)
        entry_items, mem_items = dir_key
        for addr, ek in entry_items:
            dirst.entries[addr] = mp.DirEntry(mp.DirState(ek[0]), ek[1],
                                              frozenset(ek[2]))
        dirst.memory = dict(mem_items)
        w.dirst = dirst
        w.network = {mp.mesi_message_from_key(mk): n for mk, n in net_items}
        w.fifos = {dst: tuple(mp.mesi_message_from_key(mk) for mk in q)
                   for dst, q in fifo_items}
        w.lock_holder = lock_holder
        w.ghosts = _ghost_from_key(gkey, cfg.cores, cfg.drf_filter)
        return w

    def _send(self, msgs) -> None:
        for m in msgs:
            if m.dir_to_core:
                self.fifos[m.dest] = self.fifos.get(m.dest, ()) + (m,)
            else:
                self.network[m] = self.network.get(m, 0) + 1

    def successors(self) -> list[Step]:
        steps: list[Step] = []
        cfg = self.cfg
        for c in range(cfg.cores):
            core = self.cores[c]
            if core.blocked:
                continue
            for addr in range(cfg.lines):
                if not core.can_access(addr):
                    continue
                for off in range(cfg.bytes_per_line):
                    steps.append(self._do_access(c, "read", addr, off, None))
                    for v in cfg.values:
                        steps.append(self._do_access(c, "write", addr, off, v))
            for addr in sorted(core.lines):
                if core.can_evict(addr):
                    steps.append(self._do_evict(c, addr))
            if self.lock_holder is None:
                steps.append(self._do_sync(c, "acquire"))
            elif self.lock_holder == c:
                steps.append(self._do_sync(c, "release"))
        for msg in sorted(self.network, key=lambda m: m.key()):
            step = self._do_deliver(msg, fifo_dst=None)
            if step is not None:
                steps.append(step)
        for dst, queue in sorted(self.fifos.items()):
            if queue:
                step = self._do_deliver(queue[0], fifo_dst=dst)
                if step is not None:
                    steps.append(step)
        return steps

    def _do_access(self, c: int, op: str, addr: int, off: int, v: int | None) -> Step:
        label = (f"c{c}: rd L{addr}[{off}]" if op == "read"
                 else f"c{c}: wr L{addr}[{off}]={v}")
        w = self.clone()
        value = None if v is None else bytes([v])
        try:
            msgs, res = w.cores[c].access(op, addr, off, 1, value)
        except ProtocolError as exc:
            return Step(label, w, ("structural", str(exc)))
        w._send(msgs)
        if res.completed is not None:
            status, detail = w._handle_completed(res.completed)
            if status == "race":
                return Step(label + f" [{RACE_RESET}]", None)
            if status == "violation":
                return Step(label, w, ("lastWrite", detail))
        return self._check(label, w)

    def _do_evict(self, c: int, addr: int) -> Step:
        label = f"c{c}: evict L{addr}"
        w = self.clone()
        try:
            msgs = w.cores[c].evict(addr)
        except ProtocolError as exc:
            return Step(label, w, ("structural", str(exc)))
        w._send(msgs)
        return self._check(label, w)

    def _do_sync(self, c: int, kind: str) -> Step:
        label = f"c{c}: {kind}"
        w = self.clone()
        if kind == "acquire":
            w.lock_holder = c
            w.ghosts.on_acquire(c)
        else:
            w.ghosts.on_release(c)
            w.lock_holder = None
        return self._check(label, w)

    def _do_deliver(self, msg, fifo_dst: int | None) -> Step | None:
        """None when the destination stalls the message (not an enabled move)."""
        label = f"net: {msg!r}"
        w = self.clone()
        try:
            if msg.dest == mp.DIR:
                out = w.dirst.on_message(msg)
                if out is mp.STALL:
                    return None
                msgs, _ = out
                w._remove(msg, fifo_dst)
                w._send(msgs)
            else:
                out = w.cores[msg.dest].on_message(msg)
                if out is mp.STALL:
                    return None
                msgs, done = out
                w._remove(msg, fifo_dst)
                w._send(msgs)
                if done is not None:
                    status, detail = w._handle_completed(done)
                    if status == "race":
                        return Step(label + f" [{RACE_RESET}]", None)
                    if status == "violation":
                        return Step(label, w, ("lastWrite", detail))
        except ProtocolError as exc:
            return Step(label, w, ("structural", str(exc)))
        return self._check(label, w)

    def _remove(self, msg, fifo_dst: int | None) -> None:
        if fifo_dst is None:
            if self.network[msg] == 1:
                del self.network[msg]
            else:
                self.network[msg] -= 1
        else:
            self.fifos[fifo_dst] = self.fifos[fifo_dst][1:]

    def _check(self, label: str, w: MesiWorld) -> Step:
        detail = w._structural_violation()
        if detail:
            return Step(label, w, ("swmr" if "SWMR" in detail else "structural",
                                   detail))
        return Step(label, w)

    def _in_flight(self, addr: int, dest: int, kinds) -> bool:
        for m in self.network:
            if isinstance(m, kinds) and m.addr == addr and m.dest == dest:
                return True
        for m in self.fifos.get(dest, ()):
            if isinstance(m, kinds) and m.addr == addr:
                return True
        return False

    def _structural_violation(self) -> str | None:
        total = sum(self.network.values()) + sum(len(q) for q in self.fifos.values())
        if total > self.net_bound:
            return f"network multiset exceeded structural bound {self.net_bound}"
        for addr in range(self.cfg.lines):
            writable = [c for c in range(self.cfg.cores)
                        if self.cores[c].state_of(addr) in mp.WRITABLE]
            if len(writable) > 1:
                return (f"SWMR violated on L{addr}: writable copies in cores "
                        f"{writable}")
            ent = self.dirst.entries.get(addr)
            if ent is not None and ent.state in (mp.DirState.E, mp.DirState.M):
                if ent.owner is None or ent.sharers:
                    return f"directory entry L{addr} in {ent.state.name} malformed"
            for c in range(self.cfg.cores):
                state = self.cores[c].state_of(addr)
                if state == mp.CacheState.S:
                    in_sharers = ent is not None and c in ent.sharers
                    if not in_sharers and not self._in_flight(addr, c, (mp.Inv,)):
                        return f"directory lost sharer c{c} of L{addr}"
                elif state in mp.WRITABLE:
                    owned = ent is not None and ent.owner == c
                    if not owned and not self._in_flight(addr, c,
                                                         (mp.FwdGetS, mp.FwdGetM)):
                        return f"directory lost owner c{c} of L{addr}"
        return None


def build_world(cfg: WorldConfig):
    if cfg.protocol == "mesi":
        return MesiWorld(cfg)
    if cfg.protocol in _VARIANTS:
        return NeatWorld(cfg)
    raise ValueError(f"unknown protocol {cfg.protocol!r}")


def world_from_key(cfg: WorldConfig, key: tuple):
    if cfg.protocol == "mesi":
        return MesiWorld.from_key(cfg, key)
    return NeatWorld.from_key(cfg, key)
