"""Line-oriented trace format.

    #neatsim-trace v1 cores=<n> linesize=<b>
    T<tid> R <hexaddr> <size>
    T<tid> W <hexaddr> <size>
    T<tid> ACQ <lockid>
    T<tid> REL <lockid>
    T<tid> NOP <count>

'#' starts a comment; addresses are byte addresses in hex. Accesses never
cross a line boundary and releases always follow a matching acquire in the
same thread (validated on parse)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


class TraceError(ValueError):
    pass


@dataclass
class TraceEvent:
    kind: str                 # R | W | ACQ | REL | NOP
    addr: int = 0             # byte address (R/W)
    size: int = 0             # bytes (R/W)
    lock: int = 0             # ACQ/REL
    count: int = 0            # NOP

    def format(self, tid: int) -> str:
        if self.kind in ("R", "W"):
            return f"T{tid} {self.kind} {self.addr:x} {self.size}"
        if self.kind in ("ACQ", "REL"):
            return f"T{tid} {self.kind} {self.lock}"
        return f"T{tid} NOP {self.count}"


@dataclass
class Trace:
    cores: int
    line_size: int
    threads: list[list[TraceEvent]] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    def events(self) -> int:
        return sum(len(t) for t in self.threads)

    def validate(self) -> None:
        held: list[set[int]] = [set() for _ in range(self.cores)]
        for tid, events in enumerate(self.threads):
            for ev in events:
                if ev.kind in ("R", "W"):
                    if not 1 <= ev.size <= self.line_size:
                        raise TraceError(f"T{tid}: access size {ev.size} out of range")
                    if ev.addr % self.line_size + ev.size > self.line_size:
                        raise TraceError(f"T{tid}: access at {ev.addr:#x} crosses a line")
                elif ev.kind == "ACQ":
                    if ev.lock in held[tid]:
                        raise TraceError(f"T{tid}: re-acquire of held lock {ev.lock}")
                    held[tid].add(ev.lock)
                elif ev.kind == "REL":
                    if ev.lock not in held[tid]:
                        raise TraceError(f"T{tid}: release of unheld lock {ev.lock}")
                    held[tid].discard(ev.lock)


def parse_trace(text: str) -> Trace:
    trace: Trace | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("#neatsim-trace"):
                fields = dict(part.split("=", 1) for part in line.split()[2:])
                try:
                    trace = Trace(cores=int(fields["cores"]),
                                  line_size=int(fields["linesize"]))
                except (KeyError, ValueError) as exc:
                    raise TraceError(f"line {lineno}: bad header: {raw}") from exc
                trace.threads = [[] for _ in range(trace.cores)]
            continue
        if trace is None:
            raise TraceError("missing #neatsim-trace header")
        parts = line.split()
        if len(parts) < 3 or not parts[0].startswith("T"):
            raise TraceError(f"line {lineno}: malformed event: {raw}")
        try:
            tid = int(parts[0][1:])
            kind = parts[1]
            if kind in ("R", "W"):
                ev = TraceEvent(kind, addr=int(parts[2], 16), size=int(parts[3]))
            elif kind in ("ACQ", "REL"):
                ev = TraceEvent(kind, lock=int(parts[2]))
            elif kind == "NOP":
                ev = TraceEvent(kind, count=int(parts[2]))
            else:
                raise ValueError(kind)
        except (ValueError, IndexError) as exc:
            raise TraceError(f"line {lineno}: malformed event: {raw}") from exc
        if not 0 <= tid < trace.cores:
            raise TraceError(f"line {lineno}: thread {tid} out of range")
        trace.threads[tid].append(ev)
    if trace is None:
        raise TraceError("empty trace")
    trace.validate()
    return trace


def load_trace(path: str | Path) -> Trace:
    return parse_trace(Path(path).read_text())


def write_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(format_trace(trace))


def format_trace(trace: Trace) -> str:
    out = [f"#neatsim-trace v1 cores={trace.cores} linesize={trace.line_size}"]
    out += [f"# {c}" for c in trace.comments]
    for tid, events in enumerate(trace.threads):
        for ev in events:
            out.append(ev.format(tid))
    return "\n".join(out) + "\n"
