"""Breadth-first explicit-state exploration with canonical-state deduplication,
state counting, reproduction traces via parent links, and a registry of
injected protocol bugs used to validate the assertions."""

from __future__ import annotations

import marshal
import sys
import time
from collections import deque
from dataclasses import dataclass, field

from .world import WorldConfig, build_world, world_from_key

# Injected bugs; each must be killed (produce a violation) by the checker.
MUTATIONS = {
    "skip-commit": "a release writes nothing back",
    "silent-dirty-evict": "a dirty eviction sends no data to the LLC",
    "no-self-invalidate": "an acquire leaves all lines valid (base variant)",
    "skip-ws-insert": "the LLC never updates peer write signatures (full variant)",
    "early-cm-exit": "the commit episode ends before PutAllAck arrives",
}


@dataclass
class CheckerConfig:
    protocol: str
    lines: int = 1
    bytes_per_line: int = 1
    cores: int = 2
    drf_filter: bool = True
    si_waits_putacks: bool = False
    strict_empty_episode: bool = False
    mutation: str | None = None
    max_states: int | None = None
    max_violations: int = 1

    def world_config(self) -> WorldConfig:
        if self.mutation is not None and self.mutation not in MUTATIONS:
            raise ValueError(f"unknown mutation {self.mutation!r}; "
                             f"known: {', '.join(sorted(MUTATIONS))}")
        return WorldConfig(
            protocol=self.protocol, lines=self.lines,
            bytes_per_line=self.bytes_per_line, cores=self.cores,
            drf_filter=self.drf_filter, si_waits_putacks=self.si_waits_putacks,
            strict_empty_episode=self.strict_empty_episode, mutation=self.mutation)


@dataclass
class Violation:
    kind: str          # lastWrite | swmr | structural
    detail: str
    trace: list[str]


@dataclass
class ExplorationReport:
    config: CheckerConfig
    states: int = 0
    transitions: int = 0
    violations: list[Violation] = field(default_factory=list)
    completed: bool = False
    seconds: float = 0.0

    def to_kv(self) -> str:
        lines = [
            f"protocol = {self.config.protocol}",
            f"lines = {self.config.lines}",
            f"bytes_per_line = {self.config.bytes_per_line}",
            f"drf_filter = {str(self.config.drf_filter).lower()}",
            f"mutation = {self.config.mutation or 'none'}",
            f"states = {self.states}",
            f"transitions = {self.transitions}",
            f"violations = {len(self.violations)}",
            f"completed = {str(self.completed).lower()}",
            f"seconds = {self.seconds:.3f}",
        ]
        return "\n".join(lines)

    def summary(self) -> str:
        status = "completed" if self.completed else "stopped"
        return (f"{self.config.protocol} {self.config.lines}x"
                f"{self.config.bytes_per_line}: {self.states} states, "
                f"{self.transitions} transitions, {len(self.violations)} "
                f"violation(s), {status} in {self.seconds:.2f}s")


def _trace_to(visited: dict, key_bytes: bytes) -> list[str]:
    labels = []
    while True:
        parent, label = visited[key_bytes]
        if parent is None:
            break
        labels.append(label)
        key_bytes = parent
    labels.reverse()
    return labels


def explore(cfg: CheckerConfig) -> ExplorationReport:
    """Breadth-first search over canonical states. Only marshaled canonical
    keys are retained (states are rebuilt from keys when expanded), keeping
    memory per state small; dict lookup gives hash dedup with full-key
    confirmation on collision. marshal format 2 is value-canonical (later
    formats emit identity-based back-references, which would split equal
    states)."""
    start = time.perf_counter()
    wcfg = cfg.world_config()
    world = build_world(wcfg)
    initial_bytes = marshal.dumps(world.key(), 2)
    visited: dict[bytes, tuple] = {initial_bytes: (None, None)}
    frontier: deque[bytes] = deque([initial_bytes])
    report = ExplorationReport(config=cfg, states=1)

    stopped = False
    while frontier and not stopped:
        current_bytes = frontier.popleft()
        current = world_from_key(wcfg, marshal.loads(current_bytes))
        for step in current.successors():
            report.transitions += 1
            if step.violation is not None:
                kind, detail = step.violation
                trace = _trace_to(visited, current_bytes) + [step.label]
                report.violations.append(Violation(kind, detail, trace))
                if len(report.violations) >= cfg.max_violations:
                    stopped = True
                    break
                continue
            if step.world is None:
                continue  # racy successor collapses to the (visited) initial state
            key_bytes = marshal.dumps(step.world.key(), 2)
            if key_bytes not in visited:
                visited[key_bytes] = (current_bytes, sys.intern(step.label))
                report.states += 1
                if cfg.max_states is not None and report.states > cfg.max_states:
                    stopped = True
                    break
                frontier.append(key_bytes)

    report.completed = not stopped and not frontier
    report.seconds = time.perf_counter() - start
    return report
