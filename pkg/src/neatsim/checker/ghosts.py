"""Ghost state for the checker: the flat last-write oracle plus the race
ghost that restricts exploration to data-race-free executions.

An access by core c to byte b races when b's last write came from a different
core and c has not synchronized with it: there must have been a chain
`writer: wr b; writer: rel; ...; c: acq` before c touches b again."""

from __future__ import annotations


class GhostState:
    __slots__ = ("nbytes", "ncores", "oracle", "last_writer", "visible", "published",
                 "track_races")

    def __init__(self, nbytes: int, ncores: int, track_races: bool = True):
        self.nbytes = nbytes
        self.ncores = ncores
        self.track_races = track_races
        self.oracle = [0] * nbytes          # last value written, 0 initially
        self.last_writer = [-1] * nbytes
        self.visible = [0] * ncores         # bitmask: core synced with byte's last write
        self.published = 0                  # bitmask per (single) lock

    def copy(self) -> GhostState:
        dup = GhostState(self.nbytes, self.ncores, self.track_races)
        dup.oracle = list(self.oracle)
        dup.last_writer = list(self.last_writer)
        dup.visible = list(self.visible)
        dup.published = self.published
        return dup

    def key(self) -> tuple:
        if not self.track_races:
            return tuple(self.oracle)
        return (tuple(self.oracle), tuple(self.last_writer), tuple(self.visible),
                self.published)

    def is_race(self, core: int, byte_idx: int) -> bool:
        if not self.track_races:
            return False
        writer = self.last_writer[byte_idx]
        if writer in (-1, core):
            return False
        return not self.visible[core] >> byte_idx & 1

    def on_write(self, core: int, byte_idx: int, value: int) -> None:
        self.oracle[byte_idx] = value
        if not self.track_races:
            return
        bit = 1 << byte_idx
        self.last_writer[byte_idx] = core
        for c in range(self.ncores):
            if c == core:
                self.visible[c] |= bit
            else:
                self.visible[c] &= ~bit
        self.published &= ~bit

    def on_release(self, core: int) -> None:
        if self.track_races:
            self.published |= self.visible[core]

    def on_acquire(self, core: int) -> None:
        if self.track_races:
            self.visible[core] |= self.published

    def expected(self, byte_idx: int) -> int:
        return self.oracle[byte_idx]
