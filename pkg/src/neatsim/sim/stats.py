"""Simulation statistics: cycles, cache events, flit traffic by category, and
self-invalidation/commit counters with ratios recomputed on demand."""

from __future__ import annotations

from dataclasses import dataclass, field

FLIT_CATEGORIES = ("data_fetch", "write_back", "ack_control", "invalidation",
                   "signature")

CSV_COLUMNS = (
    "protocol", "workload", "seed", "cores", "max_cycles",
    "l1_hits", "l1_misses", "l2_hits", "l2_misses", "llc_accesses",
    "mem_accesses", "flits_data_fetch", "flits_write_back", "flits_ack_control",
    "flits_invalidation", "flits_signature", "self_invalidated_lines",
    "acquires", "committed_lines", "releases", "self_inv_per_acquire",
    "commit_per_release",
)


@dataclass
class StatsReport:
    protocol: str = ""
    workload: str = ""
    seed: int = 0
    cores: int = 0
    per_core_cycles: list[int] = field(default_factory=list)
    l1_hits: int = 0
    l1_misses: int = 0
    l2_hits: int = 0
    l2_misses: int = 0
    llc_accesses: int = 0
    mem_accesses: int = 0
    flits: dict[str, int] = field(
        default_factory=lambda: {c: 0 for c in FLIT_CATEGORIES})
    self_invalidated_lines: int = 0
    acquires: int = 0
    committed_lines: int = 0
    releases: int = 0

    @property
    def max_cycles(self) -> int:
        """Execution time: the maximum cycle count over all cores."""
        return max(self.per_core_cycles, default=0)

    @property
    def total_flits(self) -> int:
        return sum(self.flits.values())

    @property
    def self_inv_per_acquire(self) -> float:
        return self.self_invalidated_lines / self.acquires if self.acquires else 0.0

    @property
    def commit_per_release(self) -> float:
        return self.committed_lines / self.releases if self.releases else 0.0

    def add_flits(self, category: str, count: int) -> None:
        self.flits[category] += count

    def csv_row(self) -> str:
        vals = [
            self.protocol, self.workload, str(self.seed), str(self.cores),
            str(self.max_cycles),
            str(self.l1_hits), str(self.l1_misses), str(self.l2_hits),
            str(self.l2_misses), str(self.llc_accesses), str(self.mem_accesses),
            str(self.flits["data_fetch"]), str(self.flits["write_back"]),
            str(self.flits["ack_control"]), str(self.flits["invalidation"]),
            str(self.flits["signature"]), str(self.self_invalidated_lines),
            str(self.acquires), str(self.committed_lines), str(self.releases),
            f"{self.self_inv_per_acquire:.6g}", f"{self.commit_per_release:.6g}",
        ]
        return ",".join(vals)

    @staticmethod
    def csv_header() -> str:
        return ",".join(CSV_COLUMNS)

    def summary(self) -> str:
        lines = [
            f"protocol={self.protocol} workload={self.workload} "
            f"cores={self.cores} seed={self.seed}",
            f"  execution time: {self.max_cycles} cycles "
            f"(per core: {' '.join(str(c) for c in self.per_core_cycles)})",
            f"  L1 {self.l1_hits} hits / {self.l1_misses} misses; "
            f"L2 {self.l2_hits} hits / {self.l2_misses} misses; "
            f"LLC {self.llc_accesses} accesses; memory {self.mem_accesses}",
            "  flits: " + " ".join(f"{k}={self.flits[k]}" for k in FLIT_CATEGORIES)
            + f" total={self.total_flits}",
            f"  self-inv/acquire: {self.self_inv_per_acquire:.6g} "
            f"({self.self_invalidated_lines}/{self.acquires}); "
            f"commit/release: {self.commit_per_release:.6g} "
            f"({self.committed_lines}/{self.releases})",
        ]
        return "\n".join(lines)
