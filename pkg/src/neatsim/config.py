"""Architectural parameters shared by the timing simulator and the wire-size
accounting. Defaults are desk-scale (small caches so synthetic workloads
exercise evictions); `ArchConfig.full_scale()` restores the reference sizing."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ArchConfig:
    line_size: int = 64            # bytes
    l1_latency: int = 4            # cycles
    l2_latency: int = 10
    llc_latency: int = 50
    mem_latency: int = 120
    remote_core_one_way: int = 15  # cycles, MESI timing only
    flit_size: int = 16            # bytes
    bandwidth_bytes_per_cycle: Fraction = Fraction(125, 2)  # 100 GB/s at 1.6 GHz
    l1_lines: int = 32             # 2 KB
    l1_assoc: int = 8
    l2_lines: int = 256            # 16 KB
    l2_assoc: int = 8
    llc_lines: int = 4096          # 256 KB
    llc_assoc: int = 32
    private_levels: int = 2        # 1 or 2
    signature_bits: int = 1008
    signature_hashes: int = 4
    exact_signatures: bool = False  # exact-set signatures instead of Bloom
    wt_buffer_entries: int = 10    # VIPS write-through buffer
    episode_scan_cost: int = 1     # cycles per valid line scanned during SI/CM

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.line_size <= 0 or self.line_size & (self.line_size - 1):
            raise ConfigError(f"line_size must be a power of two, got {self.line_size}")
        if self.flit_size <= 0 or self.line_size % self.flit_size:
            raise ConfigError("flit_size must divide line_size")
        if self.private_levels not in (1, 2):
            raise ConfigError("private_levels must be 1 or 2")
        if self.signature_hashes < 1 or self.signature_bits < 8:
            raise ConfigError("signature parameters out of range")
        # Signature response (control byte + dense payload) must fit 8 flits at
        # the defaults; see messages.signature_roundtrip_flits.
        if self.signature_bits == 1008 and self.flit_size == 16:
            payload = 1 + (self.signature_bits + 7) // 8  # format tag + bitmap
            assert (1 + payload + self.flit_size - 1) // self.flit_size <= 8

    @classmethod
    def full_scale(cls, **overrides) -> ArchConfig:
        """Reference sizing: 32 KB L1, 256 KB L2, 64 MB LLC at 64 B lines."""
        base = dict(l1_lines=512, l2_lines=4096, llc_lines=1 << 20)
        base.update(overrides)
        return cls(**base)

    def with_overrides(self, items: dict[str, str]) -> ArchConfig:
        """Apply `key=value` overrides with string values coerced per field."""
        known = {f.name: f.type for f in fields(self)}
        kwargs = {}
        for key, raw in items.items():
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key: {key}")
            current = getattr(self, name)
            if isinstance(current, bool):
                kwargs[name] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, Fraction):
                kwargs[name] = Fraction(raw.strip())
            else:
                kwargs[name] = int(raw)
        return replace(self, **kwargs)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read a flat `key = value` config file; '#' starts a comment."""
    items: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = stripped.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None,
                full_scale: bool = False) -> ArchConfig:
    cfg = ArchConfig.full_scale() if full_scale else ArchConfig()
    if path is not None:
        cfg = cfg.with_overrides(parse_config_file(path))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
