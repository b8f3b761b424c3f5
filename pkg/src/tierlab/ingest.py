"""Trace and configuration readers.

Two CSV trace formats are accepted (UTF-8, LF line endings, optional header):

``samples.csv``
    ``timestamp_ns,thread_id,addr,op,level,latency_cycles,tlb`` where ``addr``
    is hex, ``op`` is ``L`` or ``S``, ``level`` is one of
    ``L1 L2 L3 LFB DRAM NVM UNKNOWN`` and ``tlb`` is ``HIT``, ``MISS`` or ``NA``.

``allocs.csv``
    ``timestamp_ns,kind,base,length,callstack_id`` where ``kind`` is ``MMAP``
    or ``MUNMAP``, ``base`` is hex and ``length`` is a byte count.

Both streams must already be sorted by timestamp; the readers validate order
rather than sort, so arbitrarily large traces can be streamed.
"""

from __future__ import annotations

import contextlib
import dataclasses
import gc
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import ConfigError, TraceFormatError
from .trace_model import (
    DEFAULT_PAGE_SIZE,
    AllocationEvent,
    AllocKind,
    Level,
    MemorySample,
    Op,
    SampleColumns,
    Tier,
    Tlb,
    align_down,
    align_up,
    check_page_size,
)

SAMPLES_HEADER = "timestamp_ns,thread_id,addr,op,level,latency_cycles,tlb"
ALLOCS_HEADER = "timestamp_ns,kind,base,length,callstack_id"

_OP_TOKENS = {"L": Op.LOAD, "S": Op.STORE}
_LEVEL_TOKENS = {lv.name: lv for lv in Level}
_TLB_TOKENS = {"HIT": Tlb.HIT, "MISS": Tlb.MISS, "NA": Tlb.UNKNOWN}
_OP_NAMES = {v: k for k, v in _OP_TOKENS.items()}
_TLB_NAMES = {v: k for k, v in _TLB_TOKENS.items()}
_KIND_TOKENS = {"MMAP": AllocKind.MMAP, "MUNMAP": AllocKind.MUNMAP}

U64_MAX = 2**64 - 1
U32_MAX = 2**32 - 1


def _parse_uint(token: str, limit: int, base: int = 10) -> int:
    token = token.strip()
    if base == 16:
        body = token[2:] if token[:2].lower() == "0x" else token
        if not body or not re.fullmatch(r"[0-9a-fA-F]+", body):
            raise ValueError(f"not a hex number: {token!r}")
        value = int(body, 16)
    else:
        if not token.isdigit():
            raise ValueError(f"not an unsigned integer: {token!r}")
        value = int(token)
    if value > limit:
        raise ValueError(f"value out of range: {token!r}")
    return value


def _is_header(line: str) -> bool:
    return line.lstrip().lower().startswith("timestamp")


def parse_samples(lines: Iterable[str], source: str = "samples") -> list[MemorySample]:
    """Parse sample lines; raise :class:`TraceFormatError` listing every bad line."""
    out: list[MemorySample] = []
    problems: list[tuple[int, str]] = []
    last_ts = -1
    first = True
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if first:
            first = False
            if _is_header(line):
                continue
        parts = line.split(",")
        if len(parts) != 7:
            problems.append((lineno, f"expected 7 fields, got {len(parts)}"))
            continue
        try:
            ts = _parse_uint(parts[0], U64_MAX)
            tid = _parse_uint(parts[1], U32_MAX)
            addr = _parse_uint(parts[2], U64_MAX, base=16)
            op = _OP_TOKENS.get(parts[3].strip())
            if op is None:
                raise ValueError(f"unknown op {parts[3]!r}")
            level = _LEVEL_TOKENS.get(parts[4].strip())
            if level is None:
                raise ValueError(f"unknown level {parts[4]!r}")
            latency = _parse_uint(parts[5], U32_MAX)
            tlb = _TLB_TOKENS.get(parts[6].strip())
            if tlb is None:
                raise ValueError(f"unknown tlb outcome {parts[6]!r}")
        except ValueError as exc:
            problems.append((lineno, str(exc)))
            continue
        if latency == 0 and level in (Level.DRAM, Level.NVM):
            problems.append((lineno, f"{level.name} sample must have latency > 0"))
            continue
        if ts < last_ts:
            problems.append((lineno, f"timestamp regression ({ts} < {last_ts})"))
            continue
        last_ts = ts
        out.append(MemorySample(ts, tid, addr, op, level, latency, tlb))
    if problems:
        raise TraceFormatError(source, problems)
    return out


@contextlib.contextmanager
def gc_paused():
    """Bulk parsing allocates millions of small objects; cyclic GC only slows it."""
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


_HEX_ADDR = re.compile(r"0[xX][0-9a-fA-F]{1,16}|[0-9a-fA-F]{1,16}")


def parse_sample_columns(lines: Iterable[str], source: str = "samples") -> SampleColumns:
    """Columnar fast path of :func:`parse_samples` with identical acceptance.

    Anything unusual drops to the line-by-line parser, which reports every
    problem with its line number.
    """
    with gc_paused():
        return _parse_sample_columns(lines, source)


def _parse_sample_columns(lines: Iterable[str], source: str) -> SampleColumns:
    raw_lines = list(lines)  # kept so the fallback reports file line numbers
    body = [ln for ln in (raw.rstrip("\r\n") for raw in raw_lines) if ln.strip()]
    if body and _is_header(body[0]):
        body = body[1:]
    if not body:
        return SampleColumns.from_samples([])
    try:
        fields = [ln.split(",") for ln in body]
        if any(len(f) != 7 for f in fields):
            raise ValueError
        ts, tid, addr, op, lv, lat, tlb = zip(*fields)
        if not all(map(str.isdigit, ts + tid + lat)) or not all(map(_HEX_ADDR.fullmatch, addr)):
            raise ValueError
        ts_a = np.array([int(x) for x in ts], dtype=np.uint64)
        tid_a = np.array([int(x) for x in tid], dtype=np.int64)
        lat_a = np.array([int(x) for x in lat], dtype=np.int64)
        addr_a = np.array([int(x, 16) for x in addr], dtype=np.uint64)
        op_a = np.array([_OP_TOKENS[x] for x in op], dtype=np.int8)
        lv_a = np.array([_LEVEL_TOKENS[x] for x in lv], dtype=np.int8)
        tlb_a = np.array([_TLB_TOKENS[x] for x in tlb], dtype=np.int8)
    except (ValueError, KeyError, OverflowError):
        return SampleColumns.from_samples(parse_samples(raw_lines, source))
    ok = (
        int(ts_a.max()) < 2**63
        and int(tid_a.max()) <= U32_MAX
        and int(lat_a.max()) <= U32_MAX
        and not np.any((lat_a == 0) & ((lv_a == Level.DRAM) | (lv_a == Level.NVM)))
        and not np.any(np.diff(ts_a.astype(np.int64)) < 0)
    )
    if not ok:
        return SampleColumns.from_samples(parse_samples(raw_lines, source))
    return SampleColumns(ts_a.astype(np.int64), tid_a, addr_a, op_a, lv_a, lat_a, tlb_a)


def format_sample(s: MemorySample) -> str:
    return (
        f"{s.timestamp},{s.thread_id},0x{s.addr:x},{_OP_NAMES[s.op]},"
        f"{Level(s.level).name},{s.latency},{_TLB_NAMES[s.tlb]}"
    )


def serialize_samples(samples: Iterable[MemorySample]) -> str:
    return "\n".join([SAMPLES_HEADER, *map(format_sample, samples)]) + "\n"


def canonical_range(base: int, length: int, page_size: int) -> tuple[int, int]:
    """Round the length up to whole pages, then cover the range with aligned pages."""
    start = align_down(base, page_size)
    end = align_up(base + align_up(length, page_size), page_size)
    return start, end - start


def parse_allocs(
    lines: Iterable[str], page_size: int = DEFAULT_PAGE_SIZE, source: str = "allocs"
) -> list[AllocationEvent]:
    """Parse allocation lines into page-aligned events, preserving order.

    Unmatched ``MUNMAP`` ranges are legal here; they are reported as warnings
    when the object table is built.
    """
    check_page_size(page_size)
    out: list[AllocationEvent] = []
    problems: list[tuple[int, str]] = []
    last_ts = -1
    first = True
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if first:
            first = False
            if _is_header(line):
                continue
        parts = line.split(",")
        if len(parts) != 5:
            problems.append((lineno, f"expected 5 fields, got {len(parts)}"))
            continue
        try:
            ts = _parse_uint(parts[0], U64_MAX)
            kind = _KIND_TOKENS.get(parts[1].strip())
            if kind is None:
                raise ValueError(f"unknown event kind {parts[1]!r}")
            base = _parse_uint(parts[2], U64_MAX, base=16)
            length_tok = parts[3].strip()
            if length_tok[:2].lower() == "0x":
                length = _parse_uint(length_tok, U64_MAX, base=16)
            else:
                length = _parse_uint(length_tok, U64_MAX)
        except ValueError as exc:
            problems.append((lineno, str(exc)))
            continue
        if length == 0:
            problems.append((lineno, f"zero-length {kind.name}"))
            continue
        if ts < last_ts:
            problems.append((lineno, f"timestamp regression ({ts} < {last_ts})"))
            continue
        last_ts = ts
        cbase, clen = canonical_range(base, length, page_size)
        out.append(AllocationEvent(ts, kind, cbase, clen, parts[4].strip()))
    if problems:
        raise TraceFormatError(source, problems)
    return out


def serialize_allocs(events: Iterable[AllocationEvent]) -> str:
    rows = [
        f"{e.timestamp},{AllocKind(e.kind).name},0x{e.base:x},{e.length},{e.callstack_id}"
        for e in events
    ]
    return "\n".join([ALLOCS_HEADER, *rows]) + "\n"


def read_samples(path: str | Path) -> list[MemorySample]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_samples(fh, source=str(path))


def read_sample_columns(path: str | Path) -> SampleColumns:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_sample_columns(fh, source=str(path))


def read_allocs(path: str | Path, page_size: int = DEFAULT_PAGE_SIZE) -> list[AllocationEvent]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_allocs(fh, page_size=page_size, source=str(path))


# --------------------------------------------------------------------------
# Configuration

# Average external-access cost in cycles per (tier, TLB outcome), one row per
# measured workload: (DRAM hit, DRAM miss, NVM hit, NVM miss).
TABLE_III_COSTS: dict[str, tuple[int, int, int, int]] = {
    "bc_kron": (659, 772, 1833, 2727),
    "bc_urand": (1675, 1617, 2862, 3439),
    "bfs_kron": (404, 490, 1572, 2218),
    "bfs_urand": (578, 734, 2632, 4183),
    "cc_kron": (315, 866, 1170, 2975),
    "cc_urand": (325, 903, 1345, 4141),
}

# Promotion rate limits in bytes/second.  ``default`` is the documented sysctl
# default; ``tiering_0_8`` is the larger figure quoted for the tiering patch set
# (65,536 Mb/s).
RATE_LIMIT_PRESETS: dict[str, int] = {
    "default": 35_000_000,
    "tiering_0_8": 65_536 * 1_000_000 // 8,
}

DEFAULT_MIGRATE_PAGE_COST = 10_000


@dataclass(frozen=True)
class CostModel:
    dram_hit: float = 659
    dram_miss: float = 772
    nvm_hit: float = 1833
    nvm_miss: float = 2727
    migrate_page_cost: float = DEFAULT_MIGRATE_PAGE_COST

    @classmethod
    def preset(cls, name: str, migrate_page_cost: float = DEFAULT_MIGRATE_PAGE_COST) -> "CostModel":
        try:
            dh, dm, nh, nm = TABLE_III_COSTS[name]
        except KeyError:
            raise ConfigError(f"unknown cost preset {name!r}", ["cost_model"]) from None
        return cls(dh, dm, nh, nm, migrate_page_cost)

    def cycles(self, tier: Tier, tlb: Tlb) -> float:
        """Cost of one external access.  An unknown TLB outcome costs the hit/miss mean."""
        hit, miss = (self.dram_hit, self.dram_miss) if tier == Tier.DRAM else (self.nvm_hit, self.nvm_miss)
        if tlb == Tlb.HIT:
            return hit
        if tlb == Tlb.MISS:
            return miss
        return (hit + miss) / 2

    def table(self) -> np.ndarray:
        """``[tier, tlb]`` lookup array matching the enum codes."""
        return np.array(
            [[self.cycles(t, b) for b in Tlb] for t in Tier],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class RunConfig:
    page_size: int = DEFAULT_PAGE_SIZE
    dram_capacity: int = 192_000_000
    nvm_capacity: int = 768_000_000
    reserved_dram: int = 92_000_000
    scan_period: int = 1_000_000_000
    scan_batch: int = 64
    promote_rate_limit: int = RATE_LIMIT_PRESETS["default"]
    threshold_init: int = 1_000_000_000
    threshold_min: int = 125_000_000
    threshold_max: int = 2_000_000_000
    threshold_adjust_window: int = 1_000_000_000
    watermark_high: float = 0.98
    watermark_low: float = 0.95
    cost_model: CostModel = field(default_factory=CostModel)
    rng_seed: int = 0

    @property
    def usable_dram(self) -> int:
        return self.dram_capacity - self.reserved_dram

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_BYTE_UNITS = {"": 1, "B": 1, "KB": 10**3, "MB": 10**6, "GB": 10**9, "TB": 10**12}
_TIME_UNITS = {"": 1, "NS": 1, "US": 10**3, "MS": 10**6, "S": 10**9}
_QUANTITY = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([A-Za-z]*)\s*$")

_BYTE_KEYS = {"page_size", "dram_capacity", "nvm_capacity", "reserved_dram", "promote_rate_limit"}
_TIME_KEYS = {"scan_period", "threshold_init", "threshold_min", "threshold_max", "threshold_adjust_window"}
_COST_KEYS = {"preset", "dram_hit", "dram_miss", "nvm_hit", "nvm_miss", "migrate_page_cost"}


def _quantity(value: Any, units: Mapping[str, int], what: str) -> int:
    if isinstance(value, bool):
        raise ValueError(f"expected {what}, got boolean")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        m = _QUANTITY.match(value)
        if m and m.group(2).upper() in units:
            scaled = float(m.group(1)) * units[m.group(2).upper()]
            if scaled.is_integer():
                return int(scaled)
    raise ValueError(f"cannot read {value!r} as {what}")


def parse_bytes(value: Any) -> int:
    """``4096``, ``"35MB"``, ``"1.5 GB"`` -> bytes (decimal units)."""
    return _quantity(value, _BYTE_UNITS, "a byte quantity")


def parse_duration(value: Any) -> int:
    """``1000``, ``"100ms"``, ``"2s"`` -> nanoseconds."""
    return _quantity(value, _TIME_UNITS, "a duration")


def _cost_model_from(value: Any) -> CostModel:
    if isinstance(value, str):
        return CostModel.preset(value)
    if not isinstance(value, Mapping):
        raise ConfigError("cost_model must be a preset name or an object", ["cost_model"])
    unknown = sorted(set(value) - _COST_KEYS)
    if unknown:
        raise ConfigError("unknown cost_model keys", [f"cost_model.{k}" for k in unknown])
    base = CostModel.preset(value["preset"]) if "preset" in value else CostModel()
    overrides = {k: v for k, v in value.items() if k != "preset"}
    bad = [f"cost_model.{k}" for k, v in overrides.items()
           if isinstance(v, bool) or not isinstance(v, (int, float))]
    if bad:
        raise ConfigError("cost entries must be numbers", bad)
    return dataclasses.replace(base, **overrides)


def config_from_dict(doc: Mapping[str, Any]) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError("unknown configuration keys", unknown)
    values: dict[str, Any] = {}
    bad: list[str] = []
    for key, raw in doc.items():
        try:
            if key == "cost_model":
                values[key] = _cost_model_from(raw)
            elif key == "promote_rate_limit" and isinstance(raw, str) and raw in RATE_LIMIT_PRESETS:
                values[key] = RATE_LIMIT_PRESETS[raw]
            elif key in _BYTE_KEYS:
                values[key] = parse_bytes(raw)
            elif key in _TIME_KEYS:
                values[key] = parse_duration(raw)
            elif key in ("watermark_high", "watermark_low"):
                if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                    raise ValueError(key)
                values[key] = float(raw)
            else:
                if isinstance(raw, bool) or not isinstance(raw, int):
                    raise ValueError(key)
                values[key] = raw
        except ValueError:
            bad.append(key)
    if bad:
        raise ConfigError("malformed configuration values", bad)
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    bad: list[str] = []
    ps = cfg.page_size
    if ps <= 0 or ps & (ps - 1):
        bad.append("page_size")
    if cfg.dram_capacity <= 0:
        bad.append("dram_capacity")
    if cfg.nvm_capacity < 0:
        bad.append("nvm_capacity")
    if not 0 <= cfg.reserved_dram < cfg.dram_capacity:
        bad.append("reserved_dram")
    for key in ("scan_period", "scan_batch", "promote_rate_limit", "threshold_adjust_window"):
        if getattr(cfg, key) <= 0:
            bad.append(key)
    if cfg.threshold_min <= 0 or cfg.threshold_min > cfg.threshold_max:
        bad += ["threshold_min", "threshold_max"]
    if not cfg.threshold_min <= cfg.threshold_init <= cfg.threshold_max:
        bad.append("threshold_init")
    if not 0 < cfg.watermark_low < cfg.watermark_high <= 1:
        bad += ["watermark_low", "watermark_high"]
    cm = cfg.cost_model
    for name in ("dram_hit", "dram_miss", "nvm_hit", "nvm_miss", "migrate_page_cost"):
        if getattr(cm, name) <= 0:
            bad.append(f"cost_model.{name}")
    if not 0 <= cfg.rng_seed < 2**64:
        bad.append("rng_seed")
    if bad:
        raise ConfigError("configuration invariants violated", sorted(dict.fromkeys(bad)))


def load_config(source: str | Path | Mapping[str, Any] | None = None) -> RunConfig:
    """Read a JSON config document; missing keys take the documented defaults."""
    if source is None:
        return config_from_dict({})
    if isinstance(source, Mapping):
        return config_from_dict(source)
    text = Path(source).read_text(encoding="utf-8")
    if not text.strip():
        return config_from_dict({})
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be an object")
    return config_from_dict(doc)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
