"""Seeded synthetic traces with the access-pattern archetypes of graph workloads.

A :class:`WorkloadSpec` lists objects, each with a size, a lifetime, an
access pattern and a weight (its share of external samples).  Generation is
fully determined by the spec and its seed; every object draws from its own
Philox stream spawned from the seed, so adding an object does not perturb
the others.

Two level modes exist.  ``traced`` labels external samples DRAM or NVM with
exact per-object counts and cost-model latencies, for characterization
fixtures.  ``unknown`` labels them UNKNOWN and leaves residency to the
simulator.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np

from .errors import ConfigError
from .ingest import (
    ALLOCS_HEADER,
    SAMPLES_HEADER,
    TABLE_III_COSTS,
    CostModel,
    parse_bytes,
    parse_duration,
    serialize_allocs,
)
from .trace_model import (
    DEFAULT_PAGE_SIZE,
    AllocationEvent,
    AllocKind,
    Level,
    MemorySample,
    SampleColumns,
    Tier,
    Tlb,
)

RNG_ALGORITHM = "numpy.random.Philox (4x64, 10 rounds) seeded via numpy.random.SeedSequence.spawn"
HEAP_BASE = 0x7F0000000000
STACK_BASE = 0x7FFF00000000
STACK_SIZE = 8 << 20
S = 1_000_000_000

# non-external levels and their nominal latencies in cycles
_CACHE_LATENCY = {Level.L1: 4, Level.L2: 14, Level.L3: 48, Level.LFB: 96}


@dataclass(frozen=True)
class SingleTouchSweep:
    """Each sample touches the next untouched page of its thread's partition."""

    kind: str = field(default="SingleTouchSweep", init=False)


@dataclass(frozen=True)
class UniformRandom:
    kind: str = field(default="UniformRandom", init=False)


@dataclass(frozen=True)
class TwoTouchGap:
    """Fresh pages touched exactly twice, ``gap`` apart.

    ``dist`` is ``uniform`` or ``loguniform`` over [gap_min, gap_max]; equal
    bounds give a constant gap.
    """

    gap_min: int
    gap_max: int
    dist: str = "uniform"
    kind: str = field(default="TwoTouchGap", init=False)


@dataclass(frozen=True)
class HotColdSkew:
    """A fraction ``skew`` of samples lands on the first ``hot_fraction`` of pages."""

    hot_fraction: float
    skew: float
    kind: str = field(default="HotColdSkew", init=False)


Pattern = Union[SingleTouchSweep, UniformRandom, TwoTouchGap, HotColdSkew]


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    size: int
    pattern: Pattern
    weight: float
    start: int = 0
    end: int | None = None  # munmap time; None keeps it mapped
    nvm_fraction: float = 0.0  # traced mode only
    tlb_miss_fraction: float = 0.0
    prefault: int = 0  # duration of a non-external first-touch sweep from ``start``


@dataclass(frozen=True)
class WorkloadSpec:
    objects: tuple[ObjectSpec, ...]
    duration: int
    sample_rate: float  # samples per second, all levels
    external_fraction: float = 0.5
    threads: int = 1
    seed: int = 0
    tier_mode: str = "unknown"
    cost_preset: str = "bc_kron"
    latency_jitter: int = 0
    page_size: int = DEFAULT_PAGE_SIZE

    @property
    def n_samples(self) -> int:
        return round(self.sample_rate * self.duration / S)

    @property
    def n_external(self) -> int:
        return round(self.n_samples * self.external_fraction)


def validate_spec(spec: WorkloadSpec) -> None:
    bad: list[str] = []
    if not spec.objects:
        bad.append("objects")
    if abs(sum(o.weight for o in spec.objects) - 1) > 1e-9 or any(o.weight < 0 for o in spec.objects):
        bad.append("objects.weight")
    if spec.duration <= 0:
        bad.append("duration")
    if spec.sample_rate <= 0:
        bad.append("sample_rate")
    if not 0 < spec.external_fraction <= 1:
        bad.append("external_fraction")
    if spec.threads < 1:
        bad.append("threads")
    if spec.tier_mode not in ("traced", "unknown"):
        bad.append("tier_mode")
    if spec.cost_preset not in TABLE_III_COSTS:
        bad.append("cost_preset")
    if spec.latency_jitter < 0:
        bad.append("latency_jitter")
    ps = spec.page_size
    if ps <= 0 or ps & (ps - 1):
        bad.append("page_size")
    for o in spec.objects:
        end = spec.duration if o.end is None else o.end
        if o.size <= 0 or o.size % ps:
            bad.append(f"{o.name}.size")
        if not 0 <= o.start < end <= spec.duration:
            bad.append(f"{o.name}.start/end")
        if not 0 <= o.nvm_fraction <= 1:
            bad.append(f"{o.name}.nvm_fraction")
        if not 0 <= o.tlb_miss_fraction <= 1:
            bad.append(f"{o.name}.tlb_miss_fraction")
        if o.prefault < 0 or o.start + o.prefault > end:
            bad.append(f"{o.name}.prefault")
        if o.size // ps < spec.threads:
            bad.append(f"{o.name}.size")
        p = o.pattern
        if isinstance(p, TwoTouchGap):
            if not 0 < p.gap_min <= p.gap_max < end - o.start - 2 or p.dist not in ("uniform", "loguniform"):
                bad.append(f"{o.name}.pattern")
        elif isinstance(p, HotColdSkew):
            if not 0 < p.hot_fraction < 1 or not 0 <= p.skew <= 1:
                bad.append(f"{o.name}.pattern")
    if bad:
        raise ConfigError("invalid workload spec", sorted(dict.fromkeys(bad)))


@dataclass
class SyntheticTrace:
    allocs: list[AllocationEvent]
    columns: SampleColumns
    meta: dict[str, Any]

    @property
    def samples(self) -> list[MemorySample]:
        return self.columns.to_samples()

    def samples_csv(self) -> str:
        c = self.columns
        lv_names = [Level(i).name for i in range(len(Level))]
        tlb_names = ["HIT", "MISS", "NA"]
        op_names = ["L", "S"]
        rows = [
            f"{t},{th},0x{a:x},{op_names[o]},{lv_names[lv]},{la},{tlb_names[tb]}"
            for t, th, a, o, lv, la, tb in zip(
                c.timestamp.tolist(), c.thread_id.tolist(), c.addr.tolist(), c.op.tolist(),
                c.level.tolist(), c.latency.tolist(), c.tlb.tolist(),
            )
        ]
        return "\n".join([SAMPLES_HEADER, *rows]) + "\n"

    def allocs_csv(self) -> str:
        return serialize_allocs(self.allocs) if self.allocs else ALLOCS_HEADER + "\n"

    def write(self, out_dir: str | Path) -> list[str]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "allocs.csv").write_text(self.allocs_csv(), encoding="utf-8")
        (out / "samples.csv").write_text(self.samples_csv(), encoding="utf-8")
        (out / "synth_meta.json").write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return ["allocs.csv", "samples.csv", "synth_meta.json"]


# --------------------------------------------------------------------------
# Layout


def _layout(spec: WorkloadSpec) -> list[int]:
    """First-fit address assignment; freed ranges are reused by later objects."""
    ps = spec.page_size
    events = sorted(
        [(o.start, 1, i) for i, o in enumerate(spec.objects)]
        + [(o.end, 0, i) for i, o in enumerate(spec.objects) if o.end is not None]
    )
    free: list[tuple[int, int]] = []  # (base, length) holes below the bump pointer
    bump = HEAP_BASE
    bases = [0] * len(spec.objects)
    for _, is_map, i in events:
        size = spec.objects[i].size + ps  # one guard page
        if is_map:
            for k, (b, ln) in enumerate(free):
                if ln >= size:
                    bases[i] = b
                    free[k] = (b + size, ln - size)
                    break
            else:
                bases[i] = bump
                bump += size
        else:
            free.append((bases[i], size))
            free.sort()
            merged: list[tuple[int, int]] = []
            for b, ln in free:
                if merged and merged[-1][0] + merged[-1][1] == b:
                    merged[-1] = (merged[-1][0], merged[-1][1] + ln)
                else:
                    merged.append((b, ln))
            free = [h for h in merged if h[1] > 0]
    return bases


def _partition_bounds(n_pages: int, threads: int) -> np.ndarray:
    return np.array([i * n_pages // threads for i in range(threads + 1)], dtype=np.int64)


def _pattern_pages(
    rng: np.random.Generator, pattern: Pattern, n: int, n_pages: int, bounds: np.ndarray,
    t0: int, t1: int,
) -> tuple[np.ndarray, np.ndarray]:
    """(page index within object, timestamp) for ``n`` external samples."""
    threads = len(bounds) - 1
    if isinstance(pattern, TwoTouchGap):
        pairs = n // 2
        if pairs > n_pages:
            raise ConfigError(f"TwoTouchGap needs {pairs} pages, object has {n_pages}", ["objects.size"])
        if pattern.dist == "loguniform":
            gaps = np.exp(rng.uniform(math.log(pattern.gap_min), math.log(pattern.gap_max), pairs))
            gaps = np.rint(gaps).astype(np.int64)
        else:
            gaps = rng.integers(pattern.gap_min, pattern.gap_max, pairs, endpoint=True)
        first = t0 + (rng.random(pairs) * (t1 - t0 - gaps)).astype(np.int64)
        pages = rng.choice(n_pages, pairs, replace=False)
        out_p = np.concatenate([pages, pages])
        out_t = np.concatenate([first, first + gaps])
        if n % 2:  # odd sample count: one extra single touch on an unused page
            spare = np.setdiff1d(np.arange(n_pages), pages)[:1] if pairs < n_pages else pages[:1]
            out_p = np.append(out_p, spare)
            out_t = np.append(out_t, t0 + int(rng.integers(0, t1 - t0)))
        return out_p, out_t

    times = np.sort(t0 + (rng.random(n) * (t1 - t0)).astype(np.int64))
    if isinstance(pattern, SingleTouchSweep):
        k = np.arange(n)
        th = k % threads
        width = bounds[th + 1] - bounds[th]
        pages = bounds[th] + (k // threads) % width
        return pages, times
    if isinstance(pattern, UniformRandom):
        return rng.integers(0, n_pages, n), times
    hot = max(1, int(round(n_pages * pattern.hot_fraction)))
    is_hot = rng.random(n) < pattern.skew
    pages = np.where(is_hot, rng.integers(0, hot, n), rng.integers(min(hot, n_pages - 1), n_pages, n))
    return pages, times


def _paired_jitter(rng: np.random.Generator, n: int, jitter: int) -> np.ndarray:
    """Offsets in [-jitter, jitter] that cancel in pairs, so the cell mean is exact."""
    out = np.zeros(n, dtype=np.int64)
    if jitter <= 0 or n < 2:
        return out
    half = n // 2
    d = rng.integers(0, jitter, half, endpoint=True)
    out[0: 2 * half: 2] = d
    out[1: 2 * half: 2] = -d
    return out


def _exact_choice(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    if k > 0:
        mask[rng.choice(n, k, replace=False)] = True
    return mask


def generate(spec: WorkloadSpec) -> SyntheticTrace:
    validate_spec(spec)
    ps = spec.page_size
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(len(spec.objects) + 1)
    cost = CostModel.preset(spec.cost_preset)
    bases = _layout(spec)
    n_ext = spec.n_external
    counts = _apportion(n_ext, [o.weight for o in spec.objects])

    allocs: list[tuple[int, int, AllocationEvent]] = []
    parts: list[dict[str, np.ndarray]] = []
    prefault_total = 0
    for i, (o, base, n, ss) in enumerate(zip(spec.objects, bases, counts, children)):
        rng = np.random.Generator(np.random.Philox(ss))
        end = spec.duration if o.end is None else o.end
        allocs.append((o.start, 1, AllocationEvent(o.start, AllocKind.MMAP, base, o.size, o.name)))
        if o.end is not None:
            allocs.append((o.end, 0, AllocationEvent(o.end, AllocKind.MUNMAP, base, o.size, o.name)))
        n_pages = o.size // ps
        bounds = _partition_bounds(n_pages, spec.threads)
        # samples strictly inside the lifetime
        t0, t1 = o.start + 1, end - 1
        if o.prefault:
            pf = np.arange(n_pages)
            pf_t = o.start + 1 + pf * max(o.prefault - 2, 0) // max(n_pages, 1)
            parts.append(_block(pf, pf_t, base, bounds, ps, Level.LFB, _CACHE_LATENCY[Level.LFB], Tlb.HIT))
            prefault_total += n_pages
        if n == 0:
            continue
        pages, times = _pattern_pages(rng, o.pattern, n, n_pages, bounds, t0, t1)
        if spec.tier_mode == "traced":
            # NVM takes the high-address end of the object so a page keeps one tier
            order = np.lexsort((np.arange(n), pages))
            n_nvm = round(o.nvm_fraction * n)
            tier = np.zeros(n, dtype=np.int64)
            tier[order[n - n_nvm:]] = int(Tier.NVM)
        else:
            tier = np.full(n, -1, dtype=np.int64)
        tlb = np.zeros(n, dtype=np.int64)
        for t in (0, 1, -1):
            cell = np.flatnonzero(tier == t)
            tlb[cell[_exact_choice(rng, cell.size, round(o.tlb_miss_fraction * cell.size))]] = int(Tlb.MISS)
        level = np.where(tier == 1, int(Level.NVM), np.where(tier == 0, int(Level.DRAM), int(Level.UNKNOWN)))
        latency = np.zeros(n, dtype=np.int64)
        if spec.tier_mode == "traced":
            for t in (0, 1):
                for b in (0, 1):
                    cell = np.flatnonzero((tier == t) & (tlb == b))
                    base_lat = int(cost.cycles(Tier(t), Tlb(b)))
                    latency[cell] = base_lat + _paired_jitter(rng, cell.size, min(spec.latency_jitter, base_lat - 1))
        blk = _block(pages, times, base, bounds, ps, level, latency, tlb)
        blk["addr"] = blk["addr"] + rng.integers(0, ps // 8, n).astype(np.uint64) * np.uint64(8)
        parts.append(blk)

    # non-external filler on an unmapped stack region
    rng = np.random.Generator(np.random.Philox(children[-1]))
    n_fill = max(0, spec.n_samples - n_ext - prefault_total)
    if n_fill:
        lv = rng.integers(int(Level.L1), int(Level.LFB), n_fill, endpoint=True)
        lat = np.array([_CACHE_LATENCY[Level(i)] for i in range(4)], dtype=np.int64)[lv]
        parts.append({
            "timestamp": rng.integers(0, spec.duration, n_fill),
            "thread_id": rng.integers(0, spec.threads, n_fill),
            "addr": (STACK_BASE + rng.integers(0, STACK_SIZE // 8, n_fill) * 8).astype(np.uint64),
            "level": lv,
            "latency": lat,
            "tlb": np.zeros(n_fill, dtype=np.int64),
        })

    cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]} if parts else None
    if cat is None or not len(cat["timestamp"]):
        cols = SampleColumns.from_samples([])
    else:
        order = np.argsort(cat["timestamp"], kind="stable")
        m = len(order)
        cols = SampleColumns(
            timestamp=cat["timestamp"][order].astype(np.int64),
            thread_id=cat["thread_id"][order].astype(np.int64),
            addr=cat["addr"][order].astype(np.uint64),
            op=np.zeros(m, dtype=np.int8),
            level=cat["level"][order].astype(np.int8),
            latency=cat["latency"][order].astype(np.int64),
            tlb=cat["tlb"][order].astype(np.int8),
        )
    allocs.sort(key=lambda x: (x[0], x[1]))  # unmaps first on ties, freeing reused ranges
    meta = {
        "rng_algorithm": RNG_ALGORITHM,
        "seed": spec.seed,
        "spec": spec_to_dict(spec),
        "object_counts": {o.name: c for o, c in zip(spec.objects, counts)},
        "n_samples": len(cols),
    }
    return SyntheticTrace([a for _, _, a in allocs], cols, meta)


def _block(pages, times, base, bounds, ps, level, latency, tlb) -> dict[str, np.ndarray]:
    n = len(pages)
    pages = np.asarray(pages, dtype=np.int64)
    return {
        "timestamp": np.asarray(times, dtype=np.int64),
        "thread_id": np.searchsorted(bounds, pages, side="right") - 1,
        "addr": (base + pages * ps).astype(np.uint64),
        "level": np.broadcast_to(np.asarray(level, dtype=np.int64), (n,)).copy(),
        "latency": np.broadcast_to(np.asarray(latency, dtype=np.int64), (n,)).copy(),
        "tlb": np.broadcast_to(np.asarray(tlb, dtype=np.int64), (n,)).copy(),
    }


def _apportion(total: int, weights: Sequence[float]) -> list[int]:
    """Largest-remainder split of ``total`` by ``weights``; ties to the earlier object."""
    raw = [total * w for w in weights]
    base = [math.floor(r) for r in raw]
    rest = total - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


# --------------------------------------------------------------------------
# Spec (de)serialization

_PATTERNS = {c.__name__: c for c in (SingleTouchSweep, UniformRandom, TwoTouchGap, HotColdSkew)}
_OBJ_BYTES = {"size"}
_OBJ_TIMES = {"start", "end", "prefault"}


def spec_to_dict(spec: WorkloadSpec) -> dict[str, Any]:
    return asdict(spec)


def spec_from_dict(doc: Mapping[str, Any]) -> WorkloadSpec:
    try:
        objs = []
        for raw in doc["objects"]:
            raw = dict(raw)
            pat = dict(raw.pop("pattern"))
            cls = _PATTERNS[pat.pop("kind")]
            for k in ("gap_min", "gap_max"):
                if k in pat:
                    pat[k] = parse_duration(pat[k])
            for k in _OBJ_BYTES & raw.keys():
                raw[k] = parse_bytes(raw[k])
            for k in _OBJ_TIMES & raw.keys():
                if raw[k] is not None:
                    raw[k] = parse_duration(raw[k])
            objs.append(ObjectSpec(pattern=cls(**pat), **raw))
        rest = {k: v for k, v in doc.items() if k != "objects"}
        if "duration" in rest:
            rest["duration"] = parse_duration(rest["duration"])
        spec = WorkloadSpec(objects=tuple(objs), **rest)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed workload spec: {exc}", ["spec"]) from None
    validate_spec(spec)
    return spec


def load_spec(path: str | Path) -> WorkloadSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})", ["spec"]) from None
    return spec_from_dict(doc)


# --------------------------------------------------------------------------
# Presets

MB = 1_000_000 // DEFAULT_PAGE_SIZE * DEFAULT_PAGE_SIZE  # page-aligned "megabyte"


@dataclass(frozen=True)
class PresetTargets:
    nvm_share: float | None = None
    top_object_nvm_share: float | None = None
    one_touch_share: float | None = None
    one_touch_floor: float | None = None


def _bc_kron_like(seed: int, scale: float) -> tuple[WorkloadSpec, PresetTargets]:
    # Early objects fill DRAM on first touch; the hot object arrives once DRAM
    # is mostly taken and lands largely on NVM.
    objs = (
        ObjectSpec("edge_list", 50 * MB, SingleTouchSweep(), 0.25, start=0, prefault=6 * S,
                   tlb_miss_fraction=0.3),
        ObjectSpec("input_buffer", 40 * MB, SingleTouchSweep(), 0.02, start=S // 2, end=12 * S,
                   prefault=7 * S, tlb_miss_fraction=0.3),
        ObjectSpec("csr_offsets", 50 * MB, UniformRandom(), 0.08, start=12 * S + S // 10, prefault=S,
                   tlb_miss_fraction=0.4),
        ObjectSpec("bc_scores", 30 * MB, HotColdSkew(0.1, 0.7), 0.50, start=13 * S + S // 5, prefault=S,
                   nvm_fraction=0.42, tlb_miss_fraction=0.5),
        ObjectSpec("deltas", 16 * MB, TwoTouchGap(S // 2, 20 * S), 0.08, start=14 * S + S // 2,
                   nvm_fraction=0.8, tlb_miss_fraction=0.5),
        ObjectSpec("path_counts", 2 * MB, HotColdSkew(0.2, 0.8), 0.07, start=14 * S + S // 2,
                   nvm_fraction=0.7, tlb_miss_fraction=0.5),
    )
    spec = WorkloadSpec(objs, duration=60 * S, sample_rate=1400 * scale, external_fraction=0.491,
                        threads=4, seed=seed, tier_mode="traced", cost_preset="bc_kron", latency_jitter=40)
    return spec, PresetTargets(nvm_share=0.3231, top_object_nvm_share=0.65, one_touch_floor=0.33)


def _bfs_kron_like(seed: int, scale: float) -> tuple[WorkloadSpec, PresetTargets]:
    n = 100_000 * scale
    ext = round(n * 0.374)
    sweep_pages = math.ceil(ext * 0.79 / 4) * 4 + 4
    objs = (
        ObjectSpec("frontier", sweep_pages * DEFAULT_PAGE_SIZE, SingleTouchSweep(), 0.79,
                   nvm_fraction=0.2, tlb_miss_fraction=0.3),
        ObjectSpec("parents", 2 * MB, HotColdSkew(0.2, 0.9), 0.21, nvm_fraction=0.0, tlb_miss_fraction=0.2,
                   prefault=S),
    )
    spec = WorkloadSpec(objs, duration=30 * S, sample_rate=n / 30, external_fraction=0.374, threads=4,
                        seed=seed, tier_mode="traced", cost_preset="bfs_kron", latency_jitter=30)
    return spec, PresetTargets(one_touch_share=0.80)


def _uniform_cold(seed: int, scale: float) -> tuple[WorkloadSpec, PresetTargets]:
    objs = (ObjectSpec("table", 200 * MB, UniformRandom(), 1.0, nvm_fraction=0.5, tlb_miss_fraction=0.5),)
    spec = WorkloadSpec(objs, duration=20 * S, sample_rate=2500 * scale, external_fraction=0.3, threads=2,
                        seed=seed, tier_mode="traced", cost_preset="bfs_urand", latency_jitter=50)
    return spec, PresetTargets()


def _cc_urand_like(seed: int, scale: float) -> tuple[WorkloadSpec, PresetTargets]:
    objs = (
        ObjectSpec("components", 80 * MB, UniformRandom(), 0.7, nvm_fraction=0.12, tlb_miss_fraction=0.6),
        ObjectSpec("edges", 40 * MB, SingleTouchSweep(), 0.3, nvm_fraction=0.05, tlb_miss_fraction=0.4),
    )
    spec = WorkloadSpec(objs, duration=20 * S, sample_rate=2000 * scale, external_fraction=0.486, threads=4,
                        seed=seed, tier_mode="traced", cost_preset="cc_urand", latency_jitter=20)
    return spec, PresetTargets()


PRESETS = {
    "bc_kron_like": _bc_kron_like,
    "bfs_kron_like": _bfs_kron_like,
    "uniform_cold": _uniform_cold,
    "cc_urand_like": _cc_urand_like,
}


def preset(name: str, seed: int = 0, scale: float = 1.0) -> WorkloadSpec:
    return preset_with_targets(name, seed, scale)[0]


def preset_with_targets(name: str, seed: int = 0, scale: float = 1.0) -> tuple[WorkloadSpec, PresetTargets]:
    try:
        build = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r} (have {', '.join(sorted(PRESETS))})", ["preset"]) from None
    return build(seed, scale)


def with_tier_mode(spec: WorkloadSpec, mode: str) -> WorkloadSpec:
    return replace(spec, tier_mode=mode)


# --------------------------------------------------------------------------
# Table-row fixtures

# Per workload: external %, DRAM % / NVM % of external samples, DRAM % / NVM %
# of external latency cost.
TABLE_ROWS: dict[str, tuple[float, float, float]] = {
    "bc_kron": (49.1, 67.69, 37.53),
    "bc_urand": (28.5, 78.18, 62.95),
    "bfs_kron": (37.4, 93.87, 79.81),
    "bfs_urand": (27.1, 68.83, 28.20),
    "cc_kron": (46.9, 95.08, 89.51),
    "cc_urand": (48.6, 91.48, 80.30),
}


def _solve_tlb_misses(n_dram: int, n_nvm: int, costs: tuple[int, int, int, int], target: float) -> tuple[int, int]:
    """Miss counts per tier giving a DRAM cost share closest to ``target`` percent.

    Among near-ties, mixes leaving no tier x TLB cell empty come first, then
    the pair with the most similar miss rates.
    """
    dh, dm, nh, nm = costs
    best = None
    for md in range(n_dram + 1):
        dram = (n_dram - md) * dh + md * dm
        # share = dram / (dram + nvm) -> nvm = dram (1 - s) / s
        want_nvm = dram * (100 - target) / target
        mn_f = (want_nvm - n_nvm * nh) / (nm - nh)
        for mn in {math.floor(mn_f), math.ceil(mn_f)}:
            if not 0 <= mn <= n_nvm:
                continue
            nvm = (n_nvm - mn) * nh + mn * nm
            err = abs(100 * dram / (dram + nvm) - target)
            if err > 0.005:
                continue
            empty_cell = md in (0, n_dram) or mn in (0, n_nvm)
            key = (empty_cell, abs(md / max(n_dram, 1) - mn / max(n_nvm, 1)), err, md, mn)
            if best is None or key < best[0]:
                best = (key, md, mn)
    if best is None:
        raise ConfigError(f"no TLB mix reproduces a {target}% DRAM cost share", ["row"])
    return best[1], best[2]


def table_fixture(row: str, total: int = 20_000, seed: int = 0, jitter: int = 60) -> SyntheticTrace:
    """A trace whose tier split, cost split and cell means match one table row."""
    if row not in TABLE_ROWS:
        raise ConfigError(f"unknown table row {row!r}", ["row"])
    ext_pct, dram_pct, cost_pct = TABLE_ROWS[row]
    costs = TABLE_III_COSTS[row]
    n_ext = round(total * ext_pct / 100)
    n_dram = round(n_ext * dram_pct / 100)
    n_nvm = n_ext - n_dram
    md, mn = _solve_tlb_misses(n_dram, n_nvm, costs, cost_pct)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    size = 64 * MB
    base = HEAP_BASE
    n_pages = size // DEFAULT_PAGE_SIZE
    cells = [(0, 0, n_dram - md), (0, 1, md), (1, 0, n_nvm - mn), (1, 1, mn)]
    tier = np.concatenate([np.full(c, t) for t, _, c in cells])
    tlb = np.concatenate([np.full(c, b) for _, b, c in cells])
    latency = np.concatenate([
        costs[2 * t + b] + _paired_jitter(rng, c, jitter) for t, b, c in cells
    ])
    # NVM samples on the upper half of the object, DRAM on the lower
    half = n_pages // 2
    pages = np.where(tier == 1, half + rng.integers(0, n_pages - half, n_ext), rng.integers(0, half, n_ext))
    n_fill = total - n_ext
    lv_fill = rng.integers(int(Level.L1), int(Level.LFB), n_fill, endpoint=True)
    lat_fill = np.array([_CACHE_LATENCY[Level(i)] for i in range(4)], dtype=np.int64)[lv_fill]
    level = np.concatenate([np.where(tier == 1, int(Level.NVM), int(Level.DRAM)), lv_fill])
    addr = np.concatenate([
        base + pages * DEFAULT_PAGE_SIZE + rng.integers(0, DEFAULT_PAGE_SIZE // 8, n_ext) * 8,
        STACK_BASE + rng.integers(0, STACK_SIZE // 8, n_fill) * 8,
    ]).astype(np.uint64)
    perm = rng.permutation(total)
    ts = 1_000 + np.arange(total, dtype=np.int64) * 100_000
    cols = SampleColumns(
        timestamp=ts,
        thread_id=np.arange(total, dtype=np.int64) % 4,
        addr=addr[perm],
        op=np.zeros(total, dtype=np.int8),
        level=level[perm].astype(np.int8),
        latency=np.concatenate([latency, lat_fill])[perm].astype(np.int64),
        tlb=np.concatenate([tlb, np.zeros(n_fill, dtype=np.int64)])[perm].astype(np.int8),
    )
    allocs = [AllocationEvent(0, AllocKind.MMAP, base, size, f"{row}_graph")]
    meta = {
        "rng_algorithm": RNG_ALGORITHM,
        "seed": seed,
        "row": row,
        "external": n_ext,
        "dram": n_dram,
        "nvm": n_nvm,
        "dram_tlb_miss": md,
        "nvm_tlb_miss": mn,
        "cell_means": dict(zip(("dram_hit", "dram_miss", "nvm_hit", "nvm_miss"), costs)),
    }
    return SyntheticTrace(allocs, cols, meta)
