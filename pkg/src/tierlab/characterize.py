"""Characterization metrics over attributed samples.

Every function here is a deterministic function of its inputs.  "External"
means a load served by DRAM or NVM; stores are excluded unless asked for.
Percentiles use the nearest-rank method and standard deviations divide by n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .mapping import build_object_table
from .trace_model import (
    DEFAULT_PAGE_SIZE,
    AllocationEvent,
    Level,
    MemorySample,
    SampleColumns,
    Tier,
    Tlb,
)

if TYPE_CHECKING:
    from .autonuma_sim import SimReport

NS_PER_S = 1_000_000_000


def _share(part: float, whole: float) -> float | None:
    return part / whole if whole else None


@dataclass(frozen=True)
class TierSplit:
    total_samples: int
    external_samples: int
    samples_by_tier: tuple[int, int]
    cost_by_tier: tuple[int, int]
    # cell[tier][tlb] = (count, latency sum), tlb in (HIT, MISS, UNKNOWN)
    cells: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def external_fraction(self) -> float | None:
        return _share(self.external_samples, self.total_samples)

    @property
    def dram_share(self) -> float | None:
        return _share(self.samples_by_tier[0], self.external_samples)

    @property
    def nvm_share(self) -> float | None:
        return _share(self.samples_by_tier[1], self.external_samples)

    @property
    def dram_cost_share(self) -> float | None:
        return _share(self.cost_by_tier[0], sum(self.cost_by_tier))

    @property
    def nvm_cost_share(self) -> float | None:
        return _share(self.cost_by_tier[1], sum(self.cost_by_tier))

    def mean_cost(self, tier: Tier, tlb: Tlb) -> float | None:
        n, total = self.cells[tier][tlb]
        return _share(total, n)


def tier_split(samples: Sequence[MemorySample] | SampleColumns, include_stores: bool = False) -> TierSplit:
    """Table-style split of external samples and their latency across tiers.

    The denominator of the external fraction is every sample of the considered
    kind (loads only by default).
    """
    cols = SampleColumns.from_samples(samples)
    considered = np.ones(len(cols), dtype=bool) if include_stores else cols.op == 0
    ext = cols.external_mask(include_stores)
    tier = (cols.level[ext] == Level.NVM).astype(np.int64)
    tlb = cols.tlb[ext].astype(np.int64)
    lat = cols.latency[ext].astype(np.int64)
    counts = np.bincount(tier * 3 + tlb, minlength=6).reshape(2, 3)
    sums = np.zeros(6, dtype=np.int64)
    np.add.at(sums, tier * 3 + tlb, lat)
    sums = sums.reshape(2, 3)
    cells = tuple(
        tuple((int(counts[t, b]), int(sums[t, b])) for b in range(3)) for t in range(2)
    )
    return TierSplit(
        total_samples=int(np.count_nonzero(considered)),
        external_samples=int(np.count_nonzero(ext)),
        samples_by_tier=(int(counts[0].sum()), int(counts[1].sum())),
        cost_by_tier=(int(sums[0].sum()), int(sums[1].sum())),
        cells=cells,
    )


@dataclass(frozen=True)
class TouchHistogram:
    pages: tuple[int, int, int]
    accesses: tuple[int, int, int]

    BUCKETS = ("1", "2", "3+")

    @property
    def page_shares(self) -> tuple[float, float, float]:
        total = sum(self.pages)
        return tuple(p / total if total else 0.0 for p in self.pages)

    @property
    def access_shares(self) -> tuple[float, float, float]:
        total = sum(self.accesses)
        return tuple(a / total if total else 0.0 for a in self.accesses)


def _external_pages(cols: SampleColumns, page_size: int, include_stores: bool,
                    tier: Tier | None = None) -> tuple[np.ndarray, np.ndarray]:
    mask = cols.external_mask(include_stores)
    if tier is not None:
        mask &= cols.level == tier.level
    idx = np.flatnonzero(mask)
    return idx, cols.pages(page_size)[idx]


def touch_histogram(
    samples: Sequence[MemorySample] | SampleColumns,
    tier_filter: Tier | None = None,
    page_size: int = DEFAULT_PAGE_SIZE,
    include_stores: bool = False,
) -> TouchHistogram:
    """Pages (and the accesses landing on them) bucketed by touch count 1, 2, 3+."""
    cols = SampleColumns.from_samples(samples)
    _, pages = _external_pages(cols, page_size, include_stores, tier_filter)
    if not len(pages):
        return TouchHistogram((0, 0, 0), (0, 0, 0))
    _, counts = np.unique(pages, return_counts=True)
    one, two, many = counts == 1, counts == 2, counts >= 3
    return TouchHistogram(
        pages=(int(one.sum()), int(two.sum()), int(many.sum())),
        accesses=(int(counts[one].sum()), int(counts[two].sum()), int(counts[many].sum())),
    )


def nearest_rank(sorted_values: Sequence, pct: int):
    """Smallest value with at least ``pct`` percent of the data at or below it."""
    n = len(sorted_values)
    rank = max(1, -(-pct * n // 100))
    return sorted_values[rank - 1]


@dataclass(frozen=True)
class ReuseStats:
    n_pages: int
    gaps_ns: tuple[int, ...] = field(default=(), repr=False)

    @property
    def empty(self) -> bool:
        return self.n_pages == 0

    def _s(self, ns: float | None) -> float | None:
        return None if ns is None else ns / NS_PER_S

    @property
    def min(self) -> float | None:
        return self._s(self.gaps_ns[0]) if self.gaps_ns else None

    @property
    def max(self) -> float | None:
        return self._s(self.gaps_ns[-1]) if self.gaps_ns else None

    @property
    def mean(self) -> float | None:
        return self._s(sum(self.gaps_ns) / self.n_pages) if self.gaps_ns else None

    @property
    def std(self) -> float | None:
        if not self.gaps_ns:
            return None
        mu = sum(self.gaps_ns) / self.n_pages
        return self._s(math.sqrt(sum((g - mu) ** 2 for g in self.gaps_ns) / self.n_pages))

    def percentile(self, pct: int) -> float | None:
        return self._s(nearest_rank(self.gaps_ns, pct)) if self.gaps_ns else None

    @property
    def p25(self) -> float | None:
        return self.percentile(25)

    @property
    def p50(self) -> float | None:
        return self.percentile(50)

    @property
    def p75(self) -> float | None:
        return self.percentile(75)


def reuse_gaps(
    samples: Sequence[MemorySample] | SampleColumns,
    tier: Tier,
    object_ids: np.ndarray | None = None,
    object_filter: int | None = None,
    page_size: int = DEFAULT_PAGE_SIZE,
    include_stores: bool = False,
) -> list[int]:
    cols = SampleColumns.from_samples(samples)
    idx, pages = _external_pages(cols, page_size, include_stores, tier)
    if object_filter is not None:
        if object_ids is None:
            raise ValueError("object_filter needs object_ids")
        keep = object_ids[idx] == object_filter
        idx, pages = idx[keep], pages[keep]
    if not len(idx):
        return []
    order = np.argsort(pages, kind="stable")
    pages, idx = pages[order], idx[order]
    uniq, start, counts = np.unique(pages, return_index=True, return_counts=True)
    first = start[counts == 2]
    ts = cols.timestamp
    return (ts[idx[first + 1]] - ts[idx[first]]).tolist()


def reuse_stats(
    samples: Sequence[MemorySample] | SampleColumns,
    tier: Tier = Tier.NVM,
    object_ids: np.ndarray | None = None,
    object_filter: int | None = None,
    page_size: int = DEFAULT_PAGE_SIZE,
    include_stores: bool = False,
) -> ReuseStats:
    """Gap statistics over pages touched exactly twice on ``tier``."""
    gaps = sorted(reuse_gaps(samples, tier, object_ids, object_filter, page_size, include_stores))
    return ReuseStats(len(gaps), tuple(gaps))


@dataclass(frozen=True)
class PromotionStats:
    pages: int
    promoted: int
    demoted: int

    @property
    def promoted_fraction(self) -> float | None:
        return _share(self.promoted, self.pages)

    @property
    def demoted_fraction(self) -> float | None:
        return _share(self.demoted, self.pages)


def detect_promotions(
    samples: Sequence[MemorySample] | SampleColumns,
    page_size: int = DEFAULT_PAGE_SIZE,
    include_stores: bool = False,
) -> PromotionStats:
    """Among pages with exactly two external samples, count NVM->DRAM and DRAM->NVM pairs."""
    cols = SampleColumns.from_samples(samples)
    idx, pages = _external_pages(cols, page_size, include_stores)
    if not len(idx):
        return PromotionStats(0, 0, 0)
    order = np.argsort(pages, kind="stable")
    pages, idx = pages[order], idx[order]
    _, start, counts = np.unique(pages, return_index=True, return_counts=True)
    first = idx[start[counts == 2]]
    second = idx[start[counts == 2] + 1]
    later = cols.timestamp[second] > cols.timestamp[first]
    l1, l2 = cols.level[first], cols.level[second]
    promoted = later & (l1 == Level.NVM) & (l2 == Level.DRAM)
    demoted = later & (l1 == Level.DRAM) & (l2 == Level.NVM)
    return PromotionStats(len(first), int(promoted.sum()), int(demoted.sum()))


@dataclass(frozen=True)
class Timeline:
    bucket: int
    series: dict[str, list[int]]

    @property
    def n_buckets(self) -> int:
        return len(next(iter(self.series.values()), []))

    def starts(self) -> list[int]:
        return [i * self.bucket for i in range(self.n_buckets)]


def _step_peaks(changes: list[tuple[int, int]], bucket: int, n_buckets: int) -> list[int]:
    """Peak level per bucket of a step function given as (time, delta) pairs."""
    changes = sorted(changes)
    peaks = [0] * n_buckets
    level = 0
    b = 0
    i = 0
    while b < n_buckets:
        # changes exactly at the bucket start belong to the new level
        while i < len(changes) and changes[i][0] <= b * bucket:
            level += changes[i][1]
            i += 1
        peaks[b] = level
        end = (b + 1) * bucket
        while i < len(changes) and changes[i][0] < end:
            t = changes[i][0]
            while i < len(changes) and changes[i][0] == t:
                level += changes[i][1]
                i += 1
            peaks[b] = max(peaks[b], level)
        b += 1
    return peaks


def usage_timeline(
    events: Sequence[AllocationEvent],
    samples: Sequence[MemorySample] | SampleColumns | None,
    bucket: int,
    sim_report: "SimReport | None" = None,
) -> Timeline:
    """Resident bytes per time bucket (peak within the bucket).

    Without a simulation report the tiers are unknown and a single ``total``
    series of live mapped bytes is produced; with one, ``dram`` and ``nvm``
    series follow the simulator's residency log.
    """
    if bucket <= 0:
        raise ValueError("bucket must be positive")
    last = events[-1].timestamp if events else 0
    if samples is not None:
        cols = SampleColumns.from_samples(samples)
        if len(cols):
            last = max(last, int(cols.timestamp[-1]))
    n_buckets = last // bucket + 1
    if sim_report is None:
        table = build_object_table(events, trace_end=last + 1)
        changes = []
        for r in table.records:
            changes.append((r.t_start, r.length))
            if r.t_end <= last:
                changes.append((r.t_end, -r.length))
        return Timeline(bucket, {"total": _step_peaks(changes, bucket, n_buckets)})

    ps = sim_report.page_size
    per_tier: dict[int, list[tuple[int, int]]] = {0: [], 1: []}
    for ev in sim_report.migration_log:
        if ev.src >= 0:
            per_tier[ev.src].append((ev.timestamp, -ps))
        if ev.dst >= 0:
            per_tier[ev.dst].append((ev.timestamp, ps))
    return Timeline(
        bucket,
        {
            "dram": _step_peaks(per_tier[0], bucket, n_buckets),
            "nvm": _step_peaks(per_tier[1], bucket, n_buckets),
        },
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    if len(x) < 2:
        return None
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    dx, dy = xa - xa.mean(), ya - ya.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0:
        return None
    return float(dx @ dy) / denom


@dataclass(frozen=True)
class PromotionCorrelation:
    window: int
    dram_loads: list[int]
    promoted: list[int]
    r: float | None


def promotion_access_correlation(sim_report: "SimReport", window: int = NS_PER_S) -> PromotionCorrelation:
    """Windowed DRAM-load counts vs pages promoted, with their Pearson correlation."""
    if window <= 0:
        raise ValueError("window must be positive")
    times = np.asarray(sim_report.access_time, dtype=np.int64)
    tiers = np.asarray(sim_report.access_tier, dtype=np.int8)
    promo = np.array([ev.timestamp for ev in sim_report.migration_log if ev.kind == "promote"], dtype=np.int64)
    last = max(int(times.max()) if len(times) else 0, int(promo.max()) if len(promo) else 0,
               sim_report.trace_end - 1)
    n = last // window + 1
    loads = np.bincount(times[tiers == Tier.DRAM] // window, minlength=n)[:n]
    prom = np.bincount(promo // window, minlength=n)[:n]
    return PromotionCorrelation(window, loads.tolist(), prom.tolist(), pearson(loads, prom))
