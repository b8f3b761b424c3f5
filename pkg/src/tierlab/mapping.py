"""Object table construction and sample-to-object attribution.

An object is the address range created by one ``mmap``.  A partial ``munmap``
closes the object and re-opens each surviving piece as a new object carrying
the same call stack, so every record has a single range and a single
half-open lifetime.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TraceValidationError
from .ingest import CostModel
from .trace_model import (
    UNMAPPED,
    AllocationEvent,
    AllocKind,
    Level,
    MemorySample,
    ObjectRecord,
    SampleColumns,
    Tier,
    Tlb,
)

log = logging.getLogger(__name__)

OPEN_END = 2**63 - 1


@dataclass(frozen=True)
class _Epoch:
    bases: np.ndarray
    ends: np.ndarray
    ids: np.ndarray


@dataclass
class ObjectTable:
    """Records plus a per-epoch index of the live set.

    An epoch starts at each distinct allocation-event timestamp and holds the
    live ranges sorted by base, so a lookup is two binary searches.
    """

    records: list[ObjectRecord]
    epoch_times: np.ndarray
    epochs: list[_Epoch]
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def lookup(self, addr: int, t: int) -> int:
        e = int(np.searchsorted(self.epoch_times, t, side="right")) - 1
        if e < 0:
            return UNMAPPED
        ep = self.epochs[e]
        i = int(np.searchsorted(ep.bases, np.uint64(addr), side="right")) - 1
        if i >= 0 and addr < int(ep.ends[i]):
            return int(ep.ids[i])
        return UNMAPPED

    def live_at(self, t: int) -> list[ObjectRecord]:
        e = int(np.searchsorted(self.epoch_times, t, side="right")) - 1
        if e < 0:
            return []
        return [self.records[i] for i in self.epochs[e].ids.tolist()]


def build_object_table(events: Sequence[AllocationEvent], trace_end: int | None = None) -> ObjectTable:
    """Replay canonical, time-sorted allocation events into object records.

    ``trace_end`` closes objects that are never unmapped; by default they stay
    open indefinitely.
    """
    end_time = OPEN_END if trace_end is None else trace_end
    if events and end_time < events[-1].timestamp:
        raise TraceValidationError(
            f"trace end {end_time} precedes last allocation event at {events[-1].timestamp}"
        )

    # open records: id -> [base, length, t_start, callstack, origin]
    opened: dict[int, list] = {}
    closed: dict[int, ObjectRecord] = {}
    live_bases: list[int] = []
    live_ids: list[int] = []
    next_id = 0
    epoch_times: list[int] = []
    epochs: list[_Epoch] = []
    warnings: list[str] = []
    last_ts = None

    def open_record(base: int, length: int, t: int, callstack: str, origin: str) -> None:
        nonlocal next_id
        oid = next_id
        next_id += 1
        opened[oid] = [base, length, t, callstack, origin]
        i = bisect.bisect_left(live_bases, base)
        live_bases.insert(i, base)
        live_ids.insert(i, oid)

    def close_record(pos: int, t: int) -> int:
        oid = live_ids.pop(pos)
        live_bases.pop(pos)
        base, length, t0, cs, _ = opened.pop(oid)
        closed[oid] = ObjectRecord(oid, base, length, t0, t, cs)
        return oid

    def snapshot(t: int) -> None:
        ends = [opened[i][0] + opened[i][1] for i in live_ids]
        ep = _Epoch(
            np.array(live_bases, dtype=np.uint64),
            np.array(ends, dtype=np.uint64),
            np.array(live_ids, dtype=np.int64),
        )
        if epoch_times and epoch_times[-1] == t:
            epochs[-1] = ep
        else:
            epoch_times.append(t)
            epochs.append(ep)

    for idx, ev in enumerate(events):
        if last_ts is not None and ev.timestamp < last_ts:
            raise TraceValidationError(f"allocation event {idx} is out of time order")
        if last_ts is not None and ev.timestamp != last_ts:
            snapshot(last_ts)
        last_ts = ev.timestamp
        start, stop = ev.base, ev.base + ev.length
        origin = f"event #{idx} ({AllocKind(ev.kind).name} t={ev.timestamp} base=0x{ev.base:x} len={ev.length})"
        if ev.kind == AllocKind.MMAP:
            i = bisect.bisect_left(live_bases, start)
            for j in (i - 1, i):
                if 0 <= j < len(live_ids):
                    b, ln, _, _, other = opened[live_ids[j]]
                    if b < stop and start < b + ln:
                        raise TraceValidationError(
                            f"overlapping live mappings: {other} and {origin}"
                        )
            open_record(start, ev.length, ev.timestamp, ev.callstack_id, origin)
            continue

        # MUNMAP: cut every live object intersecting [start, stop)
        j = max(bisect.bisect_right(live_bases, start) - 1, 0)
        hits = []
        while j < len(live_ids) and live_bases[j] < stop:
            b, ln = opened[live_ids[j]][:2]
            if b + ln > start:
                hits.append(live_ids[j])
            j += 1
        if not hits:
            msg = f"{origin}: no live mapping in range"
            warnings.append(msg)
            log.warning("unmatched munmap: %s", msg)
            continue
        residuals = []
        for oid in hits:
            b, ln, _, cs, _ = opened[oid]
            close_record(live_ids.index(oid), ev.timestamp)
            if b < start:
                residuals.append((b, start - b, cs))
            if b + ln > stop:
                residuals.append((stop, b + ln - stop, cs))
        for b, ln, cs in residuals:
            open_record(b, ln, ev.timestamp, cs, f"residual of {origin}")

    if last_ts is not None:
        snapshot(last_ts)
    for oid in list(opened):
        base, length, t0, cs, _ = opened.pop(oid)
        closed[oid] = ObjectRecord(oid, base, length, t0, max(end_time, t0), cs)

    records = [closed[i] for i in range(next_id)]
    return ObjectTable(records, np.array(epoch_times, dtype=np.int64), epochs, warnings)


def attribute(sample: MemorySample, table: ObjectTable) -> int:
    """Object id live at the sample's address and time, or ``UNMAPPED``."""
    return table.lookup(sample.addr, sample.timestamp)


def attribute_all(samples: Sequence[MemorySample] | SampleColumns, table: ObjectTable) -> np.ndarray:
    """Vectorised :func:`attribute` over a whole trace."""
    cols = SampleColumns.from_samples(samples)
    out = np.full(len(cols), UNMAPPED, dtype=np.int64)
    if not len(cols) or not len(table.epoch_times):
        return out
    ep_idx = np.searchsorted(table.epoch_times, cols.timestamp, side="right") - 1
    order = np.argsort(ep_idx, kind="stable")
    sorted_ep = ep_idx[order]
    bounds = np.flatnonzero(np.diff(sorted_ep)) + 1
    for chunk in np.split(order, bounds):
        e = int(ep_idx[chunk[0]])
        if e < 0:
            continue
        ep = table.epochs[e]
        if not len(ep.bases):
            continue
        addrs = cols.addr[chunk]
        i = np.searchsorted(ep.bases, addrs, side="right") - 1
        ok = i >= 0
        ii = np.where(ok, i, 0)
        ok &= addrs < ep.ends[ii]
        out[chunk[ok]] = ep.ids[ii[ok]]
    return out


@dataclass(frozen=True)
class ObjectProfile:
    object_id: int
    size: int
    callstack_id: str
    samples_total: int
    samples_by_tier: tuple[int, int]
    cost_cycles_by_tier: tuple[int, int]
    tlb_by_tier: tuple[tuple[int, int, int], tuple[int, int, int]]
    samples_all: int
    first_access: int
    last_access: int
    model_cost_by_tier: tuple[float, float] | None = None

    @property
    def density(self) -> float:
        """External samples per byte."""
        return self.samples_total / self.size

    @property
    def density_all(self) -> float:
        return self.samples_all / self.size

    def cost_if(self, tier: Tier, cost_model: CostModel) -> float:
        """Model cycles if every external sample of this object hit ``tier``."""
        return sum(
            (self.tlb_by_tier[0][b] + self.tlb_by_tier[1][b]) * cost_model.cycles(tier, Tlb(b))
            for b in range(3)
        )


def profile_objects(
    samples: Sequence[MemorySample] | SampleColumns,
    table: ObjectTable,
    cost_model: CostModel | None = None,
    object_ids: np.ndarray | None = None,
    include_stores: bool = False,
) -> list[ObjectProfile]:
    """Per-object external-access profile, for objects with at least one external sample.

    Costs are the observed sample latencies; ``cost_model``, when given, adds
    a model-priced cost next to them.
    """
    cols = SampleColumns.from_samples(samples)
    ids = attribute_all(cols, table) if object_ids is None else object_ids
    n = len(table.records)
    mapped = ids >= 0
    ext = cols.external_mask(include_stores) & mapped
    all_counts = np.bincount(ids[mapped], minlength=n)

    e_ids = ids[ext]
    e_tier = (cols.level[ext] == Level.NVM).astype(np.int64)
    e_tlb = cols.tlb[ext].astype(np.int64)
    e_lat = cols.latency[ext]
    e_ts = cols.timestamp[ext]

    cell = np.bincount(e_ids * 6 + e_tier * 3 + e_tlb, minlength=n * 6).reshape(n, 2, 3)
    cost = np.bincount(e_ids * 2 + e_tier, weights=e_lat.astype(np.float64), minlength=n * 2).reshape(n, 2)
    first = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    last = np.full(n, -1, dtype=np.int64)
    np.minimum.at(first, e_ids, e_ts)
    np.maximum.at(last, e_ids, e_ts)
    model = None
    if cost_model is not None:
        tab = cost_model.table()
        model = np.bincount(
            e_ids * 2 + e_tier, weights=tab[e_tier, e_tlb], minlength=n * 2
        ).reshape(n, 2)

    out = []
    for rec in table.records:
        oid = rec.object_id
        c = cell[oid]
        total = int(c.sum())
        if total == 0:
            continue
        out.append(
            ObjectProfile(
                object_id=oid,
                size=rec.length,
                callstack_id=rec.callstack_id,
                samples_total=total,
                samples_by_tier=(int(c[0].sum()), int(c[1].sum())),
                cost_cycles_by_tier=(int(cost[oid, 0]), int(cost[oid, 1])),
                tlb_by_tier=(tuple(int(x) for x in c[0]), tuple(int(x) for x in c[1])),
                samples_all=int(all_counts[oid]),
                first_access=int(first[oid]),
                last_access=int(last[oid]),
                model_cost_by_tier=None if model is None else (float(model[oid, 0]), float(model[oid, 1])),
            )
        )
    return out


def unmapped_external(samples: Sequence[MemorySample] | SampleColumns, object_ids: np.ndarray,
                      include_stores: bool = False) -> tuple[int, int]:
    """(DRAM, NVM) external sample counts that no object claims."""
    cols = SampleColumns.from_samples(samples)
    m = cols.external_mask(include_stores) & (object_ids < 0)
    nvm = int(np.count_nonzero(cols.level[m] == Level.NVM))
    return int(np.count_nonzero(m)) - nvm, nvm

