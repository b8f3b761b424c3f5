"""Discrete-event simulation of AutoNUMA memory tiering over a sampled trace.

The simulator walks allocation events and samples in timestamp order
(allocation events first on ties) and applies:

* demand paging: the first touch of a page commits it to DRAM while usable
  DRAM has a free page, otherwise to NVM;
* a round-robin scanner that, every ``scan_period``, arms ``scan_batch``
  resident pages for a hint fault and stamps their scan time;
* hint faults: touching an armed NVM page promotes it outright while DRAM is
  below the high watermark, otherwise only if its hint-fault latency is under
  the hotness threshold and the rate-limit token bucket holds a page;
* threshold adaptation once per ``threshold_adjust_window`` from the bytes of
  candidate pages seen against the rate limit;
* kswapd, checked on scan ticks, demoting the least recently touched DRAM
  pages from above the high watermark down to the low watermark, and direct
  demotion when a promotion finds DRAM completely full.

Only sampled touches are visible, so hint faults fire on sampled accesses
only.  A disabled run keeps demand paging and nothing else.
"""

from __future__ import annotations

import bisect
import csv
import heapq
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CapacityError, InvariantViolation, TraceValidationError
from .ingest import RunConfig
from .mapping import attribute_all, build_object_table
from .trace_model import (
    UNMAPPED,
    AllocationEvent,
    AllocKind,
    Level,
    MemorySample,
    Op,
    SampleColumns,
    Tier,
)

NS_PER_S = 1_000_000_000
DRAM, NVM = int(Tier.DRAM), int(Tier.NVM)

# Levels the simulator treats as a memory access whose tier it decides itself.
# UNKNOWN is the synthetic placeholder for "external, tier left to the simulator".
MEMORY_LEVELS = (Level.DRAM, Level.NVM, Level.UNKNOWN)


def memory_access_mask(cols: SampleColumns, include_stores: bool = False) -> np.ndarray:
    lv = cols.level
    mask = (lv == Level.DRAM) | (lv == Level.NVM) | (lv == Level.UNKNOWN)
    if not include_stores:
        mask &= cols.op == Op.LOAD
    return mask


class PageState:
    __slots__ = ("page", "tier", "owner", "scan_time", "armed", "last_access", "resident_since", "promoted")

    def __init__(self, page: int, tier: int, owner: int, t: int):
        self.page = page
        self.tier = tier
        self.owner = owner
        self.scan_time: int | None = None
        self.armed = False
        self.last_access = t
        self.resident_since = t
        self.promoted = False


@dataclass
class TieringCounters:
    pgpromote_success: int = 0
    pgpromote_demoted: int = 0
    pgdemote_kswapd: int = 0
    pgdemote_direct: int = 0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.pgpromote_success, self.pgpromote_demoted, self.pgdemote_kswapd, self.pgdemote_direct)

    NAMES = ("pgpromote_success", "pgpromote_demoted", "pgdemote_kswapd", "pgdemote_direct")


class MigrationEvent(NamedTuple):
    """One residency change.  ``seq`` is the index of the first sample that sees it."""

    seq: int
    timestamp: int
    page: int
    kind: str  # commit | promote | demote_kswapd | demote_direct | free
    src: int  # tier code, -1 for none
    dst: int
    reason: str = ""


class WindowRecord(NamedTuple):
    start: int
    threshold: int
    candidate_bytes: int
    promoted_bytes: int


@dataclass
class SimReport:
    enabled: bool
    page_size: int
    trace_end: int
    counters: TieringCounters
    access_cycles: float
    migration_cycles: float
    access_index: np.ndarray
    access_time: np.ndarray
    access_tier: np.ndarray
    migration_log: list[MigrationEvent]
    final_residency: dict[int, int]
    windows: list[WindowRecord] = field(default_factory=list)
    counter_history: list[tuple[int, tuple[int, int, int, int]]] = field(default_factory=list)
    peak_dram_pages: int = 0
    peak_nvm_pages: int = 0
    final_threshold: int = 0

    @property
    def estimated_cycles(self) -> float:
        return self.access_cycles + self.migration_cycles

    @property
    def external_by_tier(self) -> tuple[int, int]:
        nvm = int(np.count_nonzero(self.access_tier == NVM))
        return len(self.access_tier) - nvm, nvm

    @property
    def promotions(self) -> int:
        return self.counters.pgpromote_success

    @property
    def demotions(self) -> int:
        return self.counters.pgdemote_kswapd + self.counters.pgdemote_direct


def merged_stream(allocs: Sequence[AllocationEvent], samples: Sequence[MemorySample]):
    """Yield ``(is_alloc, index)`` in time order, allocation events first on ties."""
    i = j = 0
    last = None
    while i < len(allocs) or j < len(samples):
        take_alloc = j >= len(samples) or (i < len(allocs) and allocs[i].timestamp <= samples[j].timestamp)
        t = allocs[i].timestamp if take_alloc else samples[j].timestamp
        if last is not None and t < last:
            raise TraceValidationError(
                f"event stream not sorted: {'allocation' if take_alloc else 'sample'} "
                f"#{i if take_alloc else j} at {t} after {last}"
            )
        last = t
        if take_alloc:
            yield True, i
            i += 1
        else:
            yield False, j
            j += 1


class _Simulator:
    def __init__(self, config: RunConfig, enabled: bool):
        self.cfg = config
        self.enabled = enabled
        self.ps = config.page_size
        self.shift = self.ps.bit_length() - 1
        self.dram_cap = config.usable_dram // self.ps
        self.nvm_cap = config.nvm_capacity // self.ps
        self.high_wm = int(config.watermark_high * self.dram_cap)
        self.low_wm = int(config.watermark_low * self.dram_cap)
        self.pages: dict[int, PageState] = {}
        self.resident: list[int] = []
        self.used = [0, 0]
        self.peak = [0, 0]
        self.counters = TieringCounters()
        self.log: list[MigrationEvent] = []
        self.threshold = config.threshold_init
        self.candidate_bytes = 0
        self.window_promoted = 0
        self.windows: list[WindowRecord] = []
        self.counter_history: list[tuple[int, tuple[int, int, int, int]]] = []
        self.scan_cursor = -1
        self.token_cap = self.ps * NS_PER_S
        self.tokens = self.token_cap
        self.token_time = 0
        self.migrations = 0

    # -- residency bookkeeping -------------------------------------------
    def _check(self) -> None:
        if self.used[DRAM] > self.dram_cap or self.used[NVM] > self.nvm_cap:
            raise InvariantViolation(
                f"residency over capacity: dram {self.used[DRAM]}/{self.dram_cap} "
                f"nvm {self.used[NVM]}/{self.nvm_cap} pages"
            )
        self.peak[DRAM] = max(self.peak[DRAM], self.used[DRAM])
        self.peak[NVM] = max(self.peak[NVM], self.used[NVM])

    def commit(self, seq: int, t: int, page: int, owner: int) -> PageState:
        if self.used[DRAM] < self.dram_cap:
            tier = DRAM
        elif self.used[NVM] < self.nvm_cap:
            tier = NVM
        else:
            raise CapacityError(
                f"page 0x{page:x} touched at {t} but DRAM and NVM are both full; "
                "the trace's touched footprint exceeds the configured capacities"
            )
        st = PageState(page, tier, owner, t)
        self.pages[page] = st
        bisect.insort(self.resident, page)
        self.used[tier] += 1
        self.log.append(MigrationEvent(seq, t, page, "commit", -1, tier))
        self._check()
        return st

    def free_range(self, seq: int, t: int, start: int, stop: int) -> None:
        lo = bisect.bisect_left(self.resident, start >> self.shift)
        hi = bisect.bisect_left(self.resident, -(-stop >> self.shift))
        for page in self.resident[lo:hi]:
            st = self.pages.pop(page)
            self.used[st.tier] -= 1
            self.log.append(MigrationEvent(seq, t, page, "free", st.tier, -1))
        del self.resident[lo:hi]

    def _move(self, st: PageState, dst: int) -> None:
        self.used[st.tier] -= 1
        self.used[dst] += 1
        st.tier = dst
        self.migrations += 1

    def demote(self, seq: int, t: int, st: PageState, kind: str) -> None:
        self._move(st, NVM)
        if kind == "demote_kswapd":
            self.counters.pgdemote_kswapd += 1
        else:
            self.counters.pgdemote_direct += 1
        if st.promoted:
            self.counters.pgpromote_demoted += 1
            st.promoted = False
        self.log.append(MigrationEvent(seq, t, st.page, kind, DRAM, NVM))

    def promote(self, seq: int, t: int, st: PageState, reason: str) -> None:
        self._move(st, DRAM)
        st.promoted = True
        self.counters.pgpromote_success += 1
        self.window_promoted += self.ps
        self.log.append(MigrationEvent(seq, t, st.page, "promote", NVM, DRAM, reason))

    def coldest_dram(self, k: int) -> list[PageState]:
        return heapq.nsmallest(
            k,
            (st for st in self.pages.values() if st.tier == DRAM),
            key=lambda st: (st.last_access, st.page),
        )

    # -- periodic work ---------------------------------------------------
    def kswapd(self, seq: int, t: int) -> None:
        if self.used[DRAM] <= self.high_wm:
            return
        want = self.used[DRAM] - self.low_wm
        room = self.nvm_cap - self.used[NVM]
        for st in self.coldest_dram(min(want, room)):
            self.demote(seq, t, st, "demote_kswapd")
        self._check()

    def scan(self, t: int) -> None:
        n = len(self.resident)
        if not n:
            return
        start = bisect.bisect_right(self.resident, self.scan_cursor)
        k = min(self.cfg.scan_batch, n)
        for j in range(k):
            page = self.resident[(start + j) % n]
            st = self.pages[page]
            if not st.armed:
                st.armed = True
                st.scan_time = t
        self.scan_cursor = self.resident[(start + k - 1) % n]

    def tick(self, seq: int, t: int) -> None:
        self.kswapd(seq, t)
        self.scan(t)
        self.counter_history.append((t, self.counters.as_tuple()))

    def end_window(self, start: int) -> None:
        cfg = self.cfg
        budget = cfg.promote_rate_limit * cfg.threshold_adjust_window // NS_PER_S
        cand = self.candidate_bytes
        self.windows.append(WindowRecord(start, self.threshold, cand, self.window_promoted))
        if cand * 10 > budget * 11:
            self.threshold = max(self.threshold * 4 // 5, cfg.threshold_min)
        elif cand * 10 < budget * 9:
            self.threshold = min(self.threshold * 5 // 4, cfg.threshold_max)
        self.candidate_bytes = 0
        self.window_promoted = 0

    def refill(self, t: int) -> None:
        if t > self.token_time:
            self.tokens = min(self.token_cap, self.tokens + self.cfg.promote_rate_limit * (t - self.token_time))
            self.token_time = t

    # -- hint faults -----------------------------------------------------
    def hint_fault(self, seq: int, t: int, st: PageState) -> None:
        latency = t - st.scan_time
        st.armed = False
        if st.tier != NVM:
            return
        if self.used[DRAM] + 1 <= self.high_wm:
            self.promote(seq + 1, t, st, "free")
            self._check()
            return
        if latency >= self.threshold:
            return
        self.candidate_bytes += self.ps
        self.refill(t)
        if self.tokens < self.token_cap:
            return
        if self.used[DRAM] >= self.dram_cap:
            victims = self.coldest_dram(1)
            if not victims:
                return
            # the victim takes the NVM frame the promoted page is vacating
            self.demote(seq + 1, t, victims[0], "demote_direct")
        self.tokens -= self.token_cap
        self.promote(seq + 1, t, st, "threshold")
        self._check()


def simulate(
    allocs: Sequence[AllocationEvent],
    samples: Sequence[MemorySample],
    config: RunConfig,
    enabled: bool = True,
    include_stores: bool = False,
) -> SimReport:
    """Run the tiering simulation over one trace.

    Every sample touches its page (first touch, hint fault, recency); only
    loads at a memory level are priced and logged as accesses.
    """
    sim = _Simulator(config, enabled)
    n = len(samples)
    heads = [seq_[0].timestamp for seq_ in (allocs, samples) if seq_]
    first_ts = min(heads) if heads else 0
    last_ts = max(allocs[-1].timestamp if allocs else 0, samples[-1].timestamp if samples else 0)
    trace_end = last_ts + 1

    cols = SampleColumns.from_samples(samples)
    owners = attribute_all(cols, build_object_table(allocs, trace_end=trace_end)) if n else np.zeros(0, np.int64)
    is_access = memory_access_mask(cols, include_stores)
    cost_tab = config.cost_model.table()

    acc_idx: list[int] = []
    acc_tier: list[int] = []
    access_cycles = 0.0

    period = config.scan_period
    window = config.threshold_adjust_window
    next_tick = first_ts + period
    window_start = first_ts
    sim.token_time = first_ts
    shift = sim.shift
    pages = sim.pages
    owners_l = owners.tolist()
    is_access_l = is_access.tolist()
    tlb_l = cols.tlb.tolist()

    for is_alloc, k in merged_stream(allocs, samples):
        ev = allocs[k] if is_alloc else samples[k]
        t = ev.timestamp
        # an allocation event is first seen by the next sample in the merge
        seq = _first_sample_at(samples, t) if is_alloc else k
        if enabled:
            while True:
                w_end = window_start + window
                if w_end <= t and w_end <= next_tick:
                    sim.end_window(window_start)
                    window_start = w_end
                elif next_tick <= t:
                    sim.tick(seq, next_tick)
                    next_tick += period
                else:
                    break
        if is_alloc:
            if ev.kind == AllocKind.MUNMAP:
                sim.free_range(seq, t, ev.base, ev.base + ev.length)
            continue

        page = ev.addr >> shift
        st = pages.get(page)
        if st is None:
            st = sim.commit(k, t, page, owners_l[k] if owners_l[k] >= 0 else UNMAPPED)
            served = st.tier
        else:
            served = st.tier
            if st.armed:
                sim.hint_fault(k, t, st)
        st.last_access = t
        if is_access_l[k]:
            acc_idx.append(k)
            acc_tier.append(served)
            access_cycles += cost_tab[served, tlb_l[k]]

    if enabled:
        sim.end_window(window_start)
        sim.counter_history.append((last_ts, sim.counters.as_tuple()))

    idx = np.array(acc_idx, dtype=np.int64)
    return SimReport(
        enabled=enabled,
        page_size=sim.ps,
        trace_end=trace_end,
        counters=sim.counters,
        access_cycles=float(access_cycles),
        migration_cycles=float(config.cost_model.migrate_page_cost * sim.migrations),
        access_index=idx,
        access_time=cols.timestamp[idx] if n else np.zeros(0, np.int64),
        access_tier=np.array(acc_tier, dtype=np.int8),
        migration_log=sim.log,
        final_residency={p: st.tier for p, st in sorted(pages.items())},
        windows=sim.windows,
        counter_history=sim.counter_history,
        peak_dram_pages=sim.peak[DRAM],
        peak_nvm_pages=sim.peak[NVM],
        final_threshold=sim.threshold,
    )


def _first_sample_at(samples: Sequence[MemorySample], t: int) -> int:
    lo, hi = 0, len(samples)
    while lo < hi:
        mid = (lo + hi) // 2
        if samples[mid].timestamp < t:
            lo = mid + 1
        else:
            hi = mid
    return lo


def replay_residency(report: SimReport, samples: Sequence[MemorySample] | SampleColumns) -> np.ndarray:
    """Tier code of each sample's page at the moment of the sample (-1 if not resident)."""
    cols = SampleColumns.from_samples(samples)
    n = len(cols)
    out = np.full(n, -1, dtype=np.int8)
    if not n or not report.migration_log:
        return out
    log_page = np.array([e.page for e in report.migration_log], dtype=np.int64)
    log_seq = np.array([e.seq for e in report.migration_log], dtype=np.int64)
    log_tier = np.array([e.dst for e in report.migration_log], dtype=np.int8)
    s_page = cols.pages(report.page_size)
    uniq, inv = np.unique(np.concatenate([log_page, s_page]), return_inverse=True)
    dense_log, dense_s = inv[: len(log_page)], inv[len(log_page):]
    stride = max(n, int(log_seq.max()) if len(log_seq) else 0) + 2
    log_key = dense_log * stride + log_seq
    order = np.argsort(log_key, kind="stable")
    log_key, dense_log, log_tier = log_key[order], dense_log[order], log_tier[order]
    s_key = dense_s * stride + np.arange(n)
    pos = np.searchsorted(log_key, s_key, side="right") - 1
    ok = pos >= 0
    posc = np.where(ok, pos, 0)
    ok &= dense_log[posc] == dense_s
    out[ok] = log_tier[posc[ok]]
    return out


def relabel_samples(
    report: SimReport,
    samples: Sequence[MemorySample],
    config: RunConfig,
    include_stores: bool = False,
) -> list[MemorySample]:
    """Samples with memory-level loads re-labelled to the simulated tier.

    Re-labelled latencies come from the cost model, since the traced latency
    belongs to the traced tier.
    """
    cols = SampleColumns.from_samples(samples)
    tiers = replay_residency(report, cols)
    mask = memory_access_mask(cols, include_stores)
    cm = config.cost_model
    out = list(samples)
    for i in np.flatnonzero(mask & (tiers >= 0)).tolist():
        s = out[i]
        tier = Tier(int(tiers[i]))
        out[i] = s._replace(level=tier.level, latency=max(1, round(cm.cycles(tier, s.tlb))))
    return out


# --------------------------------------------------------------------------
# Output directory round trip

TIER_NAMES = {-1: "", DRAM: "DRAM", NVM: "NVM"}
_TIER_CODES = {v: k for k, v in TIER_NAMES.items()}


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path: Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def summary_rows(report: SimReport) -> list[tuple[str, object]]:
    dram, nvm = report.external_by_tier
    return [
        ("enabled", int(report.enabled)),
        ("page_size", report.page_size),
        ("trace_end", report.trace_end),
        ("external_dram", dram),
        ("external_nvm", nvm),
        ("access_cycles", f"{report.access_cycles:.1f}"),
        ("migration_cycles", f"{report.migration_cycles:.1f}"),
        ("estimated_cycles", f"{report.estimated_cycles:.1f}"),
        *zip(TieringCounters.NAMES, report.counters.as_tuple()),
        ("peak_dram_pages", report.peak_dram_pages),
        ("peak_nvm_pages", report.peak_nvm_pages),
        ("final_threshold_ns", report.final_threshold),
    ]


def write_sim_dir(report: SimReport, out_dir: str | Path) -> list[str]:
    """Write the report as CSV files; returns the file names written."""
    out = Path(out_dir)
    _write_rows(out / "sim_report.csv", ("metric", "value"), summary_rows(report))
    _write_rows(
        out / "counters.csv",
        ("timestamp_ns", *TieringCounters.NAMES),
        ((t, *c) for t, c in report.counter_history),
    )
    _write_rows(
        out / "migration_log.csv",
        ("seq", "timestamp_ns", "page", "kind", "src", "dst", "reason"),
        ((e.seq, e.timestamp, e.page, e.kind, TIER_NAMES[e.src], TIER_NAMES[e.dst], e.reason)
         for e in report.migration_log),
    )
    _write_rows(
        out / "threshold_log.csv",
        ("window_start_ns", "threshold_ns", "candidate_bytes", "promoted_bytes"),
        report.windows,
    )
    _write_rows(
        out / "access_log.csv",
        ("sample_index", "timestamp_ns", "tier"),
        zip(report.access_index.tolist(), report.access_time.tolist(),
            (TIER_NAMES[int(x)] for x in report.access_tier)),
    )
    _write_rows(
        out / "residency.csv",
        ("page", "tier"),
        ((p, TIER_NAMES[t]) for p, t in report.final_residency.items()),
    )
    return ["sim_report.csv", "counters.csv", "migration_log.csv", "threshold_log.csv",
            "access_log.csv", "residency.csv"]


def load_sim_dir(sim_dir: str | Path) -> SimReport:
    d = Path(sim_dir)
    try:
        meta = {r["metric"]: r["value"] for r in _read_rows(d / "sim_report.csv")}
        log = [
            MigrationEvent(int(r["seq"]), int(r["timestamp_ns"]), int(r["page"]), r["kind"],
                           _TIER_CODES[r["src"]], _TIER_CODES[r["dst"]], r["reason"])
            for r in _read_rows(d / "migration_log.csv")
        ]
        acc = _read_rows(d / "access_log.csv")
        windows = [WindowRecord(*(int(v) for v in r.values())) for r in _read_rows(d / "threshold_log.csv")]
        history = [
            (int(r["timestamp_ns"]), tuple(int(r[k]) for k in TieringCounters.NAMES))
            for r in _read_rows(d / "counters.csv")
        ]
        residency = {int(r["page"]): _TIER_CODES[r["tier"]] for r in _read_rows(d / "residency.csv")}
    except (OSError, KeyError, ValueError) as exc:
        raise TraceValidationError(f"{d}: unreadable simulation output ({exc})") from None
    return SimReport(
        enabled=meta["enabled"] == "1",
        page_size=int(meta["page_size"]),
        trace_end=int(meta["trace_end"]),
        counters=TieringCounters(*(int(meta[k]) for k in TieringCounters.NAMES)),
        access_cycles=float(meta["access_cycles"]),
        migration_cycles=float(meta["migration_cycles"]),
        access_index=np.array([int(r["sample_index"]) for r in acc], dtype=np.int64),
        access_time=np.array([int(r["timestamp_ns"]) for r in acc], dtype=np.int64),
        access_tier=np.array([_TIER_CODES[r["tier"]] for r in acc], dtype=np.int8),
        migration_log=log,
        final_residency=residency,
        windows=windows,
        counter_history=history,
        peak_dram_pages=int(meta["peak_dram_pages"]),
        peak_nvm_pages=int(meta["peak_nvm_pages"]),
        final_threshold=int(meta["final_threshold_ns"]),
    )
