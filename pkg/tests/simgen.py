"""Random small traces and a tight config for simulator property tests."""

from __future__ import annotations

import numpy as np
import oracles

from tierlab.autonuma_sim import DRAM, NVM, SimReport, replay_residency, simulate
from tierlab.ingest import CostModel, RunConfig
from tierlab.trace_model import AllocationEvent, AllocKind, Level, MemorySample, Op, Tlb

PS = 4096
MS = 1_000_000


def tight_config(dram_pages: int = 12, nvm_pages: int = 200, rate_pages_per_s: int = 200) -> RunConfig:
    reserved = 5 * PS
    return RunConfig(
        page_size=PS,
        dram_capacity=reserved + dram_pages * PS,
        nvm_capacity=nvm_pages * PS,
        reserved_dram=reserved,
        scan_period=10 * MS,
        scan_batch=8,
        promote_rate_limit=rate_pages_per_s * PS,
        threshold_init=20 * MS,
        threshold_min=5 * MS,
        threshold_max=40 * MS,
        threshold_adjust_window=10 * MS,
        cost_model=CostModel(),
    )


def random_trace(seed: int, n_samples: int = 600, max_pages: int = 150):
    """Objects with partial unmaps and reuse; touched pages stay within ``max_pages``."""
    rng = np.random.default_rng(seed)
    allocs = []
    live = []
    t = 0
    cursor = 0
    for i in range(int(rng.integers(2, 7))):
        t += int(rng.integers(0, 50 * MS))
        n = int(rng.integers(4, 40))
        if cursor + n > max_pages:
            break
        allocs.append(AllocationEvent(t, AllocKind.MMAP, cursor * PS, n * PS, f"o{i}"))
        live.append((cursor, n))
        cursor += n
    if len(live) > 1 and rng.random() < 0.5:
        b, n = live[0]
        allocs.append(AllocationEvent(t + 1, AllocKind.MUNMAP, b * PS, max(1, n // 2) * PS, "x"))
    span = t + 600 * MS
    ts = np.sort(rng.integers(0, span, n_samples))
    hot = int(rng.integers(1, max(2, cursor)))
    samples = []
    for k, ts_k in enumerate(ts):
        if rng.random() < 0.5:
            page = int(rng.integers(0, hot))
        else:
            page = int(rng.integers(0, max(cursor, 1) + 4))
        level = Level(int(rng.choice([Level.L1, Level.LFB, Level.DRAM, Level.NVM, Level.UNKNOWN])))
        op = Op.STORE if rng.random() < 0.1 else Op.LOAD
        samples.append(MemorySample(int(ts_k), 0, page * PS + 64, op, level, 100, Tlb(int(rng.integers(0, 3)))))
    return allocs, samples


def check_invariants(allocs, samples, cfg) -> SimReport:
    """Simulate and assert every residency, counter, threshold and rate-limit invariant."""
    rep = simulate(allocs, samples, cfg)
    dram_cap = cfg.usable_dram // PS
    nvm_cap = cfg.nvm_capacity // PS
    tier = {}
    used = [0, 0]
    for e in rep.migration_log:
        if e.kind == "promote":
            assert tier[e.page] == NVM and e.src == NVM
        if e.kind.startswith("demote"):
            assert tier[e.page] == DRAM and e.src == DRAM
        if e.kind == "commit":
            assert e.page not in tier
        if e.src >= 0:
            used[e.src] -= 1
        if e.dst >= 0:
            used[e.dst] += 1
            tier[e.page] = e.dst
        else:
            del tier[e.page]
        assert used[DRAM] <= dram_cap and used[NVM] <= nvm_cap
    assert rep.peak_dram_pages <= dram_cap and rep.peak_nvm_pages <= nvm_cap
    hist = [c for _, c in rep.counter_history]
    for a, b in zip(hist, hist[1:]):
        assert all(x <= y for x, y in zip(a, b))
    c = rep.counters
    assert c.pgpromote_demoted <= c.pgpromote_success
    for w in rep.windows:
        assert cfg.threshold_min <= w.threshold <= cfg.threshold_max
    assert cfg.threshold_min <= rep.final_threshold <= cfg.threshold_max
    # token-bucket ceiling over every span between threshold-gated promotions
    gated = [e.timestamp for e in rep.migration_log if e.kind == "promote" and e.reason == "threshold"]
    for i in range(len(gated)):
        for j in range(i, len(gated)):
            moved = (j - i + 1) * PS
            assert moved * 10**9 <= cfg.promote_rate_limit * (gated[j] - gated[i]) + PS * 10**9
    # replay agrees with a sequential walk of the log
    sample_pages = [s.addr // PS for s in samples]
    assert replay_residency(rep, samples).tolist() == oracles.walk_log(rep.migration_log, len(samples), sample_pages)
    assert replay_residency(rep, samples)[rep.access_index].tolist() == rep.access_tier.tolist()
    return rep
