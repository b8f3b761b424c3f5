"""Slow, obviously-correct reference implementations used only by tests."""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict

DRAM_LEVEL, NVM_LEVEL = "DRAM", "NVM"


def linear_attribute(records, addr, t):
    """O(n) scan over object records (object_id, base, length, t_start, t_end)."""
    hits = [r[0] for r in records if r[1] <= addr < r[1] + r[2] and r[3] <= t < r[4]]
    assert len(hits) <= 1, hits
    return hits[0] if hits else -1


def page_timeline(events, page_size, times):
    """Replay events into a page -> (callstack, mapping generation) map, queried at ``times``.

    Returns {t: {page: callstack}} reflecting all events with timestamp <= t.
    """
    out = {}
    state = {}
    evs = list(events)
    i = 0
    for t in sorted(times):
        while i < len(evs) and evs[i].timestamp <= t:
            e = evs[i]
            pages = range(e.base // page_size, (e.base + e.length) // page_size)
            if int(e.kind) == 0:
                for p in pages:
                    state[p] = e.callstack_id
            else:
                for p in pages:
                    state.pop(p, None)
            i += 1
        out[t] = dict(state)
    return out


def csv_tier_split(text):
    """awk-style aggregation over raw samples.csv text (loads only)."""
    total = ext = 0
    n = {DRAM_LEVEL: 0, NVM_LEVEL: 0}
    lat = {DRAM_LEVEL: 0, NVM_LEVEL: 0}
    cells = defaultdict(lambda: [0, 0])
    for line in text.splitlines()[1:]:
        ts, tid, addr, op, level, latency, tlb = line.split(",")
        if op != "L":
            continue
        total += 1
        if level in n:
            ext += 1
            n[level] += 1
            lat[level] += int(latency)
            cells[(level, tlb)][0] += 1
            cells[(level, tlb)][1] += int(latency)
    return {
        "external_pct": 100 * ext / total,
        "dram_pct": 100 * n[DRAM_LEVEL] / ext,
        "nvm_pct": 100 * n[NVM_LEVEL] / ext,
        "dram_cost_pct": 100 * lat[DRAM_LEVEL] / (lat[DRAM_LEVEL] + lat[NVM_LEVEL]),
        "nvm_cost_pct": 100 * lat[NVM_LEVEL] / (lat[DRAM_LEVEL] + lat[NVM_LEVEL]),
        "means": {k: v[1] / v[0] for k, v in cells.items()},
    }


def touch_counts(pages):
    """Brute-force group-by-count -> (page buckets, access buckets)."""
    c = Counter(pages)
    pb = [0, 0, 0]
    ab = [0, 0, 0]
    for _, k in c.items():
        b = min(k, 3) - 1
        pb[b] += 1
        ab[b] += k
    return tuple(pb), tuple(ab)


def sort_percentile(values, pct):
    """Nearest rank by explicit sort: the ceil(p*n/100)-th smallest, 1-based."""
    s = sorted(values)
    k = math.ceil(pct * len(s) / 100)
    return s[max(k, 1) - 1]


def walk_log(log, n_samples, sample_pages):
    """Sequential replay of a migration log: tier of each sample's page when it is seen."""
    by_seq = defaultdict(list)
    for e in log:
        by_seq[e.seq].append(e)
    tier = {}
    out = []
    for i in range(n_samples):
        for e in by_seq.get(i, ()):
            if e.dst < 0:
                tier.pop(e.page, None)
            else:
                tier[e.page] = e.dst
        out.append(tier.get(sample_pages[i], -1))
    return out


def brute_force_placement(items, capacity):
    """items: (object_id, size, saving). Max total saving, then smallest sorted id tuple."""
    best = None
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            if sum(c[1] for c in combo) > capacity:
                continue
            gain = sum(c[2] for c in combo)
            ids = tuple(sorted(c[0] for c in combo))
            key = (-gain, ids)
            if best is None or key < best:
                best = key
    return set(best[1])


def density_sort(entries):
    """entries: (object_id, samples, size). Stable sort on the cross-multiplied ratio."""
    import functools

    def cmp(a, b):
        lhs, rhs = a[1] * b[2], b[1] * a[2]
        if lhs != rhs:
            return -1 if lhs > rhs else 1
        return -1 if a[0] < b[0] else (1 if a[0] > b[0] else 0)

    return [e[0] for e in sorted(entries, key=functools.cmp_to_key(cmp))]


def linear_attribute_bulk(records, addrs, times, chunk=512):
    """The same O(n) scan as :func:`linear_attribute`, broadcast over sample chunks."""
    import numpy as np

    rid = np.array([r[0] for r in records], dtype=np.int64)
    lo = np.array([r[1] for r in records], dtype=np.int64)
    hi = lo + np.array([r[2] for r in records], dtype=np.int64)
    t0 = np.array([r[3] for r in records], dtype=np.int64)
    t1 = np.array([r[4] for r in records], dtype=np.int64)
    out = np.full(len(addrs), -1, dtype=np.int64)
    for s in range(0, len(addrs), chunk):
        a = np.asarray(addrs[s:s + chunk], dtype=np.int64)[:, None]
        t = np.asarray(times[s:s + chunk], dtype=np.int64)[:, None]
        hit = (lo <= a) & (a < hi) & (t0 <= t) & (t < t1)
        n = hit.sum(axis=1)
        assert n.max(initial=0) <= 1
        out[s:s + chunk] = np.where(n == 1, rid[hit.argmax(axis=1)], -1)
    return out
