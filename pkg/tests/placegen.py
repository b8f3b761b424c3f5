"""Random placement instances with proportional per-page sample counts."""

from __future__ import annotations

import numpy as np

from tierlab.mapping import ObjectProfile, build_object_table, profile_objects
from tierlab.trace_model import AllocationEvent, AllocKind, Level, MemorySample, Op, Tlb

PS = 4096


def profile(oid, samples, size, tlb=Tlb.HIT, tier=1):
    cells = [[0, 0, 0], [0, 0, 0]]
    cells[tier][tlb] = samples
    by_tier = (samples, 0) if tier == 0 else (0, samples)
    return ObjectProfile(oid, size, f"o{oid}", samples, by_tier, (0, 0),
                         (tuple(cells[0]), tuple(cells[1])), samples, 0, 0)


def instance(rng: np.random.Generator, n_objects: int, equal_size: int | None = None, max_pages: int = 12):
    """Objects of whole pages; every page of an object gets the same sample count and one TLB outcome."""
    tlb = Tlb(int(rng.integers(0, 3)))
    allocs, raw = [], []
    base = 0
    for o in range(n_objects):
        pages = equal_size or int(rng.integers(1, max_pages + 1))
        per_page = int(rng.integers(1, 6))
        allocs.append(AllocationEvent(0, AllocKind.MMAP, base, pages * PS, f"o{o}"))
        for p in range(pages):
            raw += [(base + p * PS + 64 * k, Level.NVM if rng.random() < 0.7 else Level.DRAM) for k in range(per_page)]
        base += (pages + 1) * PS
    samples = [MemorySample(i + 1, 0, a, Op.LOAD, lv, 100, tlb) for i, (a, lv) in enumerate(raw)]
    table = build_object_table(allocs, trace_end=len(samples) + 2)
    return table, samples, profile_objects(samples, table)
