import numpy as np
import oracles
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tierlab.errors import TraceValidationError
from tierlab.ingest import CostModel
from tierlab.mapping import (
    attribute,
    attribute_all,
    build_object_table,
    profile_objects,
    unmapped_external,
)
from tierlab.trace_model import (
    UNMAPPED,
    AllocationEvent,
    AllocKind,
    Level,
    MemorySample,
    Op,
    SampleColumns,
    Tlb,
)

PS = 4096
MMAP, MUNMAP = AllocKind.MMAP, AllocKind.MUNMAP


def ev(t, kind, base, length, cs="cs"):
    return AllocationEvent(t, kind, base, length, cs)


def smp(t, addr, level=Level.NVM, lat=1000, op=Op.LOAD, tlb=Tlb.HIT):
    return MemorySample(t, 0, addr, op, level, lat, tlb)


def test_mmap_munmap_single_record():
    table = build_object_table([ev(100, MMAP, 0x1000, 0x2000), ev(900, MUNMAP, 0x1000, 0x2000)])
    (r,) = table.records
    assert (r.t_start, r.t_end) == (100, 900)
    assert attribute(smp(500, 0x1800), table) == 0
    assert attribute(smp(950, 0x1800), table) == UNMAPPED


def test_address_reuse_across_time():
    table = build_object_table([ev(0, MMAP, 0x1000, 0x1000, "a"), ev(5, MUNMAP, 0x1000, 0x1000),
                                ev(10, MMAP, 0x1000, 0x1000, "b")], trace_end=20)
    a, b = table.records
    assert (a.base, b.base) == (0x1000, 0x1000)
    assert a.t_end <= b.t_start
    assert [table.lookup(0x1000, t) for t in (3, 7, 12)] == [0, UNMAPPED, 1]


def test_overlapping_live_mmaps_name_both_events():
    with pytest.raises(TraceValidationError) as exc:
        build_object_table([ev(0, MMAP, 0x1000, 0x2000), ev(1, MMAP, 0x2000, 0x1000)])
    msg = str(exc.value)
    assert "event #0" in msg and "event #1" in msg


def test_partial_unmap_splits_with_dense_ids():
    table = build_object_table([ev(0, MMAP, 0x0, 0x4000), ev(10, MUNMAP, 0x1000, 0x1000)], trace_end=50)
    assert [(r.object_id, r.base, r.length, r.t_start, r.t_end) for r in table.records] == [
        (0, 0x0, 0x4000, 0, 10), (1, 0x0, 0x1000, 10, 50), (2, 0x2000, 0x2000, 10, 50)]


def test_unmatched_munmap_is_warning():
    table = build_object_table([ev(0, MUNMAP, 0x5000, 0x1000)])
    assert len(table) == 0 and len(table.warnings) == 1


@st.composite
def event_streams(draw):
    """Random MMAP/MUNMAP streams over a 32-page arena that never overlap live mappings."""
    n = draw(st.integers(1, 20))
    live = set()
    out = []
    t = 0
    for i in range(n):
        t += draw(st.integers(0, 3))
        if live and draw(st.booleans()):
            lo = draw(st.integers(0, 31))
            hi = draw(st.integers(lo + 1, 32))
            out.append(ev(t, MUNMAP, lo * PS, (hi - lo) * PS))
            live -= set(range(lo, hi))
        else:
            free = [p for p in range(32) if p not in live]
            if not free:
                continue
            lo = draw(st.sampled_from(free))
            hi = lo + 1
            while hi < 32 and hi not in live and draw(st.booleans()):
                hi += 1
            out.append(ev(t, MMAP, lo * PS, (hi - lo) * PS, f"cs{i}"))
            live |= set(range(lo, hi))
    return out


def check_against_timeline(events):
    table = build_object_table(events, trace_end=events[-1].timestamp + 1)
    times = sorted({e.timestamp for e in events} | {e.timestamp + 1 for e in events})
    expect = oracles.page_timeline(events, PS, times)
    for t in times:
        for p in range(32):
            oid = table.lookup(p * PS + 17, t)
            got = None if oid == UNMAPPED else table.records[oid].callstack_id
            assert got == expect[t].get(p), (t, p)
    ids = [r.object_id for r in table.records]
    assert ids == list(range(len(ids)))


def test_twenty_events_three_partial_unmaps():
    events = [ev(i, MMAP, i * 2 * PS, 2 * PS, f"cs{i}") for i in range(16)]
    events += [ev(20, MUNMAP, 0, PS), ev(21, MUNMAP, 5 * PS, PS), ev(22, MUNMAP, 9 * PS, 3 * PS),
               ev(23, MMAP, 0, PS, "re")]
    assert len(events) == 20
    assert sum(e.kind == MUNMAP for e in events) == 3
    check_against_timeline(events)


@settings(max_examples=60)
@given(event_streams())
def test_table_matches_page_timeline(events):
    check_against_timeline(events)


def test_attribute_matches_linear_scan_1e5():
    rng = np.random.default_rng(7)
    events = []
    t = 0
    live = []
    for i in range(60):
        t += int(rng.integers(1, 1000))
        if live and rng.random() < 0.4:
            b, ln = live.pop(int(rng.integers(len(live))))
            events.append(ev(t, MUNMAP, b, ln))
        else:
            b = i * 64 * PS
            ln = int(rng.integers(1, 64)) * PS
            events.append(ev(t, MMAP, b, ln, f"cs{i}"))
            live.append((b, ln))
    table = build_object_table(events, trace_end=t + 1000)
    n = 100_000
    ts = np.sort(rng.integers(0, t + 1000, n))
    addrs = rng.integers(0, 61 * 64 * PS, n)
    samples = [smp(int(a), int(b)) for a, b in zip(ts, addrs)]
    got = attribute_all(samples, table)
    recs = [(r.object_id, r.base, r.length, r.t_start, r.t_end) for r in table.records]
    expect = [oracles.linear_attribute(recs, s.addr, s.timestamp) for s in samples]
    assert got.tolist() == expect
    for s, o in zip(samples[:200], got[:200]):
        assert attribute(s, table) == o
        if o >= 0:
            r = table.records[o]
            assert r.base <= s.addr < r.base + r.length and r.t_start <= s.timestamp < r.t_end


def test_profile_uses_observed_latency():
    table = build_object_table([ev(0, MMAP, 0, PS)])
    samples = [smp(i, 8 * i) for i in range(3)] + [smp(5, 8, Level.L1, 4)]
    (p,) = profile_objects(samples, table, CostModel())
    assert p.cost_cycles_by_tier == (0, 3000)
    assert p.samples_by_tier == (0, 3) and p.samples_total == 3 and p.samples_all == 4
    assert p.model_cost_by_tier == (0.0, 3 * 1833.0)
    assert (p.first_access, p.last_access) == (0, 2)


def random_trace(seed, n=4000):
    rng = np.random.default_rng(seed)
    events = [ev(0, MMAP, i * 16 * PS, int(rng.integers(1, 16)) * PS, f"o{i}") for i in range(8)]
    table = build_object_table(events, trace_end=n + 1)
    lv = rng.choice([Level.L1, Level.LFB, Level.DRAM, Level.NVM], n)
    samples = [MemorySample(i, 0, int(rng.integers(0, 9 * 16 * PS)), Op.LOAD, Level(int(lv[i])),
                            int(rng.integers(1, 3000)), Tlb(int(rng.integers(0, 3)))) for i in range(n)]
    return table, samples


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_profiles_conserve_external_samples(seed):
    table, samples = random_trace(seed)
    ids = attribute_all(samples, table)
    profs = profile_objects(samples, table)
    un = unmapped_external(samples, ids)
    ext = SampleColumns.from_samples(samples).external_mask()
    for tier in (0, 1):
        assert sum(p.samples_by_tier[tier] for p in profs) + un[tier] == int(
            np.count_nonzero(ext & (SampleColumns.from_samples(samples).level == (Level.DRAM, Level.NVM)[tier])))
    for p in profs:
        assert p.samples_total == sum(p.samples_by_tier)


def test_density_ordering_matches_group_by():
    table, samples = random_trace(5)
    counts = {}
    for s in samples:
        if s.is_external:
            o = oracles.linear_attribute([(r.object_id, r.base, r.length, r.t_start, r.t_end) for r in table.records],
                                         s.addr, s.timestamp)
            if o >= 0:
                counts[o] = counts.get(o, 0) + 1
    expect = oracles.density_sort([(o, c, table.records[o].length) for o, c in counts.items()])
    profs = profile_objects(samples, table)
    got = sorted(profs, key=lambda p: (-p.density, p.object_id))
    assert [p.object_id for p in got] == expect


def test_attribution_deterministic():
    table, samples = random_trace(3)
    assert attribute_all(samples, table).tolist() == attribute_all(samples, table).tolist()
