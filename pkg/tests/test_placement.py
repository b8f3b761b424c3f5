import numpy as np
import oracles
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from placegen import PS, instance, profile

from tierlab.errors import ConfigError, PlanMismatchError
from tierlab.ingest import CostModel
from tierlab.mapping import build_object_table
from tierlab.placement import (
    ComparisonSummary,
    PlacementPlan,
    assign_greedy,
    assign_optimal,
    evaluate_plan,
    plan_from_rows,
    plan_rows,
    rank_objects,
)
from tierlab.trace_model import (
    AllocationEvent,
    AllocKind,
    Level,
    MemorySample,
    Op,
    Tier,
    Tlb,
)

GB = 1 << 30
CM = CostModel()


def test_rank_by_density():
    a, b = profile(0, 1000, 8 * GB), profile(1, 500, GB)
    assert [p.object_id for p in rank_objects([a, b])] == [1, 0]


def test_rank_ties_by_id():
    ps = [profile(3, 10, 100), profile(1, 20, 200), profile(2, 1, 10)]
    assert [p.object_id for p in rank_objects(ps)] == [1, 2, 3]


def test_rank_all_samples_switch():
    a = profile(0, 10, 100)
    b = profile(1, 5, 100)
    b = b.__class__(**{**b.__dict__, "samples_all": 500})
    assert [p.object_id for p in rank_objects([a, b], use_all_samples=True)] == [1, 0]


@pytest.mark.parametrize("seed", range(5))
def test_rank_twelve_random_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    ps = [profile(i, int(rng.integers(1, 20)), int(rng.integers(1, 6))) for i in range(12)]
    assert [p.object_id for p in rank_objects(ps)] == oracles.density_sort(
        [(p.object_id, p.samples_total, p.size) for p in ps])


def three_objects():
    return [profile(0, 800, 8 * GB), profile(1, 400, 8 * GB), profile(2, 10, GB)]


def test_greedy_skips_and_continues():
    plan = assign_greedy(three_objects(), 10 * GB)
    assert plan.assignment == {0: Tier.DRAM, 1: Tier.NVM, 2: Tier.DRAM}
    assert plan.dram_bytes_used == 9 * GB and plan.spill is None


def test_greedy_spill():
    plan = assign_greedy(three_objects(), 10 * GB, spill=True)
    assert plan.spill == (1, 2 * GB)
    assert plan.assignment == {0: Tier.DRAM, 2: Tier.NVM}
    assert plan.dram_bytes_used == 10 * GB and plan.nvm_bytes_used == 6 * GB + GB


def test_spill_prefix_page_aligned_or_absent():
    plan = assign_greedy([profile(0, 5, 3 * PS), profile(1, 5, 3 * PS)], 3 * PS + 100, spill=True)
    assert plan.spill is None and plan.assignment == {0: Tier.DRAM, 1: Tier.NVM}


def test_negative_capacity_rejected():
    with pytest.raises(ConfigError):
        assign_greedy([], -1)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(1, 10**6)), min_size=1, max_size=15),
       st.integers(0, 5 * 10**6), st.booleans())
def test_greedy_capacity_and_determinism(objs, cap, spill):
    ps = [profile(i, n, sz) for i, (n, sz) in enumerate(objs)]
    plan = assign_greedy(rank_objects(ps), cap, spill)
    assert plan.dram_bytes_used <= cap
    assert plan == assign_greedy(rank_objects(ps), cap, spill)
    if plan.spill:
        assert plan.spill[0] not in plan.assignment and 0 < plan.spill[1] < ps[plan.spill[0]].size
    assert len(plan.assignment) + (plan.spill is not None) == len(ps)


def test_optimal_single_and_pair():
    assert assign_optimal([profile(0, 5, 10)], 10, CM).assignment == {0: Tier.DRAM}
    plan = assign_optimal([profile(0, 5, 10), profile(1, 9, 10)], 10, CM)
    assert plan.dram_objects == [1]


def test_optimal_refuses_large():
    with pytest.raises(ConfigError):
        assign_optimal([profile(i, 1, 1) for i in range(21)], 5, CM)


@pytest.mark.parametrize("seed", range(10))
def test_optimal_matches_brute_force_and_bounds_greedy(seed):
    rng = np.random.default_rng(seed)
    ps = [profile(i, int(rng.integers(1, 50)), int(rng.integers(1, 20)) * PS, Tlb(int(rng.integers(0, 3))))
          for i in range(10)]
    cap = int(rng.integers(5, 80)) * PS
    items = [(p.object_id, p.size, p.cost_if(Tier.NVM, CM) - p.cost_if(Tier.DRAM, CM)) for p in ps]
    opt = assign_optimal(ps, cap, CM)
    assert set(opt.dram_objects) == oracles.brute_force_placement(items, cap)
    greedy = assign_greedy(rank_objects(ps), cap)

    def cost(plan):
        return sum(p.cost_if(plan.assignment[p.object_id], CM) for p in ps)

    assert cost(greedy) >= cost(opt)


@settings(max_examples=40)
@given(st.integers(0, 10**9), st.integers(1, 15), st.integers(1, 4))
def test_equal_size_greedy_is_optimal(seed, n, pages):
    rng = np.random.default_rng(seed)
    _, _, ps = instance(rng, n, equal_size=pages)
    cap = int(rng.integers(0, n + 1)) * pages * PS
    assert assign_greedy(rank_objects(ps), cap).dram_objects == assign_optimal(ps, cap, CM).dram_objects


@settings(max_examples=40)
@given(st.integers(0, 10**9), st.integers(1, 8))
def test_spill_dominates(seed, n):
    rng = np.random.default_rng(seed)
    table, samples, ps = instance(rng, n)
    cap = int(rng.integers(0, sum(p.size for p in ps) // PS + 1)) * PS
    ranked = rank_objects(ps)
    a = evaluate_plan(assign_greedy(ranked, cap, True), samples, table, CM)
    b = evaluate_plan(assign_greedy(ranked, cap, False), samples, table, CM)
    assert a.cycles <= b.cycles + 1e-6


def small_case():
    evs = [AllocationEvent(0, AllocKind.MMAP, 0, 4 * PS, "a"), AllocationEvent(0, AllocKind.MMAP, 8 * PS, PS, "b")]
    table = build_object_table(evs, trace_end=100)
    samples = [MemorySample(i + 1, 0, a, Op.LOAD, lv, 100, Tlb.HIT) for i, (a, lv) in enumerate(
        [(0, Level.NVM), (PS, Level.NVM), (3 * PS, Level.NVM), (8 * PS, Level.DRAM), (20 * PS, Level.NVM),
         (3 * PS, Level.L1)])]
    return table, samples


def test_all_dram_zero_nvm_except_unmapped():
    table, samples = small_case()
    plan = PlacementPlan({0: Tier.DRAM, 1: Tier.DRAM}, None, 5 * PS, 0, 10 * PS)
    ev = evaluate_plan(plan, samples, table, CM)
    assert ev.external_nvm == 1  # the unmapped sample keeps its traced tier
    assert ev.cycles == 4 * 659 + 1833


def test_spill_prefix_by_address():
    table, samples = small_case()
    plan = PlacementPlan({1: Tier.NVM}, (0, 2 * PS), 2 * PS, 3 * PS, 2 * PS)
    ev = evaluate_plan(plan, samples, table, CM)
    assert (ev.external_dram, ev.external_nvm) == (2, 3)


def test_traced_identity():
    table, samples = small_case()
    base = evaluate_plan(None, samples, table, CM)
    traced = PlacementPlan({0: Tier.NVM, 1: Tier.DRAM}, None, PS, 4 * PS, PS)
    assert evaluate_plan(traced, samples, table, CM) == base
    assert base.external_nvm == sum(s.level == Level.NVM for s in samples)


def test_missing_object_is_mismatch():
    table, samples = small_case()
    with pytest.raises(PlanMismatchError):
        evaluate_plan(PlacementPlan({0: Tier.DRAM}, None, 0, 0, 0), samples, table, CM)


def test_plan_rows_round_trip():
    plan = assign_greedy(three_objects(), 10 * GB, spill=True)
    rows = [dict(object_id=str(o), tier=t, prefix_bytes=str(b)) for o, t, b in plan_rows(plan)]
    back = plan_from_rows(rows, 10 * GB, {0: 8 * GB, 1: 8 * GB, 2: GB})
    assert back == plan


def test_comparison_summary():
    c = ComparisonSummary("w", 100, 21, 1000.0, 800.0)
    assert c.nvm_reduction == pytest.approx(0.79) and c.cycle_delta == pytest.approx(-0.2)
    assert np.isnan(ComparisonSummary("w", 0, 0, 0.0, 0.0).nvm_reduction)
