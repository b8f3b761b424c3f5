"""Object-level static placement: density ranking, greedy DRAM fill, evaluation.

Objects are ranked by external samples per byte and packed into DRAM from
the top.  The spill variant lets the first object that does not fit take the
remaining DRAM as a page-aligned prefix.  ``assign_optimal`` is an exhaustive
reference used to check the greedy result on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .autonuma_sim import memory_access_mask
from .errors import ConfigError, InvariantViolation, PlanMismatchError
from .ingest import CostModel
from .mapping import ObjectProfile, ObjectTable, attribute_all
from .trace_model import (
    DEFAULT_PAGE_SIZE,
    Level,
    MemorySample,
    SampleColumns,
    Tier,
    align_down,
)

MAX_OPTIMAL_OBJECTS = 20


@dataclass(frozen=True)
class PlacementPlan:
    assignment: dict[int, Tier]
    spill: tuple[int, int] | None
    dram_bytes_used: int
    nvm_bytes_used: int
    usable_dram: int

    def tier_of(self, object_id: int) -> Tier | None:
        return self.assignment.get(object_id)

    @property
    def dram_objects(self) -> list[int]:
        return sorted(o for o, t in self.assignment.items() if t == Tier.DRAM)


def rank_objects(profiles: Sequence[ObjectProfile], use_all_samples: bool = False) -> list[ObjectProfile]:
    """Descending access density; ties by ascending object id.

    Densities are compared as exact fractions, so equal ratios tie exactly.
    """
    def key(p: ObjectProfile):
        n = p.samples_all if use_all_samples else p.samples_total
        return (-Fraction(n, p.size), p.object_id)

    for p in profiles:
        if p.size <= 0:
            raise ConfigError(f"object {p.object_id} has non-positive size", ["size"])
    return sorted(profiles, key=key)


def assign_greedy(
    ranked: Sequence[ObjectProfile],
    usable_dram: int,
    spill: bool = False,
    page_size: int = DEFAULT_PAGE_SIZE,
) -> PlacementPlan:
    if usable_dram < 0:
        raise ConfigError("usable DRAM must be non-negative", ["dram_bytes"])
    free = usable_dram
    assignment: dict[int, Tier] = {}
    spilled: tuple[int, int] | None = None
    filling = True
    nvm = 0
    for p in ranked:
        if filling and p.size <= free:
            assignment[p.object_id] = Tier.DRAM
            free -= p.size
            continue
        if filling and spill:
            filling = False
            prefix = align_down(free, page_size)
            if prefix > 0:
                spilled = (p.object_id, prefix)
                free -= prefix
                nvm += p.size - prefix
                continue
        assignment[p.object_id] = Tier.NVM
        nvm += p.size
    plan = PlacementPlan(assignment, spilled, usable_dram - free, nvm, usable_dram)
    check_plan(plan)
    return plan


def check_plan(plan: PlacementPlan) -> None:
    if plan.dram_bytes_used > plan.usable_dram:
        raise InvariantViolation(
            f"plan uses {plan.dram_bytes_used} DRAM bytes, capacity {plan.usable_dram}"
        )
    if plan.spill is not None and plan.spill[0] in plan.assignment:
        raise InvariantViolation(f"spill object {plan.spill[0]} also fully assigned")


@dataclass(frozen=True)
class PlanEvaluation:
    cycles: float
    external_dram: int
    external_nvm: int

    @property
    def external_total(self) -> int:
        return self.external_dram + self.external_nvm


def evaluate_plan(
    plan: PlacementPlan | None,
    samples: Sequence[MemorySample] | SampleColumns,
    table: ObjectTable,
    cost_model: CostModel,
    object_ids: np.ndarray | None = None,
    baseline_tiers: np.ndarray | None = None,
    include_stores: bool = False,
) -> PlanEvaluation:
    """Re-price every external sample at the tier the plan gives its object.

    Samples no object claims keep their baseline tier: ``baseline_tiers`` when
    given (one tier code per sample), else the traced level.  ``plan=None``
    evaluates the baseline itself.
    """
    cols = SampleColumns.from_samples(samples)
    ids = attribute_all(cols, table) if object_ids is None else object_ids
    lv = cols.level
    if baseline_tiers is None:
        ext = cols.external_mask(include_stores)
        tiers = (lv == Level.NVM).astype(np.int64)
    else:
        ext = memory_access_mask(cols, include_stores)
        tiers = np.asarray(baseline_tiers, dtype=np.int64).copy()
        if np.any(tiers[ext] < 0):
            raise InvariantViolation("baseline tiers missing for some external samples")
    if plan is not None:
        n_obj = len(table.records)
        lut = np.full(n_obj + 1, -1, dtype=np.int64)
        for oid, tier in plan.assignment.items():
            if 0 <= oid < n_obj:
                lut[oid] = int(tier)
        spill_oid = -1
        if plan.spill is not None:
            spill_oid = plan.spill[0]
            lut[spill_oid] = int(Tier.NVM)
        mapped = ext & (ids >= 0)
        planned = lut[ids[mapped]]
        if np.any(planned < 0):
            missing = sorted(set(ids[mapped][planned < 0].tolist()))
            raise PlanMismatchError(
                f"plan has no assignment for object(s) {missing[:10]}"
                + (" ..." if len(missing) > 10 else "")
            )
        tiers[mapped] = planned
        if spill_oid >= 0:
            rec = table.records[spill_oid]
            in_prefix = ext & (ids == spill_oid) & (cols.addr < np.uint64(rec.base + plan.spill[1]))
            tiers[in_prefix] = int(Tier.DRAM)
    t = tiers[ext]
    cycles = float(cost_model.table()[t, cols.tlb[ext].astype(np.int64)].sum())
    nvm = int(np.count_nonzero(t == int(Tier.NVM)))
    return PlanEvaluation(cycles, int(t.size) - nvm, nvm)


def assign_optimal(
    profiles: Sequence[ObjectProfile],
    usable_dram: int,
    cost_model: CostModel,
) -> PlacementPlan:
    """Exhaustive minimum-cost full assignment (no spill).

    Ties go to the lexicographically smallest sorted DRAM id set.
    """
    n = len(profiles)
    if n > MAX_OPTIMAL_OBJECTS:
        raise ConfigError(
            f"exhaustive placement refuses {n} objects (limit {MAX_OPTIMAL_OBJECTS})", ["objects"]
        )
    profiles = sorted(profiles, key=lambda p: p.object_id)
    if n == 0:
        return PlacementPlan({}, None, 0, 0, usable_dram)
    sizes = np.array([p.size for p in profiles], dtype=np.int64)
    saving = np.array(
        [p.cost_if(Tier.NVM, cost_model) - p.cost_if(Tier.DRAM, cost_model) for p in profiles],
        dtype=np.float64,
    )
    best, cands, used_of = -np.inf, [], {}
    shifts = np.arange(n)
    for lo in range(0, 1 << n, 1 << 14):
        masks = np.arange(lo, min(lo + (1 << 14), 1 << n), dtype=np.int64)
        bits = (masks[:, None] >> shifts) & 1
        used = bits @ sizes
        gain = bits.astype(np.float64) @ saving
        gain[used > usable_dram] = -np.inf
        top = gain.max()
        if top < best:
            continue
        hit = np.flatnonzero(gain == top)
        if top > best:
            best, cands = top, []
        cands += masks[hit].tolist()
        used_of.update(zip(masks[hit].tolist(), used[hit].tolist()))
    chosen = min(cands, key=lambda m: [profiles[i].object_id for i in range(n) if m >> i & 1])
    assignment = {p.object_id: Tier.DRAM if chosen >> i & 1 else Tier.NVM for i, p in enumerate(profiles)}
    dram = int(used_of[chosen])
    plan = PlacementPlan(assignment, None, dram, int(sizes.sum()) - dram, usable_dram)
    check_plan(plan)
    return plan


@dataclass(frozen=True)
class ComparisonSummary:
    workload: str
    baseline_nvm: int
    plan_nvm: int
    baseline_cycles: float
    plan_cycles: float

    @property
    def nvm_reduction(self) -> float:
        """1 - plan/baseline; NaN when the baseline has no NVM samples."""
        if self.baseline_nvm == 0:
            return float("nan")
        return 1 - self.plan_nvm / self.baseline_nvm

    @property
    def cycle_delta(self) -> float:
        if self.baseline_cycles == 0:
            return float("nan")
        return self.plan_cycles / self.baseline_cycles - 1


def plan_rows(plan: PlacementPlan) -> list[tuple[int, str, int]]:
    rows = [(oid, tier.name, 0) for oid, tier in sorted(plan.assignment.items())]
    if plan.spill is not None:
        rows.append((plan.spill[0], "SPILL", plan.spill[1]))
        rows.sort()
    return rows


def plan_from_rows(rows: Sequence[Mapping[str, str]], usable_dram: int, sizes: Mapping[int, int]) -> PlacementPlan:
    assignment: dict[int, Tier] = {}
    spill = None
    dram = nvm = 0
    for r in rows:
        oid = int(r["object_id"])
        if r["tier"] == "SPILL":
            prefix = int(r["prefix_bytes"])
            spill = (oid, prefix)
            dram += prefix
            nvm += sizes.get(oid, prefix) - prefix
            continue
        tier = Tier[r["tier"]]
        assignment[oid] = tier
        if tier == Tier.DRAM:
            dram += sizes.get(oid, 0)
        else:
            nvm += sizes.get(oid, 0)
    return PlacementPlan(assignment, spill, dram, nvm, usable_dram)
