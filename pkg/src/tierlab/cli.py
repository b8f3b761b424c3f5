"""``tierlab`` command line: one subcommand per pipeline stage.

Data goes to files in ``--out-dir``; stdout carries a one-line summary and
diagnostics go to stderr.  Exit codes: 0 success, 1 usage error, 2 input
validation error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import TRACE_FORMAT_VERSION, __version__, synth
from . import characterize as ch
from . import placement as pl
from . import report as rp
from .autonuma_sim import (
    load_sim_dir,
    memory_access_mask,
    relabel_samples,
    replay_residency,
    simulate,
    write_sim_dir,
)
from .errors import InputError, TierlabError, UsageError
from .ingest import (
    RunConfig,
    dump_config,
    gc_paused,
    load_config,
    parse_bytes,
    parse_duration,
    read_allocs,
    read_sample_columns,
)
from .mapping import ObjectTable, attribute_all, build_object_table, profile_objects
from .trace_model import AllocationEvent, SampleColumns, Tier, Tlb

log = logging.getLogger("tierlab")

WALL_TIME_KEYS = ("started_at", "finished_at")


def max_threads() -> int:
    raw = os.environ.get("TIERLAB_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"TIERLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"TIERLAB_THREADS must be a positive integer, got {raw!r}")
    return n


# --------------------------------------------------------------------------
# Output helpers


def _cell(v: Any) -> Any:
    if v is None:
        return "NA"
    if isinstance(v, float):
        if v != v:
            return "NA"
        return f"{v:.6f}".rstrip("0").rstrip(".") if abs(v) < 1e15 else f"{v:.6g}"
    return v


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def _pct(x: float | None) -> float | None:
    return None if x is None else round(100 * x, 4)


def _secs(x: float | None) -> float | None:
    return None if x is None else round(x, 3)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects what a subcommand read and wrote, then writes the manifest."""

    def __init__(self, subcommand: str, out_dir: Path | None, config: RunConfig):
        self.subcommand = subcommand
        self.out_dir = out_dir
        self.config = config
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.started = time.time()
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)

    def add_input(self, path: Path | None) -> None:
        if path is not None and path.is_file():
            self.inputs[path.name] = sha256_file(path)

    def add_input_dir(self, d: Path) -> None:
        # upstream manifests hold wall time; hashing them would break determinism
        for p in sorted(d.iterdir()):
            if p.is_file() and p.suffix in (".csv", ".json") and p.name != "manifest.json":
                self.inputs[f"{d.name}/{p.name}"] = sha256_file(p)

    def path(self, name: str) -> Path:
        assert self.out_dir is not None
        self.outputs.append(name)
        return self.out_dir / name

    def finish(self) -> None:
        if self.out_dir is None:
            return
        (self.out_dir / "config.resolved.json").write_text(dump_config(self.config), encoding="utf-8")
        manifest = {
            "tool": "tierlab",
            "version": __version__,
            "trace_format_version": TRACE_FORMAT_VERSION,
            "subcommand": self.subcommand,
            "config_sha256": self.config.digest(),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": sorted(set(self.outputs) | {"config.resolved.json"}),
            "started_at": round(self.started, 3),
            "finished_at": round(time.time(), 3),
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Loading


class Trace:
    def __init__(self, samples_path: Path, allocs_path: Path, config: RunConfig):
        with gc_paused():
            self.cols: SampleColumns = read_sample_columns(samples_path)
            self.allocs: list[AllocationEvent] = read_allocs(allocs_path, config.page_size)
        last = max(
            int(self.cols.timestamp[-1]) if len(self.cols) else 0,
            self.allocs[-1].timestamp if self.allocs else 0,
        )
        self.trace_end = last + 1
        self.table: ObjectTable = build_object_table(self.allocs, trace_end=self.trace_end)
        for w in self.table.warnings:
            log.warning("unmatched munmap: %s", w)
        self.ids = attribute_all(self.cols, self.table)
        self._samples = None

    @property
    def samples(self):
        if self._samples is None:
            with gc_paused():
                self._samples = self.cols.to_samples()
        return self._samples


def _load(args: argparse.Namespace, run: Run) -> Trace:
    run.add_input(args.samples)
    run.add_input(args.allocs)
    run.add_input(args.config)
    return Trace(args.samples, args.allocs, run.config)


# --------------------------------------------------------------------------
# Subcommands


def cmd_validate(args: argparse.Namespace, cfg: RunConfig) -> str:
    tr = Trace(args.samples, args.allocs, cfg)
    return (
        f"ok: {len(tr.cols)} samples, {len(tr.allocs)} allocation events, "
        f"{len(tr.table)} objects, {len(tr.table.warnings)} warnings"
    )


PROFILE_HEADER = (
    "object_id", "callstack_id", "size", "samples_total", "samples_dram", "samples_nvm", "samples_all",
    "cost_cycles_dram", "cost_cycles_nvm", "density_per_mb", "first_access_ns", "last_access_ns",
    "dram_hit", "dram_miss", "dram_tlb_na", "nvm_hit", "nvm_miss", "nvm_tlb_na",
)


def cmd_map(args: argparse.Namespace, cfg: RunConfig) -> str:
    run = Run("map", args.out_dir, cfg)
    tr = _load(args, run)
    write_csv(run.path("objects.csv"), ("object_id", "base", "length", "t_start_ns", "t_end_ns", "callstack_id"),
              ((r.object_id, f"0x{r.base:x}", r.length, r.t_start, r.t_end, r.callstack_id) for r in tr.table.records))
    profiles = profile_objects(tr.cols, tr.table, object_ids=tr.ids, include_stores=args.include_stores)
    write_csv(run.path("object_profiles.csv"), PROFILE_HEADER, (
        (p.object_id, p.callstack_id, p.size, p.samples_total, *p.samples_by_tier, p.samples_all,
         *p.cost_cycles_by_tier, round(p.samples_total * 1_000_000 / p.size, 6),
         p.first_access, p.last_access, *p.tlb_by_tier[0], *p.tlb_by_tier[1])
        for p in profiles
    ))
    run.finish()
    mapped = int(np.count_nonzero(tr.ids >= 0))
    return f"map: {len(tr.table)} objects, {mapped}/{len(tr.cols)} samples attributed"


def _tier_split_rows(ts: ch.TierSplit) -> list[tuple[str, Any]]:
    rows: list[tuple[str, Any]] = [
        ("total_samples", ts.total_samples),
        ("external_samples", ts.external_samples),
        ("dram_samples", ts.samples_by_tier[0]),
        ("nvm_samples", ts.samples_by_tier[1]),
        ("external_pct", _pct(ts.external_fraction)),
        ("dram_pct", _pct(ts.dram_share)),
        ("nvm_pct", _pct(ts.nvm_share)),
        ("dram_cost_pct", _pct(ts.dram_cost_share)),
        ("nvm_cost_pct", _pct(ts.nvm_cost_share)),
    ]
    for tier in Tier:
        for tlb, name in ((Tlb.HIT, "hit"), (Tlb.MISS, "miss"), (Tlb.UNKNOWN, "tlb_na")):
            m = ts.mean_cost(tier, tlb)
            rows.append((f"mean_{tier.name.lower()}_{name}", None if m is None else round(m, 4)))
    return rows


def cmd_characterize(args: argparse.Namespace, cfg: RunConfig) -> str:
    run = Run("characterize", args.out_dir, cfg)
    tr = _load(args, run)
    sim = None
    if args.sim_dir is not None:
        run.add_input_dir(args.sim_dir)
        sim = load_sim_dir(args.sim_dir)
    ps, st = cfg.page_size, args.include_stores
    cols = tr.cols

    ext = cols.external_mask(st)
    nvm_counts = np.bincount(tr.ids[ext & (cols.level == Tier.NVM.level) & (tr.ids >= 0)],
                             minlength=len(tr.table) or 1)
    top = int(nvm_counts.argmax()) if nvm_counts.any() else None

    jobs: dict[str, Callable[[], Any]] = {
        "split": lambda: ch.tier_split(cols, st),
        "hist_all": lambda: ch.touch_histogram(cols, None, ps, st),
        "hist_dram": lambda: ch.touch_histogram(cols, Tier.DRAM, ps, st),
        "hist_nvm": lambda: ch.touch_histogram(cols, Tier.NVM, ps, st),
        "reuse_nvm": lambda: ch.reuse_stats(cols, Tier.NVM, page_size=ps, include_stores=st),
        "reuse_top": lambda: ch.reuse_stats(cols, Tier.NVM, tr.ids, top, ps, st) if top is not None
        else ch.ReuseStats(0),
        "promotions": lambda: ch.detect_promotions(cols, ps, st),
        "timeline": lambda: ch.usage_timeline(tr.allocs, cols, args.bucket, sim),
    }
    if sim is not None:
        jobs["correlation"] = lambda: ch.promotion_access_correlation(sim, args.window)
        jobs["sim_split"] = lambda: ch.tier_split(relabel_samples(sim, tr.samples, cfg, st), st)
    with ThreadPoolExecutor(max_workers=max_threads()) as pool:
        futures = {k: pool.submit(f) for k, f in jobs.items()}
        res = {k: f.result() for k, f in futures.items()}

    write_csv(run.path("tier_split.csv"), ("metric", "value"), _tier_split_rows(res["split"]))
    if sim is not None:
        write_csv(run.path("tier_split_sim.csv"), ("metric", "value"), _tier_split_rows(res["sim_split"]))
    write_csv(run.path("touch_histogram.csv"), (
        "tier", "pages_1", "pages_2", "pages_3plus", "accesses_1", "accesses_2", "accesses_3plus",
        "page_share_1", "page_share_2", "page_share_3plus",
        "access_share_1", "access_share_2", "access_share_3plus",
    ), (
        (name, *h.pages, *h.accesses, *(round(x, 6) for x in h.page_shares),
         *(round(x, 6) for x in h.access_shares))
        for name, h in (("ALL", res["hist_all"]), ("DRAM", res["hist_dram"]), ("NVM", res["hist_nvm"]))
    ))
    write_csv(run.path("reuse_stats.csv"), (
        "scope", "object_id", "tier", "n_pages", "min_s", "p25_nearest_rank_s", "p50_nearest_rank_s",
        "p75_nearest_rank_s", "max_s", "mean_s", "std_population_s",
    ), (
        (scope, oid, "NVM", r.n_pages, _secs(r.min), _secs(r.p25), _secs(r.p50), _secs(r.p75),
         _secs(r.max), _secs(r.mean), _secs(r.std))
        for scope, oid, r in (("all_objects", None, res["reuse_nvm"]), ("top_nvm_object", top, res["reuse_top"]))
    ))
    pr = res["promotions"]
    write_csv(run.path("promotions.csv"),
              ("two_touch_pages", "nvm_then_dram", "dram_then_nvm", "promoted_pct", "demoted_pct"),
              [(pr.pages, pr.promoted, pr.demoted, _pct(pr.promoted_fraction), _pct(pr.demoted_fraction))])
    tl = res["timeline"]
    if "total" in tl.series:
        series = zip(tl.series["total"], [None] * tl.n_buckets, [None] * tl.n_buckets)
    else:
        series = ((d + n, d, n) for d, n in zip(tl.series["dram"], tl.series["nvm"]))
    write_csv(run.path("timeline.csv"), ("bucket_start_s", "total_bytes", "dram_bytes", "nvm_bytes"),
              ((round(s / 1e9, 3), *v) for s, v in zip(tl.starts(), series)))
    if sim is not None:
        co = res["correlation"]
        write_csv(run.path("correlation.csv"), ("window_start_s", "dram_loads", "pages_promoted"),
                  ((round(i * co.window / 1e9, 3), a, b) for i, (a, b) in enumerate(zip(co.dram_loads, co.promoted))))
        write_csv(run.path("correlation_summary.csv"), ("metric", "value"),
                  [("windows", len(co.dram_loads)), ("pearson_r", None if co.r is None else round(co.r, 6))])
    run.finish()
    s = res["split"]
    return (f"characterize: external {_cell(_pct(s.external_fraction))}%, "
            f"NVM {_cell(_pct(s.nvm_share))}% of external")


def cmd_sim(args: argparse.Namespace, cfg: RunConfig) -> str:
    run = Run("sim-autonuma", args.out_dir, cfg)
    tr = _load(args, run)
    with gc_paused():
        report = simulate(tr.allocs, tr.samples, cfg, enabled=args.enabled, include_stores=args.include_stores)
    for name in write_sim_dir(report, args.out_dir):
        run.outputs.append(name)
    run.finish()
    dram, nvm = report.external_by_tier
    c = report.counters
    return (f"sim-autonuma ({'enabled' if args.enabled else 'disabled'}): {dram} DRAM / {nvm} NVM accesses, "
            f"{c.pgpromote_success} promoted, {c.pgdemote_kswapd + c.pgdemote_direct} demoted")


def cmd_plan(args: argparse.Namespace, cfg: RunConfig) -> str:
    run = Run("plan", args.out_dir, cfg)
    tr = _load(args, run)
    cap = cfg.usable_dram if args.dram_bytes is None else args.dram_bytes
    profiles = profile_objects(tr.cols, tr.table, object_ids=tr.ids, include_stores=args.include_stores)
    ranked = pl.rank_objects(profiles, use_all_samples=args.all_samples)
    plan = pl.assign_greedy(ranked, cap, spill=args.spill, page_size=cfg.page_size)
    cm = cfg.cost_model
    base = pl.evaluate_plan(None, tr.cols, tr.table, cm, tr.ids, include_stores=args.include_stores)
    ev = pl.evaluate_plan(plan, tr.cols, tr.table, cm, tr.ids, include_stores=args.include_stores)
    opt = None
    if len(profiles) <= pl.MAX_OPTIMAL_OBJECTS:
        oplan = pl.assign_optimal(profiles, cap, cm)
        opt = pl.evaluate_plan(oplan, tr.cols, tr.table, cm, tr.ids, include_stores=args.include_stores)
    write_csv(run.path("plan.csv"), ("object_id", "tier", "prefix_bytes"), pl.plan_rows(plan))
    write_csv(run.path("plan_eval.csv"), ("metric", "value"), [
        ("usable_dram_bytes", cap),
        ("spill", int(args.spill)),
        ("dram_bytes_used", plan.dram_bytes_used),
        ("nvm_bytes_used", plan.nvm_bytes_used),
        ("spill_object", None if plan.spill is None else plan.spill[0]),
        ("spill_prefix_bytes", None if plan.spill is None else plan.spill[1]),
        ("traced_cycles", base.cycles),
        ("traced_nvm_samples", base.external_nvm),
        ("plan_cycles", ev.cycles),
        ("plan_dram_samples", ev.external_dram),
        ("plan_nvm_samples", ev.external_nvm),
        ("optimal_cycles", None if opt is None else opt.cycles),
        ("greedy_minus_optimal_cycles", None if opt is None else ev.cycles - opt.cycles),
    ])
    run.finish()
    return (f"plan: {len(plan.dram_objects)} objects in DRAM ({plan.dram_bytes_used} bytes), "
            f"NVM samples {base.external_nvm} -> {ev.external_nvm}")


COMPARISON_HEADER = (
    "workload", "baseline_nvm", "plan_nvm", "nvm_reduction_pct", "baseline_cycles", "plan_cycles",
    "cycle_delta_pct", "external_accesses", "promotions", "demotions",
)


def cmd_compare(args: argparse.Namespace, cfg: RunConfig) -> str:
    run = Run("compare", args.out_dir, cfg)
    tr = _load(args, run)
    run.add_input_dir(args.plan_dir)
    run.add_input_dir(args.sim_dir)
    sim = load_sim_dir(args.sim_dir)
    mask = memory_access_mask(tr.cols, args.include_stores)
    if int(mask.sum()) != len(sim.access_tier):
        raise InputError(
            f"{args.sim_dir}: simulation saw {len(sim.access_tier)} accesses, trace has {int(mask.sum())}; "
            "was it run on these inputs?"
        )
    try:
        with open(args.plan_dir / "plan.csv", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read plan: {exc}") from None
    sizes = {r.object_id: r.length for r in tr.table.records}
    plan = pl.plan_from_rows(rows, cfg.usable_dram, sizes)
    tiers = replay_residency(sim, tr.cols)
    ev = pl.evaluate_plan(plan, tr.cols, tr.table, cfg.cost_model, tr.ids, baseline_tiers=tiers,
                          include_stores=args.include_stores)
    summ = pl.ComparisonSummary(args.workload, sim.external_by_tier[1], ev.external_nvm,
                                sim.estimated_cycles, ev.cycles)
    write_csv(run.path("comparison.csv"), COMPARISON_HEADER, [(
        summ.workload, summ.baseline_nvm, summ.plan_nvm, _pct(summ.nvm_reduction),
        summ.baseline_cycles, summ.plan_cycles, _pct(summ.cycle_delta),
        len(sim.access_tier), sim.promotions, sim.demotions,
    )])
    run.finish()
    return (f"compare: NVM samples {summ.baseline_nvm} -> {summ.plan_nvm} "
            f"({_cell(_pct(summ.nvm_reduction))}% reduction)")


def cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> str:
    if (args.preset is None) == (args.spec is None):
        raise UsageError("synth needs exactly one of --preset or --spec")
    run = Run("synth", args.out_dir, cfg)
    if args.preset is not None:
        spec = synth.preset(args.preset, seed=args.seed if args.seed is not None else 0, scale=args.scale)
    else:
        run.add_input(args.spec)
        spec = synth.load_spec(args.spec)
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
    if args.tier_mode is not None:
        spec = synth.with_tier_mode(spec, args.tier_mode)
    trace = synth.generate(spec)
    run.outputs += trace.write(args.out_dir)
    run.finish()
    return f"synth: {len(trace.columns)} samples, {len(trace.allocs)} allocation events (seed {spec.seed})"


def cmd_report(args: argparse.Namespace, cfg: RunConfig) -> str:
    run = Run("report", args.out_dir, cfg)
    for d in args.in_dir:
        if not d.is_dir():
            raise InputError(f"{d}: not a directory")
        run.add_input_dir(d)
    run.outputs += rp.build_report(args.in_dir, args.out_dir)
    run.finish()
    return f"report: {len(run.outputs) - 1} figures"


# --------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _bytes_arg(v: str) -> int:
    try:
        return parse_bytes(v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _duration_arg(v: str) -> int:
    try:
        n = parse_duration(v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if n <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tierlab", description="DRAM/NVM tiering trace analysis")
    p.add_argument("--version", action="version",
                   version=f"tierlab {__version__} (trace format {TRACE_FORMAT_VERSION})")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def trace_cmd(name: str, help_: str, out: bool = True) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--samples", type=Path, required=True)
        sp.add_argument("--allocs", type=Path, required=True)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--include-stores", action="store_true", help="count stores as accesses")
        if out:
            sp.add_argument("--out-dir", type=Path, required=True)
        return sp

    trace_cmd("validate", "parse and check a trace pair", out=False).set_defaults(func=cmd_validate)
    trace_cmd("map", "build the object table and per-object profiles").set_defaults(func=cmd_map)

    sp = trace_cmd("characterize", "tier split, touch histogram, reuse, promotions, timeline")
    sp.add_argument("--sim-dir", type=Path, help="sim-autonuma output to replay residency from")
    sp.add_argument("--bucket", type=_duration_arg, default=1_000_000_000, help="timeline bucket (default 1s)")
    sp.add_argument("--window", type=_duration_arg, default=1_000_000_000, help="correlation window (default 1s)")
    sp.set_defaults(func=cmd_characterize)

    sp = trace_cmd("sim-autonuma", "simulate AutoNUMA tiering over the trace")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--enabled", dest="enabled", action="store_true", default=True)
    g.add_argument("--disabled", dest="enabled", action="store_false")
    sp.set_defaults(func=cmd_sim)

    sp = trace_cmd("plan", "density-ranked static object placement")
    sp.add_argument("--spill", action="store_true", help="let one object straddle DRAM and NVM")
    sp.add_argument("--dram-bytes", type=_bytes_arg, help="DRAM budget (default: usable DRAM from config)")
    sp.add_argument("--all-samples", action="store_true", help="rank by all samples, not only external ones")
    sp.set_defaults(func=cmd_plan)

    sp = trace_cmd("compare", "static plan vs simulated AutoNUMA")
    sp.add_argument("--plan-dir", type=Path, required=True)
    sp.add_argument("--sim-dir", type=Path, required=True)
    sp.add_argument("--workload", default="workload", help="label for the comparison row")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("synth", help="generate a synthetic trace")
    sp.add_argument("--preset", choices=sorted(synth.PRESETS))
    sp.add_argument("--spec", type=Path)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scale", type=float, default=1.0, help="preset sample-count multiplier")
    sp.add_argument("--tier-mode", choices=("traced", "unknown"))
    sp.add_argument("--config", type=Path)
    sp.add_argument("--out-dir", type=Path, required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("report", help="render figures and a summary from output directories")
    sp.add_argument("--in-dir", type=Path, action="append", required=True)
    sp.add_argument("--config", type=Path)
    sp.add_argument("--out-dir", type=Path, required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        max_threads()
        cfg = load_config(getattr(args, "config", None))
        summary = args.func(args, cfg)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except TierlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
