import csv
import json
import subprocess
import sys

import pytest
from conftest import FIXTURES
from pipeline import STAGES, full_pipeline, read_metrics, tree_bytes

from tierlab import __version__
from tierlab.cli import main

TABLE = FIXTURES / "table_bc_kron"
TRACE = ["--samples", str(TABLE / "samples.csv"), "--allocs", str(TABLE / "allocs.csv")]


def test_validate_clean_fixture(capsys):
    assert main(["validate", *TRACE]) == 0
    assert capsys.readouterr().out.startswith("ok: ")


def test_malformed_line_exit_2_with_line_number(tmp_path, capsys):
    bad = tmp_path / "s.csv"
    bad.write_text("timestamp_ns,thread_id,addr,op,level,latency_cycles,tlb\n1,0,0x10,L,DRAM,5,HIT\n2,0,0xZZ,L,DRAM,5,HIT\n")
    assert main(["validate", "--samples", str(bad), "--allocs", str(TABLE / "allocs.csv")]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err


def test_usage_errors_exit_1(tmp_path):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["map", *TRACE]) == 1  # --out-dir missing
    assert main(["synth", "--out-dir", str(tmp_path)]) == 1  # neither preset nor spec


def test_missing_input_exit_2(tmp_path):
    assert main(["validate", "--samples", str(tmp_path / "nope.csv"), "--allocs", str(TABLE / "allocs.csv")]) == 2


def test_bad_config_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dram_capacity": 0}))
    assert main(["validate", *TRACE, "--config", str(cfg)]) == 2


def test_bad_thread_env_exit_1(monkeypatch):
    monkeypatch.setenv("TIERLAB_THREADS", "zero")
    assert main(["validate", *TRACE]) == 1


def test_version(capsys):
    assert main(["--version"]) == 0
    out = capsys.readouterr().out
    assert __version__ in out and "trace format" in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "tierlab", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "tierlab" in r.stdout


def test_characterize_writes_metric_files(tmp_path):
    out = tmp_path / "c"
    assert main(["characterize", *TRACE, "--out-dir", str(out)]) == 0
    for name in ("tier_split.csv", "touch_histogram.csv", "reuse_stats.csv", "promotions.csv", "timeline.csv",
                 "manifest.json", "config.resolved.json"):
        assert (out / name).is_file(), name
    m = read_metrics(out / "tier_split.csv")
    assert float(m["external_pct"]) == pytest.approx(49.1, abs=0.01)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "characterize"
    assert set(manifest["inputs"]) == {"samples.csv", "allocs.csv"}
    assert "tier_split.csv" in manifest["outputs"]


def test_plan_dram_budget_and_spill(tmp_path):
    out = tmp_path / "p"
    assert main(["plan", *TRACE, "--dram-bytes", "10MB", "--spill", "--out-dir", str(out)]) == 0
    m = read_metrics(out / "plan_eval.csv")
    assert int(m["dram_bytes_used"]) <= 10_000_000
    with open(out / "plan.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["tier"] for r in rows] == ["SPILL"]


def test_compare_rejects_foreign_sim_dir(tmp_path):
    d = full_pipeline(tmp_path / "a", preset="uniform_cold", scale=0.05)
    other = ["--samples", str(d["synth"] / "samples.csv"), "--allocs", str(d["synth"] / "allocs.csv")]
    assert main(["compare", *TRACE, "--plan-dir", str(d["plan"]), "--sim-dir", str(d["sim"]),
                 "--out-dir", str(tmp_path / "x")]) == 2
    assert main(["compare", *other, "--plan-dir", str(d["plan"]), "--sim-dir", str(d["sim"]),
                 "--out-dir", str(tmp_path / "y")]) == 0


def test_disabled_sim_counters_zero(tmp_path):
    d = tmp_path / "s"
    assert main(["synth", "--preset", "uniform_cold", "--scale", "0.05", "--out-dir", str(d)]) == 0
    tr = ["--samples", str(d / "samples.csv"), "--allocs", str(d / "allocs.csv")]
    assert main(["sim-autonuma", *tr, "--disabled", "--config", str(_tight(tmp_path)), "--out-dir", str(d / "sim")]) == 0
    m = read_metrics(d / "sim" / "sim_report.csv")
    assert [m[k] for k in ("pgpromote_success", "pgpromote_demoted", "pgdemote_kswapd", "pgdemote_direct")] == ["0"] * 4


def _tight(tmp_path):
    p = tmp_path / "tight.json"
    p.write_text(json.dumps({"dram_capacity": "40MB", "reserved_dram": "10MB"}))
    return p


def test_full_pipeline_small(tmp_path):
    d = full_pipeline(tmp_path, preset="bfs_kron_like", scale=0.2)
    for s in STAGES:
        assert (d[s] / "manifest.json").is_file(), s
    figs = sorted(p.name for p in d["report"].glob("*.svg"))
    assert "fig4_touch_histogram.svg" in figs and "fig10_comparison.svg" in figs
    with open(d["report"] / "summary.csv", newline="") as fh:
        (row,) = list(csv.DictReader(fh))
    assert row["workload"] == "bfs_kron_like"


def test_outputs_independent_of_cwd_and_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("TIERLAB_THREADS", "1")
    a = full_pipeline(tmp_path / "a", preset="uniform_cold", scale=0.05)
    monkeypatch.setenv("TIERLAB_THREADS", "4")
    monkeypatch.chdir(tmp_path)
    full_pipeline(tmp_path / "b", preset="uniform_cold", scale=0.05)
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    assert a["synth"].is_dir()
