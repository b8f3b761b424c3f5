"""Plain SVG charts from the pipeline's CSV outputs.

Rendering is a pure function of the CSV text: no clock, locale or random
state reaches the output, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .errors import InputError

KINDS = ("bar", "line", "scatter", "timeline")
WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 72, 24, 40, 64
PALETTE = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1")


class SchemaError(InputError):
    def __init__(self, kind: str, missing: Sequence[str]):
        self.missing = list(missing)
        super().__init__(f"{kind} chart input is missing column(s): {', '.join(self.missing)}")


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    x: str
    ys: tuple[str, ...]
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    stacked: bool = False
    include: tuple[str, ...] | None = None  # keep only rows whose x is listed

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown chart kind {self.kind!r}")


DEFAULT_COLUMNS = {
    "bar": ("label", ("value",)),
    "line": ("x", ("y",)),
    "scatter": ("x", ("y",)),
    "timeline": ("t", ("value",)),
}


def read_table(text: str) -> tuple[list[str], list[dict[str, str]]]:
    reader = csv.DictReader(io.StringIO(text))
    rows = list(reader)
    return list(reader.fieldnames or []), rows


def _num(v: str | None) -> float | None:
    if v is None or v.strip() in ("", "NA", "nan"):
        return None
    try:
        f = float(v)
    except ValueError:
        return None
    return f if math.isfinite(f) else None


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e6 or a < 1e-3:
        return f"{v:.3g}"
    if a >= 100:
        return f"{v:.0f}"
    return f"{v:.3g}"


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    exp = math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        cap = m * 10 ** exp
        if cap >= v:
            return cap
    return 10 ** (exp + 1)


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        ]
        if title:
            self.text(WIDTH / 2, 22, title, size=14, anchor="middle")

    def text(self, x: float, y: float, s: str, size: int = 11, anchor: str = "start", rotate: bool = False) -> None:
        rot = f' transform="rotate(-90 {x:.1f} {y:.1f})"' if rotate else ""
        self.parts.append(
            f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" text-anchor="{anchor}"{rot}>{escape(s)}</text>'
        )

    def line(self, x1: float, y1: float, x2: float, y2: float, color: str = "#333333", width: float = 1) -> None:
        self.parts.append(
            f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" stroke="{color}" stroke-width="{width}"/>'
        )

    def rect(self, x: float, y: float, w: float, h: float, color: str) -> None:
        self.parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{w:.1f}" height="{h:.1f}" fill="{color}"/>')

    def polyline(self, pts: list[tuple[float, float]], color: str) -> None:
        coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
        self.parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')

    def circle(self, x: float, y: float, color: str) -> None:
        self.parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>')

    def done(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


PLOT_W = WIDTH - LEFT - RIGHT
PLOT_H = HEIGHT - TOP - BOTTOM


def _axes(c: _Canvas, spec: FigureSpec, ymax: float, xlabels: list[tuple[float, str]]) -> None:
    x0, y0 = LEFT, TOP + PLOT_H
    c.line(x0, TOP, x0, y0)
    c.line(x0, y0, x0 + PLOT_W, y0)
    for k in range(5):
        v = ymax * k / 4
        y = y0 - PLOT_H * k / 4
        c.line(x0 - 4, y, x0, y)
        c.text(x0 - 6, y + 4, _fmt(v), anchor="end")
    for x, lab in xlabels:
        c.line(x, y0, x, y0 + 4)
        c.text(x, y0 + 16, lab, anchor="middle")
    if spec.xlabel:
        c.text(x0 + PLOT_W / 2, HEIGHT - 16, spec.xlabel, anchor="middle")
    if spec.ylabel:
        c.text(16, TOP + PLOT_H / 2, spec.ylabel, anchor="middle", rotate=True)


def _legend(c: _Canvas, names: Sequence[str]) -> None:
    if len(names) < 2:
        return
    x = LEFT + 8
    for i, name in enumerate(names):
        c.rect(x, TOP + 4, 10, 10, PALETTE[i % len(PALETTE)])
        c.text(x + 14, TOP + 13, name)
        x += 20 + 7 * len(name)


def _no_data(c: _Canvas) -> str:
    c.text(WIDTH / 2, HEIGHT / 2, "no data", size=16, anchor="middle")
    return c.done()


def _numeric_ticks(lo: float, hi: float) -> list[tuple[float, str]]:
    out = []
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        out.append((LEFT + PLOT_W * k / 4, _fmt(v)))
    return out


def render(text: str, spec: FigureSpec) -> str:
    """SVG for a CSV document; raises :class:`SchemaError` when columns are absent."""
    header, rows = read_table(text)
    c = _Canvas(spec.title)
    if not header and not rows:
        return _no_data(c)
    missing = [col for col in (spec.x, *spec.ys) if col not in header]
    if missing:
        raise SchemaError(spec.kind, missing)
    if spec.include is not None:
        rows = [r for r in rows if r[spec.x] in spec.include]
    ys = [y for y in spec.ys if any(_num(r[y]) is not None for r in rows)]
    if not rows or not ys:
        return _no_data(c)
    if spec.kind == "bar":
        return _bar(c, spec, rows, ys)
    return _xy(c, spec, rows, ys)


def _bar(c: _Canvas, spec: FigureSpec, rows: list[dict[str, str]], ys: list[str]) -> str:
    vals = [[max(_num(r[y]) or 0.0, 0.0) for y in ys] for r in rows]
    top = max((sum(v) if spec.stacked else max(v)) for v in vals)
    ymax = _nice_max(top)
    n = len(rows)
    slot = PLOT_W / n
    xlabels = [(LEFT + slot * (i + 0.5), rows[i][spec.x]) for i in range(n)]
    _axes(c, spec, ymax, xlabels)
    y0 = TOP + PLOT_H
    for i, v in enumerate(vals):
        if spec.stacked:
            w = slot * 0.6
            x = LEFT + slot * i + slot * 0.2
            acc = 0.0
            for k, val in enumerate(v):
                h = PLOT_H * val / ymax
                c.rect(x, y0 - PLOT_H * acc / ymax - h, w, h, PALETTE[k % len(PALETTE)])
                acc += val
        else:
            w = slot * 0.8 / len(v)
            for k, val in enumerate(v):
                h = PLOT_H * val / ymax
                c.rect(LEFT + slot * i + slot * 0.1 + w * k, y0 - h, w, h, PALETTE[k % len(PALETTE)])
    _legend(c, ys)
    return c.done()


def _xy(c: _Canvas, spec: FigureSpec, rows: list[dict[str, str]], ys: list[str]) -> str:
    xs = [_num(r[spec.x]) for r in rows]
    pts = {y: [(x, _num(r[y])) for x, r in zip(xs, rows) if x is not None and _num(r[y]) is not None] for y in ys}
    allx = [p[0] for v in pts.values() for p in v]
    ally = [p[1] for v in pts.values() for p in v]
    if not allx:
        return _no_data(c)
    lo, hi = min(allx), max(allx)
    if hi == lo:
        hi = lo + 1
    ymax = _nice_max(max(max(ally), 0.0))
    _axes(c, spec, ymax, _numeric_ticks(lo, hi))
    y0 = TOP + PLOT_H

    def px(x: float) -> float:
        return LEFT + PLOT_W * (x - lo) / (hi - lo)

    def py(y: float) -> float:
        return y0 - PLOT_H * max(y, 0.0) / ymax

    for k, y in enumerate(ys):
        color = PALETTE[k % len(PALETTE)]
        series = sorted(pts[y]) if spec.kind != "scatter" else pts[y]
        if spec.kind == "scatter":
            for x, v in series:
                c.circle(px(x), py(v), color)
        elif spec.kind == "timeline":
            steps: list[tuple[float, float]] = []
            for i, (x, v) in enumerate(series):
                if i:
                    steps.append((px(x), steps[-1][1]))
                steps.append((px(x), py(v)))
            c.polyline(steps, color)
        else:
            c.polyline([(px(x), py(v)) for x, v in series], color)
    _legend(c, ys)
    return c.done()


def render_file(path: str | Path, spec: FigureSpec) -> str:
    return render(Path(path).read_text(encoding="utf-8"), spec)


# --------------------------------------------------------------------------
# Figure catalogue: input file name -> (output name, spec)

FIGURES: tuple[tuple[str, str, FigureSpec], ...] = (
    ("tier_split.csv", "fig3_tier_split.svg", FigureSpec(
        "bar", "metric", ("value",), "External samples and cost by tier", "", "percent",
        include=("dram_pct", "nvm_pct", "dram_cost_pct", "nvm_cost_pct"))),
    ("touch_histogram.csv", "fig4_touch_histogram.svg", FigureSpec(
        "bar", "tier", ("access_share_1", "access_share_2", "access_share_3plus"),
        "Accesses by page touch count", "tier", "share of accesses", stacked=True)),
    ("reuse_stats.csv", "fig5_reuse_stats.svg", FigureSpec(
        "bar", "scope", ("min_s", "p25_nearest_rank_s", "p50_nearest_rank_s", "p75_nearest_rank_s",
                         "max_s", "mean_s", "std_population_s"),
        "Reuse gap of two-touch pages", "", "seconds")),
    ("object_profiles.csv", "fig6_object_samples.svg", FigureSpec(
        "bar", "object_id", ("samples_dram", "samples_nvm"),
        "External samples per object", "object", "samples", stacked=True)),
    ("timeline.csv", "fig7_memory_usage.svg", FigureSpec(
        "timeline", "bucket_start_s", ("total_bytes", "dram_bytes", "nvm_bytes"),
        "Resident memory over time", "seconds", "bytes")),
    ("correlation.csv", "fig9_promotion_correlation.svg", FigureSpec(
        "scatter", "dram_loads", ("pages_promoted",),
        "DRAM loads vs pages promoted per window", "DRAM loads", "pages promoted")),
    ("comparison.csv", "fig10_comparison.svg", FigureSpec(
        "bar", "workload", ("baseline_nvm", "plan_nvm"),
        "NVM external samples: AutoNUMA vs static plan", "", "samples")),
)

SUMMARY_HEADER = (
    "workload", "baseline_nvm", "plan_nvm", "nvm_reduction_pct",
    "baseline_cycles", "plan_cycles", "cycle_delta_pct",
)


def build_report(in_dirs: Sequence[str | Path], out_dir: str | Path) -> list[str]:
    """Render every known CSV found in ``in_dirs``; returns output names."""
    out = Path(out_dir)
    written: list[str] = []
    summary: list[list[str]] = []
    for src_name, fig_name, spec in FIGURES:
        hits = [Path(d) / src_name for d in in_dirs if (Path(d) / src_name).is_file()]
        for k, path in enumerate(hits):
            name = fig_name if k == 0 else fig_name.replace(".svg", f"_{k + 1}.svg")
            (out / name).write_text(render_file(path, spec), encoding="utf-8")
            written.append(name)
            if src_name == "comparison.csv":
                _, rows = read_table(path.read_text(encoding="utf-8"))
                summary += [[r[h] for h in SUMMARY_HEADER] for r in rows]
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        w.writerows(summary)
    written.append("summary.csv")
    return written
