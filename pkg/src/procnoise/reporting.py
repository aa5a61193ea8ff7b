"""Report serialization: attack-report JSON, diffable SVG histograms,
correlation CSV, and comparison tables."""
from __future__ import annotations

import csv
import json
import math

import numpy as np

HIST_BIN_WIDTH = 0.05
HIST_BINS = 20


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(report_to_json(report))


def strip_volatile(report: dict) -> dict:
    """Copy without wall-clock fields, for replay comparisons."""
    out = dict(report)
    out.pop("wall_time_ms", None)
    return out


def histogram_svg(values, title: str) -> str:
    """Deterministic bar-chart SVG: 20 bins of width 0.05 over [0, 1]."""
    vals = np.asarray(list(values), dtype=float)
    counts, _ = np.histogram(vals, bins=np.linspace(0.0, 1.0, HIST_BINS + 1))
    width, height = 640, 400
    left, bottom, top = 50, 40, 30
    plot_w, plot_h = width - left - 20, height - bottom - top
    peak = max(int(counts.max()), 1)
    bars = []
    for i, c in enumerate(counts):
        h = plot_h * int(c) / peak
        x = left + plot_w * i / HIST_BINS
        y = top + plot_h - h
        bars.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{plot_w / HIST_BINS - 2:.1f}" '
            f'height="{h:.1f}" fill="#4878a8"><title>[{i * HIST_BIN_WIDTH:.2f},'
            f'{(i + 1) * HIST_BIN_WIDTH:.2f}): {int(c)}</title></rect>'
        )
    ticks = []
    for t in range(0, 6):
        frac = t / 5
        x = left + plot_w * frac
        ticks.append(
            f'<text x="{x:.1f}" y="{height - bottom + 18}" font-size="12" '
            f'text-anchor="middle">{frac:.1f}</text>'
        )
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{width // 2}" y="20" font-size="14" text-anchor="middle">{title}</text>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
        f'stroke="#333"/>',
        f'<text x="{left - 8}" y="{top + 10}" font-size="12" text-anchor="end">{peak}</text>',
        f'<text x="{left - 8}" y="{top + plot_h}" font-size="12" text-anchor="end">0</text>',
        *bars,
        *ticks,
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def write_correlation_csv(matrix: np.ndarray, names: list[str], path) -> None:
    """Fixed row/column order; undefined entries are written as empty cells,
    never as zeros."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + names)
        for name, row in zip(names, matrix):
            writer.writerow([name] + ["" if math.isnan(v) else repr(float(v)) for v in row])


def correlation_to_jsonable(matrix: np.ndarray, names: list[str]) -> dict:
    return {
        "names": names,
        "matrix": [[None if math.isnan(v) else float(v) for v in row] for row in matrix],
    }


def _fmt(v, digits=3) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def comparison_table(reports: list[dict]) -> str:
    """Markdown comparison of attack reports: query-limit table for
    input-specific runs, train/validation table for universal runs."""
    specific = [r for r in reports if r["spec"]["mode"] == "input_specific"]
    universal = [r for r in reports if r["spec"]["mode"] == "universal"]
    lines: list[str] = []
    if specific:
        lines += [
            "| Attack | Query Limit | Average Queries | Success Rate (%) |",
            "| --- | --- | --- | --- |",
        ]
        for r in specific:
            s = r["spec"]
            rate = None if r["success_rate"] is None else 100.0 * r["success_rate"]
            lines.append(
                f"| {s['method']}_{s['noise_kind']} | {s['budget']} | "
                f"{_fmt(r['average_queries'], 1)} | {_fmt(rate, 1)} |"
            )
        lines.append("")
    if universal:
        lines += [
            "| Attack | Budget | Train | Val. |",
            "| --- | --- | --- | --- |",
        ]
        for r in universal:
            s = r["spec"]
            lines.append(
                f"| {s['method']}_{s['noise_kind']} | {s['budget']} | "
                f"{_fmt(r['train_metric'])} | {_fmt(r['val_metric'])} |"
            )
        lines.append("")
    return "\n".join(lines)
