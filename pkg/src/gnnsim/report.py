"""Report records, derived columns, tables, and figures.

Simulation results serialize to line-delimited JSON records (one JSON
object per line, sorted keys) so sweeps stay machine-joinable. Derived
columns (latency, utilization, speedups, geometric means) are computed
by the functions here and nowhere else; re-deriving them from the raw
fields of a stored file reproduces the file byte for byte.

Record types (all carry ``record`` and ``schema_version``):

  run      one (graph, strategy, weight density) simulation
  kernel   per-kernel breakdown of a run
  speedup  dynamic-vs-static makespan ratios for one sweep cell
  geomean  geometric-mean speedups over all sweep cells
"""

from __future__ import annotations

import json
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import FormatError
from .runtime import SimReport

SCHEMA_VERSION = 1

_REQUIRED = {
    "run": {
        "run_id", "strategy", "graph", "weight_density", "total_makespan_cycles",
        "clock_mhz", "latency_ms", "n_cc", "p_sys", "n1", "n2", "visible_overheads",
        "core_busy_cycles", "core_utilization", "decisions",
        "predicted_compute_cycles", "executed_compute_cycles", "transform_cycles",
        "mode_switch_cycles", "elementwise_cycles", "analyzer_decisions", "macs",
    },
    "kernel": {
        "run_id", "strategy", "kernel_id", "kernel_type", "layer_id", "task_count",
        "makespan_cycles", "total_task_cycles", "decisions",
        "predicted_compute_cycles", "executed_compute_cycles", "mode_switch_cycles",
        "transform_cycles", "elementwise_cycles", "analyzer_decisions", "macs",
    },
    "speedup": {"graph", "weight_density", "makespans", "so_s1", "so_s2"},
    "geomean": {"so_s1", "so_s2", "cells"},
}


def _round6(x: float) -> float:
    return round(float(x), 6)


def run_record(
    run_id: str, graph: str, weight_density: float, report: SimReport, clock_mhz: float
) -> dict:
    rec = {
        "record": "run",
        "schema_version": SCHEMA_VERSION,
        "run_id": run_id,
        "strategy": report.strategy,
        "graph": graph,
        "weight_density": weight_density,
        "total_makespan_cycles": report.total_makespan,
        "clock_mhz": clock_mhz,
        "n_cc": report.n_cc,
        "p_sys": report.p_sys,
        "n1": report.n1,
        "n2": report.n2,
        "visible_overheads": report.visible_overheads,
        "core_busy_cycles": list(report.core_busy_cycles),
        "decisions": dict(report.decisions_total),
        "predicted_compute_cycles": report.predicted_compute_total,
        "executed_compute_cycles": report.executed_compute_total,
        "transform_cycles": report.transform_cycles_total,
        "mode_switch_cycles": report.mode_switch_cycles_total,
        "elementwise_cycles": report.elementwise_cycles_total,
        "analyzer_decisions": report.analyzer_decisions_total,
        "macs": report.macs_total,
    }
    return _derive_run(rec)


def _derive_run(rec: dict) -> dict:
    out = dict(rec)
    cycles = out["total_makespan_cycles"]
    out["latency_ms"] = _round6(cycles / (out["clock_mhz"] * 1e3))
    busy = out["core_busy_cycles"]
    out["core_utilization"] = [
        _round6(b / cycles) if cycles else 0.0 for b in busy
    ]
    return out


def kernel_records(run_id: str, report: SimReport) -> list[dict]:
    out = []
    for k in report.kernels:
        out.append(
            {
                "record": "kernel",
                "schema_version": SCHEMA_VERSION,
                "run_id": run_id,
                "strategy": report.strategy,
                "kernel_id": k.kernel_id,
                "kernel_type": k.kernel_type,
                "layer_id": k.layer_id,
                "task_count": k.task_count,
                "makespan_cycles": k.makespan,
                "total_task_cycles": k.total_task_cycles,
                "decisions": dict(k.decisions),
                "predicted_compute_cycles": k.predicted_compute_cycles,
                "executed_compute_cycles": k.executed_compute_cycles,
                "mode_switch_cycles": k.mode_switch_cycles,
                "transform_cycles": k.transform_cycles,
                "elementwise_cycles": k.elementwise_cycles,
                "analyzer_decisions": k.analyzer_decisions,
                "macs": k.macs,
            }
        )
    return out


def speedup_record(graph: str, weight_density: float, makespans: dict[str, int]) -> dict:
    rec = {
        "record": "speedup",
        "schema_version": SCHEMA_VERSION,
        "graph": graph,
        "weight_density": weight_density,
        "makespans": dict(sorted(makespans.items())),
    }
    return _derive_speedup(rec)


def _derive_speedup(rec: dict) -> dict:
    out = dict(rec)
    spans = out["makespans"]
    dyn = spans.get("dynamic")
    for col, base in (("so_s1", "s1"), ("so_s2", "s2")):
        if dyn and spans.get(base):
            out[col] = _round6(spans[base] / dyn)
        else:
            out[col] = None
    return out


def geomean_record(speedups: list[dict]) -> dict:
    rec = {
        "record": "geomean",
        "schema_version": SCHEMA_VERSION,
        "cells": len(speedups),
    }
    return _derive_geomean(rec, speedups)


def _derive_geomean(rec: dict, speedups: list[dict]) -> dict:
    out = dict(rec)
    for col in ("so_s1", "so_s2"):
        vals = [s[col] for s in speedups if s.get(col)]
        out[col] = _round6(math.exp(sum(math.log(v) for v in vals) / len(vals))) if vals else None
    return out


def validate_record(rec: dict) -> None:
    kind = rec.get("record")
    if kind not in _REQUIRED:
        raise FormatError(f"unknown record type {kind!r}")
    if rec.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {rec.get('schema_version')!r}")
    missing = _REQUIRED[kind] - rec.keys()
    if missing:
        raise FormatError(f"{kind} record is missing fields: {sorted(missing)}")


def recompute_derived(records: list[dict]) -> list[dict]:
    """Recompute every derived column from the raw fields.

    Feeding a loaded record set through this and re-serializing must
    reproduce the original file exactly.
    """
    out = []
    speedups = []
    for rec in records:
        if rec["record"] == "run":
            out.append(_derive_run(rec))
        elif rec["record"] == "speedup":
            fresh = _derive_speedup(rec)
            speedups.append(fresh)
            out.append(fresh)
        elif rec["record"] == "geomean":
            out.append(_derive_geomean(rec, speedups))
        else:
            out.append(dict(rec))
    return out


def dump_records(records: list[dict]) -> str:
    for rec in records:
        validate_record(rec)
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in records)


def write_records(records: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_records(records))


def load_records(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    for rec in records:
        validate_record(rec)
    return records


# ---------------------------------------------------------------------------
# Human-readable tables
# ---------------------------------------------------------------------------


def _format_table(headers: list[str], rows: list[list]) -> str:
    cells = [headers] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def runs_table(records: list[dict]) -> str:
    rows = []
    for rec in records:
        if rec["record"] != "run":
            continue
        dec = rec["decisions"]
        rows.append(
            [
                rec["graph"],
                f"{rec['weight_density']:g}",
                rec["strategy"],
                rec["total_makespan_cycles"],
                f"{rec['latency_ms']:.6f}",
                dec["gemm"],
                dec["spdmm"],
                dec["spmm"],
                dec["skip"],
            ]
        )
    return _format_table(
        ["graph", "w_density", "strategy", "makespan", "latency_ms",
         "gemm", "spdmm", "spmm", "skip"],
        rows,
    )


def speedups_table(records: list[dict]) -> str:
    rows = []
    for rec in records:
        if rec["record"] == "speedup":
            rows.append(
                [
                    rec["graph"],
                    f"{rec['weight_density']:g}",
                    f"{rec['so_s1']:.4f}" if rec["so_s1"] else "-",
                    f"{rec['so_s2']:.4f}" if rec["so_s2"] else "-",
                ]
            )
        elif rec["record"] == "geomean":
            rows.append(
                [
                    "geomean",
                    "-",
                    f"{rec['so_s1']:.4f}" if rec["so_s1"] else "-",
                    f"{rec['so_s2']:.4f}" if rec["so_s2"] else "-",
                ]
            )
    return _format_table(["graph", "w_density", "SO-S1", "SO-S2"], rows)


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def render_run_figure(run_rec: dict, kernel_recs: list[dict], path) -> None:
    """Per-kernel cycle and decision breakdown for a single run."""
    kernel_recs = [k for k in kernel_recs if k["run_id"] == run_rec["run_id"]]
    labels = [f"{k['kernel_id']}\n{k['kernel_type'][:3]}" for k in kernel_recs]
    x = range(len(kernel_recs))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(x, [k["makespan_cycles"] for k in kernel_recs], color="#4878cf")
    ax1.set_xticks(list(x), labels, fontsize=8)
    ax1.set_ylabel("kernel makespan (cycles)")
    ax1.set_title(f"{run_rec['run_id']}: per-kernel cycles")
    bottom = [0] * len(kernel_recs)
    for key, color in (
        ("gemm", "#4878cf"), ("spdmm", "#ee854a"), ("spmm", "#6acc64"), ("skip", "#d65f5f"),
    ):
        vals = [k["decisions"][key] for k in kernel_recs]
        ax2.bar(x, vals, bottom=bottom, label=key, color=color)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax2.set_xticks(list(x), labels, fontsize=8)
    ax2.set_ylabel("pair decisions")
    ax2.set_title("primitive mix")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_compare_figure(records: list[dict], path) -> None:
    """Speedup-vs-weight-density curves plus makespan bars per strategy."""
    speedups = [r for r in records if r["record"] == "speedup"]
    runs = [r for r in records if r["record"] == "run"]
    graphs = sorted({r["graph"] for r in speedups})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for graph in graphs:
        cells = sorted(
            (r for r in speedups if r["graph"] == graph),
            key=lambda r: -r["weight_density"],
        )
        dens = [r["weight_density"] for r in cells]
        for col, style in (("so_s1", "o-"), ("so_s2", "s--")):
            vals = [r[col] for r in cells]
            if any(v is not None for v in vals):
                label = f"{graph} {col.replace('so_', 'SO-').upper()}"
                ax1.plot(dens, vals, style, label=label)
    ax1.axhline(1.0, color="gray", lw=0.8)
    ax1.set_xlabel("weight density")
    ax1.set_ylabel("speedup over static mapping")
    ax1.set_xscale("log")
    ax1.invert_xaxis()
    ax1.set_title("dynamic mapping speedup")
    ax1.legend(fontsize=7)
    strategies = sorted({r["strategy"] for r in runs})
    densities = sorted({r["weight_density"] for r in runs}, reverse=True)
    width = 0.8 / max(1, len(strategies))
    for s_idx, strategy in enumerate(strategies):
        xs, ys = [], []
        for d_idx, dens in enumerate(densities):
            cells = [
                r["total_makespan_cycles"]
                for r in runs
                if r["strategy"] == strategy and r["weight_density"] == dens
            ]
            if cells:
                xs.append(d_idx + s_idx * width)
                ys.append(sum(cells))
        ax2.bar(xs, ys, width=width, label=strategy)
    ax2.set_xticks(
        [i + 0.4 - width / 2 for i in range(len(densities))],
        [f"{d:g}" for d in densities],
    )
    ax2.set_xlabel("weight density")
    ax2.set_ylabel("makespan (cycles)")
    ax2.set_title("makespan by strategy")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
