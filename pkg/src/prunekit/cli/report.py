"""Report rendering: pareto summary of sweep tradeoff tables plus
matplotlib figures saved next to the delimited output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from prunekit.errors import ValidationError
from prunekit.search import SweepRow

MODE_COLORS = {"unpruned": "tab:red", "subset_agnostic": "tab:orange", "subset_aware": "tab:green"}

PARETO_COLUMNS = (
    "bucket_low_ms", "bucket_high_ms", "mode", "target_level", "achieved_level",
    "test_acc", "giga_ops", "gops_ratio", "latency_ms", "memory_reduction_pct",
)


@dataclass
class ParetoPoint:
    bucket_low_ms: float
    bucket_high_ms: float
    row: SweepRow
    gops_ratio: float

    @property
    def memory_reduction_pct(self) -> float:
        return self.row.achieved_level

    def label(self) -> str:
        return f"-{self.gops_ratio:.2f}x, {self.row.achieved_level:.0f}%"


def reference_giga_ops(rows: list[SweepRow]) -> float:
    unpruned = [r for r in rows if r.mode == "unpruned"]
    if unpruned:
        return unpruned[0].giga_ops
    return max(r.giga_ops for r in rows if math.isfinite(r.giga_ops))


def pareto_points(rows: list[SweepRow], buckets: int = 6) -> list[ParetoPoint]:
    """Best accuracy per latency bucket over the pruned rows, annotated with
    the op reduction versus the unpruned reference and the pruning level."""
    pruned = [r for r in rows if r.mode != "unpruned" and math.isfinite(r.test_acc)]
    if not pruned:
        raise ValidationError("no pruned rows to summarize")
    reference = reference_giga_ops(rows)
    lats = [r.latency_ms for r in pruned]
    low, high = min(lats), max(lats)
    width = (high - low) / buckets if high > low else 1.0
    points: list[ParetoPoint] = []
    for b in range(buckets):
        lo = low + b * width
        if b == buckets - 1:
            hi = high
            members = [r for r in pruned if lo - 1e-12 <= r.latency_ms <= hi + 1e-12]
        else:
            hi = low + (b + 1) * width
            members = [r for r in pruned if lo - 1e-12 <= r.latency_ms < hi]
        if not members:
            continue
        best = max(members, key=lambda r: (r.test_acc, -r.latency_ms))
        points.append(ParetoPoint(lo, hi, best, gops_ratio=reference / best.giga_ops))
    return points


def write_pareto_csv(points: list[ParetoPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PARETO_COLUMNS)
        for p in points:
            writer.writerow([
                f"{p.bucket_low_ms:.6f}", f"{p.bucket_high_ms:.6f}", p.row.mode,
                p.row.target_level, p.row.achieved_level, p.row.test_acc,
                p.row.giga_ops, f"{p.gops_ratio:.6f}", p.row.latency_ms,
                f"{p.memory_reduction_pct:.6f}",
            ])


def tradeoff_figure(rows: list[SweepRow], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in MODE_COLORS:
        pts = [r for r in rows if r.mode == mode and math.isfinite(r.test_acc)]
        if not pts:
            continue
        ax.scatter(
            [r.latency_ms for r in pts], [r.test_acc for r in pts],
            c=MODE_COLORS[mode], label=mode.replace("_", " "), s=28,
        )
    ax.set_xlabel("per-image latency (ms)")
    ax.set_ylabel("test accuracy")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pareto_figure(points: list[ParetoPoint], rows: list[SweepRow], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    unpruned = [r for r in rows if r.mode == "unpruned"]
    if unpruned:
        ax.scatter([unpruned[0].latency_ms], [unpruned[0].test_acc], c="tab:red", s=40, label="unpruned")
    xs = [p.row.latency_ms for p in points]
    ys = [p.row.test_acc for p in points]
    ax.plot(xs, ys, "o-", c="tab:green", label="pareto (best per bucket)")
    for p in points:
        ax.annotate(p.label(), (p.row.latency_ms, p.row.test_acc),
                    textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.set_xlabel("per-image latency (ms)")
    ax.set_ylabel("test accuracy")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(rows: list[SweepRow], out_dir, buckets: int = 6) -> dict:
    out = Path(out_dir)
    points = pareto_points(rows, buckets=buckets)
    write_pareto_csv(points, out / "pareto.csv")
    tradeoff_figure(rows, out / "tradeoff.png")
    pareto_figure(points, rows, out / "pareto.png")
    return {
        "pareto_csv": str(out / "pareto.csv"),
        "figures": [str(out / "tradeoff.png"), str(out / "pareto.png")],
        "points": len(points),
    }
