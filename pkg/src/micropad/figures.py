"""Figure rendering for detection reports and evaluation summaries.

All renderers write PNG files next to the textual outputs and never open a
display; the Agg backend is forced before pyplot is imported.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .catalog import Catalog  # noqa: E402
from .detections import Certainty  # noqa: E402
from .evaluation import EvaluationReport  # noqa: E402
from .report import AggregateResult  # noqa: E402

_CERTAINTY_COLORS = {
    Certainty.HIGH: "#2a9d8f",
    Certainty.MEDIUM: "#e9c46a",
    Certainty.LOW: "#e76f51",
}


def render_detection_matrix(
    aggregate: AggregateResult, out_path: str | Path, catalog: Catalog | None = None
) -> Path:
    """Pattern-by-run matrix: each cell shows the best certainty in that run."""
    out_path = Path(out_path)
    run_ids = sorted(r.run_id for r in aggregate.runs)
    patterns = sorted(aggregate.per_pattern)
    by_run: dict[int, dict[str, Certainty]] = {rid: {} for rid in run_ids}
    for run in aggregate.runs:
        for detection in run.detections:
            best = by_run[run.run_id].get(detection.pattern_id)
            if best is None or detection.certainty > best:
                by_run[run.run_id][detection.pattern_id] = detection.certainty

    height = max(2.0, 0.4 * len(patterns) + 1.5)
    width = max(4.0, 1.2 * len(run_ids) + 3.0)
    fig, ax = plt.subplots(figsize=(width, height))
    for y, pid in enumerate(patterns):
        for x, rid in enumerate(run_ids):
            certainty = by_run[rid].get(pid)
            if certainty is None:
                continue
            ax.scatter(x, y, s=260, marker="s", color=_CERTAINTY_COLORS[certainty])
            ax.annotate(
                certainty.label[0], (x, y), ha="center", va="center", fontsize=8, color="black"
            )
    labels = [catalog.display_name(p) if catalog else p for p in patterns]
    ax.set_yticks(range(len(patterns)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xticks(range(len(run_ids)))
    ax.set_xticklabels([f"run {rid}" for rid in run_ids], fontsize=8)
    ax.set_xlim(-0.5, max(len(run_ids) - 0.5, 0.5))
    ax.set_ylim(-0.5, max(len(patterns) - 0.5, 0.5))
    ax.invert_yaxis()
    ax.set_title(f"Detections per run: {aggregate.repo_label}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_precision_by_pattern(report: EvaluationReport, out_path: str | Path) -> Path:
    """Horizontal bars of per-pattern precision with the overall value marked."""
    out_path = Path(out_path)
    rows = [
        (pid, counts)
        for pid, counts in sorted(report.per_pattern.items())
        if counts.precision is not None
    ]
    fig, ax = plt.subplots(figsize=(7, max(2.0, 0.35 * len(rows) + 1.5)))
    if rows:
        names = [pid for pid, _ in rows]
        values = [float(counts.precision) for _, counts in rows]
        ax.barh(range(len(rows)), values, color="#457b9d")
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(names, fontsize=8)
        ax.invert_yaxis()
    if report.precision is not None:
        ax.axvline(float(report.precision), color="#e63946", linestyle="--", linewidth=1)
        ax.annotate(
            f"overall {float(report.precision):.3f}",
            (float(report.precision), 0.0),
            fontsize=8,
            color="#e63946",
            xytext=(4, -12),
            textcoords="offset points",
        )
    ax.set_xlim(0, 1.05)
    ax.set_xlabel("precision")
    ax.set_title("Precision by pattern")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_consistency_by_repo(report: EvaluationReport, out_path: str | Path) -> Path:
    """Bars of mean pairwise Jaccard similarity per repository."""
    out_path = Path(out_path)
    rows = sorted(report.consistency.items())
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(rows) + 2.0), 4))
    if rows:
        names = [repo for repo, _ in rows]
        values = [float(j) for _, j in rows]
        ax.bar(range(len(rows)), values, color="#2a9d8f")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(names, fontsize=8, rotation=60, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean pairwise Jaccard")
    ax.set_title("Cross-run consistency by repository")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
