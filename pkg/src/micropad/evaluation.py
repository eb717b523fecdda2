"""Precision and cross-run consistency against manual ground-truth labels.

Counting is per detection event: one event per (repository, run, pattern) at
or above the certainty floor. Events whose pattern has a Present label are
true positives, Absent labels are false positives, and unlabeled events are
excluded from the precision ratio but surfaced as a warning count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path

from .catalog import Catalog, UnknownPattern, lookup
from .detections import Certainty
from .report import AggregateResult, RunResult


class EvaluationError(Exception):
    pass


class LabelParseError(EvaluationError):
    pass


class DuplicateLabel(EvaluationError):
    def __init__(self, repo: str, pattern_id: str) -> None:
        super().__init__(f"duplicate label for ({repo}, {pattern_id})")
        self.repo = repo
        self.pattern_id = pattern_id


class MissingGroundTruth(EvaluationError):
    def __init__(self, repo: str) -> None:
        super().__init__(f"no ground-truth labels for repository: {repo}")
        self.repo = repo


class FewerThanTwoRuns(EvaluationError):
    pass


@dataclass(frozen=True)
class GroundTruth:
    repo_label: str
    labels: dict[str, bool]  # pattern_id -> Present (True) / Absent (False)


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    unknown: int = 0

    def add(self, verdict: bool | None) -> "Counts":
        if verdict is True:
            return Counts(self.tp + 1, self.fp, self.unknown)
        if verdict is False:
            return Counts(self.tp, self.fp + 1, self.unknown)
        return Counts(self.tp, self.fp, self.unknown + 1)

    @property
    def precision(self) -> Fraction | None:
        if self.tp + self.fp == 0:
            return None
        return Fraction(self.tp, self.tp + self.fp)


@dataclass(frozen=True)
class EvaluationReport:
    total_detections: int
    true_positives: int
    false_positives: int
    unknown: int
    precision: Fraction | None
    per_pattern: dict[str, Counts] = field(default_factory=dict)
    per_repo: dict[str, Counts] = field(default_factory=dict)
    consistency: dict[str, Fraction] = field(default_factory=dict)


def load_labels(path: str | Path, catalog: Catalog) -> list[GroundTruth]:
    """Parse a label file: {"labels": [{"repo", "pattern_id", "present"}...]}."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LabelParseError(f"cannot read labels {path}: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("labels"), list):
        raise LabelParseError("label file must hold a top-level 'labels' array")
    by_repo: dict[str, dict[str, bool]] = {}
    for entry in payload["labels"]:
        if not isinstance(entry, dict):
            raise LabelParseError("label entries must be objects")
        try:
            repo = str(entry["repo"])
            pattern_id = str(entry["pattern_id"])
            present = bool(entry["present"])
        except KeyError as exc:
            raise LabelParseError(f"label entry missing field {exc}") from exc
        lookup(catalog, pattern_id)  # raises UnknownPattern for ids outside the catalog
        labels = by_repo.setdefault(repo, {})
        if pattern_id in labels:
            raise DuplicateLabel(repo, pattern_id)
        labels[pattern_id] = present
    return [GroundTruth(repo, labels) for repo, labels in by_repo.items()]


def _run_pattern_sets(runs: tuple[RunResult, ...], floor: Certainty) -> list[set[str]]:
    sets = []
    for run in sorted(runs, key=lambda r: r.run_id):
        sets.append({d.pattern_id for d in run.detections if d.certainty >= floor})
    return sets


def consistency(
    runs: tuple[RunResult, ...] | list[RunResult],
    certainty_floor: Certainty = Certainty.LOW,
) -> Fraction:
    """Mean pairwise Jaccard similarity of per-run pattern-id sets.

    Two empty sets count as perfectly consistent (similarity 1).
    """
    if len(runs) < 2:
        raise FewerThanTwoRuns(f"consistency needs at least two runs, got {len(runs)}")
    sets = _run_pattern_sets(tuple(runs), certainty_floor)
    total = Fraction(0)
    pairs = 0
    for left, right in combinations(sets, 2):
        pairs += 1
        union = left | right
        if not union:
            total += 1
        else:
            total += Fraction(len(left & right), len(union))
    return total / pairs


def evaluate(
    results: list[AggregateResult],
    truths: list[GroundTruth],
    certainty_floor: Certainty = Certainty.HIGH,
) -> EvaluationReport:
    """Score detection events against labels; see module docstring for counting."""
    truth_by_repo = {t.repo_label: t for t in truths}
    total = Counts()
    per_pattern: dict[str, Counts] = {}
    per_repo: dict[str, Counts] = {}
    consistency_by_repo: dict[str, Fraction] = {}

    for aggregate in sorted(results, key=lambda a: a.repo_label):
        truth = truth_by_repo.get(aggregate.repo_label)
        if truth is None:
            raise MissingGroundTruth(aggregate.repo_label)
        repo_counts = per_repo.get(aggregate.repo_label, Counts())
        for run in sorted(aggregate.runs, key=lambda r: r.run_id):
            events: set[str] = set()
            for detection in run.detections:
                if detection.certainty >= certainty_floor:
                    events.add(detection.pattern_id)
            for pattern_id in sorted(events):
                verdict = truth.labels.get(pattern_id)
                total = total.add(verdict)
                repo_counts = repo_counts.add(verdict)
                per_pattern[pattern_id] = per_pattern.get(pattern_id, Counts()).add(verdict)
        per_repo[aggregate.repo_label] = repo_counts
        if len(aggregate.runs) >= 2:
            consistency_by_repo[aggregate.repo_label] = consistency(
                aggregate.runs, certainty_floor
            )

    return EvaluationReport(
        total_detections=total.tp + total.fp + total.unknown,
        true_positives=total.tp,
        false_positives=total.fp,
        unknown=total.unknown,
        precision=total.precision,
        per_pattern=per_pattern,
        per_repo=per_repo,
        consistency=consistency_by_repo,
    )


def report_to_json(report: EvaluationReport) -> str:
    """Serialize an evaluation report as deterministic JSON."""

    def counts_payload(counts: Counts) -> dict:
        precision = counts.precision
        return {
            "tp": counts.tp,
            "fp": counts.fp,
            "unknown": counts.unknown,
            "precision": None if precision is None else float(precision),
        }

    payload = {
        "total_detections": report.total_detections,
        "true_positives": report.true_positives,
        "false_positives": report.false_positives,
        "unknown": report.unknown,
        "precision": None if report.precision is None else float(report.precision),
        "per_pattern": {pid: counts_payload(c) for pid, c in sorted(report.per_pattern.items())},
        "per_repo": {repo: counts_payload(c) for repo, c in sorted(report.per_repo.items())},
        "consistency": {repo: float(j) for repo, j in sorted(report.consistency.items())},
    }
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def format_table(report: EvaluationReport) -> str:
    """Human-readable evaluation summary for standard output."""
    lines = []
    overall = "undefined" if report.precision is None else f"{float(report.precision):.3f}"
    lines.append(
        f"detections={report.total_detections} tp={report.true_positives} "
        f"fp={report.false_positives} unknown={report.unknown} precision={overall}"
    )
    if report.per_repo:
        lines.append("")
        lines.append(f"{'repository':<24} {'tp':>4} {'fp':>4} {'unk':>4} {'precision':>10} {'jaccard':>8}")
        for repo, counts in sorted(report.per_repo.items()):
            precision = counts.precision
            ptext = "undef" if precision is None else f"{float(precision):.3f}"
            jaccard = report.consistency.get(repo)
            jtext = "-" if jaccard is None else f"{float(jaccard):.3f}"
            lines.append(
                f"{repo:<24} {counts.tp:>4} {counts.fp:>4} {counts.unknown:>4} {ptext:>10} {jtext:>8}"
            )
    if report.per_pattern:
        lines.append("")
        lines.append(f"{'pattern':<32} {'tp':>4} {'fp':>4} {'unk':>4} {'precision':>10}")
        for pattern_id, counts in sorted(report.per_pattern.items()):
            precision = counts.precision
            ptext = "undef" if precision is None else f"{float(precision):.3f}"
            lines.append(
                f"{pattern_id:<32} {counts.tp:>4} {counts.fp:>4} {counts.unknown:>4} {ptext:>10}"
            )
    return "\n".join(lines)


# Re-exported for callers that format labels and need the same resolution.
__all__ = [
    "Counts",
    "DuplicateLabel",
    "EvaluationError",
    "EvaluationReport",
    "FewerThanTwoRuns",
    "GroundTruth",
    "LabelParseError",
    "MissingGroundTruth",
    "UnknownPattern",
    "consistency",
    "evaluate",
    "format_table",
    "load_labels",
    "report_to_json",
]
