"""Merge detections into run and repository aggregates; render Markdown and JSON.

The canonical JSON rendering is byte-stable: equal aggregates always render
to identical bytes, independent of the order runs were supplied in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal

from .catalog import Catalog
from .detections import Certainty, Detection, Evidence, UsageRecord

SCHEMA_VERSION = 1

NO_PATTERNS_SENTENCE = "No pattern instances detected."


class ReportError(Exception):
    pass


class MixedRunIds(ReportError):
    pass


class DuplicateRunId(ReportError):
    pass


class MixedRepoLabels(ReportError):
    pass


@dataclass(frozen=True)
class RunResult:
    run_id: int
    repo_label: str
    detections: tuple[Detection, ...]
    usage: UsageRecord
    backend_mode: str
    model_name: str


@dataclass(frozen=True)
class PatternAggregate:
    runs_detected: frozenset[int]
    best_certainty: Certainty
    merged_evidence: tuple[Evidence, ...]
    justifications: tuple[str, ...]


@dataclass(frozen=True)
class AggregateResult:
    repo_label: str
    runs: tuple[RunResult, ...]
    per_pattern: dict[str, PatternAggregate]

    @property
    def total_cost(self) -> Decimal:
        return sum((r.usage.estimated_cost for r in self.runs), Decimal("0"))


def _dedupe_key(detection: Detection) -> tuple[str, tuple[str, ...]]:
    return detection.pattern_id, tuple(sorted(e.relative_path for e in detection.evidence))


def _merge_evidence(base: tuple[Evidence, ...], extra: tuple[Evidence, ...]) -> tuple[Evidence, ...]:
    merged = list(base)
    for item in extra:
        if item not in merged:
            merged.append(item)
    return tuple(merged)


def aggregate_run(
    detections: list[Detection],
    run_id: int,
    repo_label: str,
    usage: UsageRecord,
    backend_mode: str,
    model_name: str,
) -> RunResult:
    """Deduplicate one run's detections and order them for reporting.

    Duplicates share (pattern id, evidence-path multiset); merging keeps the
    highest certainty, unions evidence, and joins distinct justifications.
    """
    for detection in detections:
        if detection.run_id != run_id:
            raise MixedRunIds(
                f"detection for {detection.pattern_id} carries run {detection.run_id}, expected {run_id}"
            )
    merged: dict[tuple[str, tuple[str, ...]], Detection] = {}
    for detection in detections:
        key = _dedupe_key(detection)
        existing = merged.get(key)
        if existing is None:
            merged[key] = detection
            continue
        justifications = existing.justification
        if detection.justification not in justifications.split("; "):
            justifications = justifications + "; " + detection.justification
        merged[key] = Detection(
            pattern_id=existing.pattern_id,
            certainty=max(existing.certainty, detection.certainty),
            justification=justifications,
            evidence=_merge_evidence(existing.evidence, detection.evidence),
            source=existing.source,
            chunk_index=existing.chunk_index,
            run_id=run_id,
        )
    ordered = sorted(
        merged.values(), key=lambda d: (-int(d.certainty), d.pattern_id, _dedupe_key(d)[1])
    )
    return RunResult(
        run_id=run_id,
        repo_label=repo_label,
        detections=tuple(ordered),
        usage=usage,
        backend_mode=backend_mode,
        model_name=model_name,
    )


def merge_runs(runs: list[RunResult]) -> AggregateResult:
    """Union run results into the repository-level aggregate.

    Output is independent of the order runs are supplied in.
    """
    if not runs:
        raise ReportError("merge_runs requires at least one run")
    labels = {r.repo_label for r in runs}
    if len(labels) > 1:
        raise MixedRepoLabels(f"runs span repositories: {sorted(labels)}")
    run_ids = [r.run_id for r in runs]
    if len(set(run_ids)) != len(run_ids):
        raise DuplicateRunId(f"duplicate run ids in {sorted(run_ids)}")

    ordered_runs = tuple(sorted(runs, key=lambda r: r.run_id))
    per_pattern: dict[str, PatternAggregate] = {}
    seen_runs: dict[str, set[int]] = {}
    for run in ordered_runs:
        for detection in run.detections:
            pid = detection.pattern_id
            if pid not in per_pattern:
                per_pattern[pid] = PatternAggregate(
                    runs_detected=frozenset({run.run_id}),
                    best_certainty=detection.certainty,
                    merged_evidence=detection.evidence,
                    justifications=(detection.justification,),
                )
                seen_runs[pid] = {run.run_id}
                continue
            current = per_pattern[pid]
            seen_runs[pid].add(run.run_id)
            justifications = current.justifications
            if detection.justification not in justifications:
                justifications = justifications + (detection.justification,)
            per_pattern[pid] = PatternAggregate(
                runs_detected=frozenset(seen_runs[pid]),
                best_certainty=max(current.best_certainty, detection.certainty),
                merged_evidence=_merge_evidence(current.merged_evidence, detection.evidence),
                justifications=justifications,
            )
    return AggregateResult(
        repo_label=ordered_runs[0].repo_label,
        runs=ordered_runs,
        per_pattern=per_pattern,
    )


def _section_order(aggregate: AggregateResult) -> list[str]:
    return sorted(
        aggregate.per_pattern,
        key=lambda pid: (-int(aggregate.per_pattern[pid].best_certainty), pid),
    )


def render_markdown(
    aggregate: AggregateResult,
    min_certainty: Certainty = Certainty.HIGH,
    catalog: Catalog | None = None,
) -> str:
    """Human-facing report: header, summary table, and per-pattern sections."""

    def display(pid: str) -> str:
        return catalog.display_name(pid) if catalog is not None else pid

    first_run = aggregate.runs[0] if aggregate.runs else None
    lines = [
        f"# Pattern detection report: {aggregate.repo_label}",
        "",
        f"- Runs: {len(aggregate.runs)}",
        f"- Backend: {first_run.backend_mode if first_run else 'n/a'}",
        f"- Model: {first_run.model_name or 'n/a' if first_run else 'n/a'}",
        f"- Total estimated cost: {aggregate.total_cost}",
        "",
    ]
    order = _section_order(aggregate)
    if not order:
        lines.append(NO_PATTERNS_SENTENCE)
        lines.append("")
        return "\n".join(lines)

    lines.append("| Pattern | Best certainty | Runs detected |")
    lines.append("| --- | --- | --- |")
    for pid in order:
        info = aggregate.per_pattern[pid]
        runs = ", ".join(str(r) for r in sorted(info.runs_detected))
        lines.append(f"| {display(pid)} | {info.best_certainty.label} | {runs} |")
    lines.append("")

    for pid in order:
        info = aggregate.per_pattern[pid]
        if info.best_certainty < min_certainty:
            continue
        lines.append(f"## {display(pid)}")
        lines.append("")
        lines.append(f"Certainty: {info.best_certainty.label}")
        lines.append("")
        for justification in info.justifications:
            lines.append(f"- {justification}")
        lines.append("")
        for evidence in info.merged_evidence:
            location = evidence.relative_path
            if evidence.start_line is not None and evidence.end_line is not None:
                location += f" (lines {evidence.start_line}-{evidence.end_line})"
            lines.append(f"`{location}`")
            lines.append("")
            lines.append("```")
            lines.append(evidence.snippet)
            lines.append("```")
            lines.append("")
    return "\n".join(lines)


def _evidence_json(evidence: Evidence) -> dict:
    payload: dict = {"path": evidence.relative_path, "snippet": evidence.snippet}
    if evidence.start_line is not None:
        payload["start_line"] = evidence.start_line
    if evidence.end_line is not None:
        payload["end_line"] = evidence.end_line
    return payload


def _detection_json(detection: Detection) -> dict:
    return {
        "pattern_id": detection.pattern_id,
        "certainty": detection.certainty.label,
        "justification": detection.justification,
        "evidence": [_evidence_json(e) for e in detection.evidence],
        "chunk_index": detection.chunk_index,
    }


def render_json(aggregate: AggregateResult) -> str:
    """Canonical JSON: sorted keys, LF newlines, byte-stable for equal inputs."""
    first_run = aggregate.runs[0] if aggregate.runs else None
    payload = {
        "schema_version": SCHEMA_VERSION,
        "repo": aggregate.repo_label,
        "backend": first_run.backend_mode if first_run else "",
        "model": first_run.model_name if first_run else "",
        "runs": [
            {
                "run_id": run.run_id,
                "input_tokens": run.usage.input_tokens,
                "output_tokens": run.usage.output_tokens,
                "estimated_cost": float(run.usage.estimated_cost),
                "detections": [_detection_json(d) for d in run.detections],
            }
            for run in aggregate.runs
        ],
        "patterns": [
            {
                "pattern_id": pid,
                "best_certainty": info.best_certainty.label,
                "runs_detected": sorted(info.runs_detected),
                "evidence": [_evidence_json(e) for e in info.merged_evidence],
                "justifications": list(info.justifications),
            }
            for pid, info in sorted(aggregate.per_pattern.items())
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _evidence_from_json(payload: dict) -> Evidence:
    return Evidence(
        relative_path=str(payload["path"]),
        snippet=str(payload["snippet"]),
        start_line=payload.get("start_line"),
        end_line=payload.get("end_line"),
    )


def load_aggregate(text: str) -> AggregateResult:
    """Parse canonical JSON back into an aggregate (inverse of render_json)."""
    payload = json.loads(text)
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ReportError(f"unsupported schema_version: {payload.get('schema_version')!r}")
    repo = str(payload["repo"])
    backend = str(payload["backend"])
    model = str(payload["model"])
    source = "remote" if backend == "record" else (backend or "rules")
    runs = []
    for run_payload in payload["runs"]:
        run_id = int(run_payload["run_id"])
        detections = tuple(
            Detection(
                pattern_id=str(d["pattern_id"]),
                certainty=Certainty.parse(d["certainty"]),
                justification=str(d["justification"]),
                evidence=tuple(_evidence_from_json(e) for e in d.get("evidence", [])),
                source=source,
                chunk_index=int(d.get("chunk_index", 0)),
                run_id=run_id,
            )
            for d in run_payload.get("detections", [])
        )
        runs.append(
            RunResult(
                run_id=run_id,
                repo_label=repo,
                detections=detections,
                usage=UsageRecord(
                    input_tokens=int(run_payload.get("input_tokens", 0)),
                    output_tokens=int(run_payload.get("output_tokens", 0)),
                    estimated_cost=Decimal(str(run_payload.get("estimated_cost", 0))),
                ),
                backend_mode=backend,
                model_name=model,
            )
        )
    per_pattern = {
        str(p["pattern_id"]): PatternAggregate(
            runs_detected=frozenset(int(r) for r in p.get("runs_detected", [])),
            best_certainty=Certainty.parse(p["best_certainty"]),
            merged_evidence=tuple(_evidence_from_json(e) for e in p.get("evidence", [])),
            justifications=tuple(str(j) for j in p.get("justifications", [])),
        )
        for p in payload.get("patterns", [])
    }
    return AggregateResult(repo_label=repo, runs=tuple(runs), per_pattern=per_pattern)
