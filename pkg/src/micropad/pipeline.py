"""End-to-end detection pipeline: scan, chunk, detect per run, aggregate, write.

Requests within one run are issued strictly sequentially in chunk order, and
the run identifier feeds the prompt so separate runs produce distinct
requests. Nothing is written until every run has completed; report files are
written atomically.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .backend import BackendRequest, detect
from .catalog import Catalog, default_catalog, load_catalog
from .chunker import build_prompt, chunk_artifacts
from .config import AppConfig
from .detections import UsageRecord
from .report import AggregateResult, RunResult, aggregate_run, merge_runs, render_json, render_markdown
from .scanner import ScanResult, scan_repository


@dataclass
class DetectionOutput:
    aggregate: AggregateResult
    scan: ScanResult
    quarantined: list[str]
    written: list[Path]


def resolve_catalog(config: AppConfig) -> Catalog:
    if config.catalog_path:
        return load_catalog(config.catalog_path)
    return default_catalog()


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp_name, path)
    except OSError:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def run_detection(
    repo_path: str | Path,
    config: AppConfig,
    catalog: Catalog,
    repo_label: str | None = None,
    sleep=None,
) -> tuple[AggregateResult, ScanResult, list[str]]:
    """Execute all configured runs over one repository and merge the results."""
    label = repo_label or Path(repo_path).resolve().name
    scan = scan_repository(repo_path, config.scan)
    chunks = chunk_artifacts(scan.artifacts, config.chunk)

    quarantined: list[str] = []
    runs: list[RunResult] = []
    detect_kwargs = {} if sleep is None else {"sleep": sleep}
    for run_id in range(1, config.runs + 1):
        detections = []
        usage = UsageRecord()
        for chunk in chunks:
            prompt = build_prompt(chunk, catalog, run_seed=run_id)
            request = BackendRequest.create(prompt, run_id=run_id, chunk_index=chunk.index)
            result = detect(request, config.backend, catalog, **detect_kwargs)
            detections.extend(result.detections)
            usage = usage + result.usage
            quarantined.extend(result.quarantined)
        runs.append(
            aggregate_run(
                detections,
                run_id=run_id,
                repo_label=label,
                usage=usage,
                backend_mode=config.backend.mode,
                model_name=config.backend.model_name,
            )
        )
    return merge_runs(runs), scan, quarantined


def write_reports(
    aggregate: AggregateResult,
    config: AppConfig,
    catalog: Catalog,
    out_dir: str | Path | None = None,
) -> list[Path]:
    """Write report.md and report.json (and the summary figure) to the output dir."""
    target = Path(out_dir if out_dir is not None else config.output_dir)
    written: list[Path] = []
    markdown = render_markdown(aggregate, config.min_certainty, catalog)
    canonical = render_json(aggregate)
    md_path = target / "report.md"
    json_path = target / "report.json"
    atomic_write_text(md_path, markdown)
    atomic_write_text(json_path, canonical)
    written.extend([md_path, json_path])
    if config.figures and aggregate.per_pattern:
        from .figures import render_detection_matrix

        written.append(render_detection_matrix(aggregate, target / "report.png", catalog))
    return written
