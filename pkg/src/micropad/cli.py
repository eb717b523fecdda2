"""Command-line interface: scan, detect, and eval subcommands.

Exit codes are a stable contract: 0 success, 2 filesystem/input errors,
3 backend errors, 4 configuration/label errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import __version__
from .backend import BackendError, ConfigurationError
from .catalog import Catalog, CatalogError
from .config import AppConfig, apply_overrides, load_app_config
from .detections import Certainty
from .evaluation import (
    EvaluationError,
    evaluate,
    format_table,
    load_labels,
    report_to_json,
)
from .pipeline import atomic_write_text, resolve_catalog, run_detection, write_reports
from .report import load_aggregate
from .scanner import ScanError, scan_log_jsonl, scan_repository

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_CONFIG = 4

_CERTAINTY_CHOICES = ("high", "medium", "low")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="micropad",
        description="Detect microservice pattern instances from Infrastructure-as-Code artifacts.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    scan = subparsers.add_parser("scan", help="list the IaC artifacts a repository exposes")
    scan.add_argument("repo_path", help="path to a locally stored repository")
    scan.add_argument("--config", help="application config file (JSON)")
    scan.add_argument("--json", action="store_true", help="emit the scan log as JSON lines")

    detect = subparsers.add_parser("detect", help="run pattern detection over a repository")
    detect.add_argument("repo_path", help="path to a locally stored repository")
    detect.add_argument("--config", help="application config file (JSON)")
    detect.add_argument("--runs", type=int, help="number of detection runs (default 3)")
    detect.add_argument(
        "--backend", choices=("remote", "replay", "rules", "record"), help="detection backend mode"
    )
    detect.add_argument("--catalog", help="pattern catalog file (JSON)")
    detect.add_argument("--cassette", help="cassette file for replay/record modes")
    detect.add_argument("--min-certainty", choices=_CERTAINTY_CHOICES, help="report section floor")
    detect.add_argument("--out", help="output directory for report.md/report.json")
    detect.add_argument("--label", help="repository label used in reports (default: directory name)")
    detect.add_argument("--endpoint-url", help="remote endpoint URL")
    detect.add_argument("--model", help="remote model name")
    detect.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")

    evaluate_cmd = subparsers.add_parser("eval", help="score detection reports against labels")
    evaluate_cmd.add_argument(
        "--results",
        nargs="+",
        required=True,
        help="one or more output directories each holding a report.json",
    )
    evaluate_cmd.add_argument("--labels", required=True, help="ground-truth label file (JSON)")
    evaluate_cmd.add_argument("--catalog", help="pattern catalog file (JSON)")
    evaluate_cmd.add_argument("--min-certainty", choices=_CERTAINTY_CHOICES, help="certainty floor")
    evaluate_cmd.add_argument("--out", default=".", help="directory for eval.json/eval.csv")
    evaluate_cmd.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")
    return parser


def _load_config(args: argparse.Namespace) -> AppConfig:
    config = load_app_config(args.config) if getattr(args, "config", None) else AppConfig()
    return apply_overrides(
        config,
        runs=getattr(args, "runs", None),
        backend_mode=getattr(args, "backend", None),
        catalog_path=getattr(args, "catalog", None),
        cassette_path=getattr(args, "cassette", None),
        min_certainty=getattr(args, "min_certainty", None),
        output_dir=getattr(args, "out", None),
        endpoint_url=getattr(args, "endpoint_url", None),
        model_name=getattr(args, "model", None),
        figures=False if getattr(args, "no_figures", False) else None,
    )


def cmd_scan(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = scan_repository(args.repo_path, config.scan)
    if args.json:
        sys.stdout.write(scan_log_jsonl(result.log))
    else:
        for artifact in result.artifacts:
            print(f"{artifact.relative_path}  [{artifact.match.describe()}]  {artifact.byte_size} B")
        skipped = [e for e in result.log if e.action == "skipped"]
        for entry in skipped:
            print(f"skipped: {entry.path}  ({entry.reason})")
        print(f"{len(result.artifacts)} artifacts, {len(skipped)} skipped")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    config = _load_config(args)
    config.backend.validate()
    catalog = resolve_catalog(config)
    aggregate, scan, quarantined = run_detection(
        args.repo_path, config, catalog, repo_label=args.label
    )
    for name in sorted(set(quarantined)):
        print(f"warning: backend reported unknown pattern {name!r}", file=sys.stderr)
    written = write_reports(aggregate, config, catalog)
    print(f"{len(scan.artifacts)} artifacts scanned, {len(aggregate.per_pattern)} patterns detected")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _eval_csv(report) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["pattern_id", "tp", "fp", "unknown", "precision"])
    for pattern_id, counts in sorted(report.per_pattern.items()):
        precision = counts.precision
        writer.writerow(
            [
                pattern_id,
                counts.tp,
                counts.fp,
                counts.unknown,
                "" if precision is None else f"{float(precision):.6f}",
            ]
        )
    writer.writerow(
        [
            "OVERALL",
            report.true_positives,
            report.false_positives,
            report.unknown,
            "" if report.precision is None else f"{float(report.precision):.6f}",
        ]
    )
    return buffer.getvalue()


def cmd_eval(args: argparse.Namespace) -> int:
    catalog: Catalog
    if args.catalog:
        from .catalog import load_catalog

        catalog = load_catalog(args.catalog)
    else:
        from .catalog import default_catalog

        catalog = default_catalog()
    floor = Certainty.parse(args.min_certainty) if args.min_certainty else Certainty.HIGH

    aggregates = []
    for results_dir in args.results:
        report_path = Path(results_dir) / "report.json"
        if not report_path.is_file():
            raise FileNotFoundError(f"no report.json under {results_dir}")
        aggregates.append(load_aggregate(report_path.read_text(encoding="utf-8")))
    truths = load_labels(args.labels, catalog)
    report = evaluate(aggregates, truths, floor)

    print(format_table(report))
    out_dir = Path(args.out)
    json_path = out_dir / "eval.json"
    csv_path = out_dir / "eval.csv"
    atomic_write_text(json_path, report_to_json(report))
    atomic_write_text(csv_path, _eval_csv(report))
    written = [json_path, csv_path]
    if not args.no_figures:
        from .figures import render_consistency_by_repo, render_precision_by_pattern

        written.append(render_precision_by_pattern(report, out_dir / "eval_precision.png"))
        written.append(render_consistency_by_repo(report, out_dir / "eval_consistency.png"))
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"scan": cmd_scan, "detect": cmd_detect, "eval": cmd_eval}
    try:
        return handlers[args.command](args)
    except ScanError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BackendError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ConfigurationError, CatalogError, EvaluationError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
