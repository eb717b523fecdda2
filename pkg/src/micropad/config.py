"""Application configuration: JSON config file merged with CLI flag overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .backend import BackendConfig, ConfigurationError
from .chunker import ChunkConfig
from .detections import Certainty
from .scanner import ScanConfig


@dataclass(frozen=True)
class AppConfig:
    scan: ScanConfig = field(default_factory=ScanConfig)
    chunk: ChunkConfig = field(default_factory=ChunkConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    catalog_path: str | None = None
    min_certainty: Certainty = Certainty.HIGH
    runs: int = 3
    output_dir: str = "micropad-out"
    figures: bool = True

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ConfigurationError("runs must be at least 1")


def _decimal(value: object, name: str) -> Decimal:
    try:
        return Decimal(str(value))
    except InvalidOperation as exc:
        raise ConfigurationError(f"invalid decimal for {name}: {value!r}") from exc


def _scan_config(payload: dict) -> ScanConfig:
    kwargs = {}
    if "max_file_bytes" in payload:
        kwargs["max_file_bytes"] = int(payload["max_file_bytes"])
    if "follow_symlinks" in payload:
        kwargs["follow_symlinks"] = bool(payload["follow_symlinks"])
    if "excluded_dirs" in payload:
        kwargs["excluded_dirs"] = tuple(str(d) for d in payload["excluded_dirs"])
    if "suffixes" in payload:
        kwargs["suffixes"] = tuple(str(s) for s in payload["suffixes"])
    if "basenames" in payload:
        kwargs["basenames"] = tuple(str(b) for b in payload["basenames"])
    return ScanConfig(**kwargs)


def _chunk_config(payload: dict) -> ChunkConfig:
    kwargs = {}
    for key in ("token_budget_per_chunk", "chars_per_token", "header_overhead_tokens"):
        if key in payload:
            kwargs[key] = int(payload[key])
    return ChunkConfig(**kwargs)


def _backend_config(payload: dict) -> BackendConfig:
    kwargs: dict = {}
    for key in ("mode", "endpoint_url", "model_name", "api_key_env_var", "cassette_path"):
        if key in payload:
            kwargs[key] = str(payload[key])
    for key in ("max_retries", "initial_backoff_ms"):
        if key in payload:
            kwargs[key] = int(payload[key])
    for key in ("price_per_1k_input_tokens", "price_per_1k_output_tokens"):
        if key in payload:
            kwargs[key] = _decimal(payload[key], key)
    return BackendConfig(**kwargs)


def load_app_config(path: str | Path) -> AppConfig:
    """Parse an application config file; unknown keys are rejected."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigurationError("config file must hold a JSON object")
    known = {"scan", "chunk", "backend", "catalog_path", "min_certainty", "runs", "output_dir", "figures"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    try:
        return AppConfig(
            scan=_scan_config(payload.get("scan", {})),
            chunk=_chunk_config(payload.get("chunk", {})),
            backend=_backend_config(payload.get("backend", {})),
            catalog_path=payload.get("catalog_path"),
            min_certainty=Certainty.parse(payload.get("min_certainty", "High")),
            runs=int(payload.get("runs", 3)),
            output_dir=str(payload.get("output_dir", "micropad-out")),
            figures=bool(payload.get("figures", True)),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"invalid config value: {exc}") from exc


def apply_overrides(
    config: AppConfig,
    *,
    runs: int | None = None,
    backend_mode: str | None = None,
    catalog_path: str | None = None,
    cassette_path: str | None = None,
    min_certainty: str | None = None,
    output_dir: str | None = None,
    endpoint_url: str | None = None,
    model_name: str | None = None,
    figures: bool | None = None,
) -> AppConfig:
    """CLI flags win over the config file."""
    backend = config.backend
    if backend_mode is not None:
        backend = replace(backend, mode=backend_mode)
    if cassette_path is not None:
        backend = replace(backend, cassette_path=cassette_path)
    if endpoint_url is not None:
        backend = replace(backend, endpoint_url=endpoint_url)
    if model_name is not None:
        backend = replace(backend, model_name=model_name)
    updated = replace(config, backend=backend)
    if runs is not None:
        updated = replace(updated, runs=runs)
    if catalog_path is not None:
        updated = replace(updated, catalog_path=catalog_path)
    if min_certainty is not None:
        try:
            updated = replace(updated, min_certainty=Certainty.parse(min_certainty))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
    if output_dir is not None:
        updated = replace(updated, output_dir=output_dir)
    if figures is not None:
        updated = replace(updated, figures=figures)
    return updated
