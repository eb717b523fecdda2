"""Detection backend contract and its three implementations.

One request/response contract serves every mode: *remote* posts the prompt to
an HTTP chat-completion endpoint, *replay* answers from a recorded cassette
keyed by request digest, *rules* runs the offline heuristic engine, and
*record* behaves like remote while appending each raw response to a cassette
for later replay.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Callable

import requests

from .catalog import Catalog, UnknownPattern, lookup
from .chunker import PromptChunk, PromptText, Slice, estimate_tokens, ChunkConfig
from .detections import Certainty, Detection, Evidence, UsageRecord, usage_cost
from .rules import rules_detect

DEFAULT_API_KEY_ENV = "MICROPAD_API_KEY"

# Separator mixed into the request digest between system and user text.
_DIGEST_SEPARATOR = "\n\u0000\n"

_JSON_REMINDER = (
    "\n\nYour previous reply was not valid JSON. "
    "Respond with valid JSON only, matching the required schema exactly."
)

_SLICE_HEADER_RE = re.compile(r"^FILE (?P<path>.+) LINES (?P<start>\d+)-(?P<end>\d+)$")


class BackendError(Exception):
    """Base class for detection backend failures."""


class BackendUnavailable(BackendError):
    pass


class RateLimited(BackendError):
    pass


class AuthFailure(BackendError):
    pass


class ResponseUnparseable(BackendError):
    pass


class CassetteMiss(BackendError):
    def __init__(self, request_digest: str) -> None:
        super().__init__(f"no cassette entry for request digest {request_digest}")
        self.request_digest = request_digest


class CassetteWriteError(BackendError):
    pass


class ParseFailure(Exception):
    """Raw backend output did not satisfy the response schema."""


class ConfigurationError(Exception):
    """Backend configuration does not satisfy the selected mode."""


@dataclass(frozen=True)
class BackendConfig:
    mode: str = "rules"  # remote | replay | rules | record
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env_var: str = DEFAULT_API_KEY_ENV
    max_retries: int = 3
    initial_backoff_ms: int = 2000
    cassette_path: str = ""
    price_per_1k_input_tokens: Decimal = Decimal("0")
    price_per_1k_output_tokens: Decimal = Decimal("0")

    def validate(self) -> None:
        if self.mode not in ("remote", "replay", "rules", "record"):
            raise ConfigurationError(f"unknown backend mode: {self.mode!r}")
        if self.mode in ("remote", "record"):
            if not self.endpoint_url:
                raise ConfigurationError(f"{self.mode} mode requires endpoint_url")
            if not self.model_name:
                raise ConfigurationError(f"{self.mode} mode requires model_name")
            if not os.environ.get(self.api_key_env_var):
                raise ConfigurationError(
                    f"{self.mode} mode requires the {self.api_key_env_var} environment variable"
                )
        if self.mode in ("replay", "record") and not self.cassette_path:
            raise ConfigurationError(f"{self.mode} mode requires cassette_path")
        if self.max_retries < 1:
            raise ConfigurationError("max_retries must be at least 1")
        if self.initial_backoff_ms < 0:
            raise ConfigurationError("initial_backoff_ms must not be negative")


def request_digest(prompt: PromptText) -> str:
    payload = prompt.system_text + _DIGEST_SEPARATOR + prompt.user_text
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendRequest:
    prompt: PromptText
    run_id: int
    chunk_index: int
    request_digest: str

    @classmethod
    def create(cls, prompt: PromptText, run_id: int, chunk_index: int) -> "BackendRequest":
        return cls(prompt, run_id, chunk_index, request_digest(prompt))


@dataclass(frozen=True)
class ParsedResponse:
    detections: tuple[Detection, ...]
    quarantined: tuple[str, ...]


@dataclass(frozen=True)
class DetectionResult:
    detections: tuple[Detection, ...]
    usage: UsageRecord
    quarantined: tuple[str, ...] = ()


def _first_json_object(raw_text: str) -> dict:
    """First JSON object embedded in the text, tolerating prose and fences."""
    decoder = json.JSONDecoder()
    index = raw_text.find("{")
    while index != -1:
        try:
            value, _ = decoder.raw_decode(raw_text, index)
        except json.JSONDecodeError:
            index = raw_text.find("{", index + 1)
            continue
        if isinstance(value, dict):
            return value
        index = raw_text.find("{", index + 1)
    raise ParseFailure("no JSON object found in response")


def _parse_evidence(raw: object) -> tuple[Evidence, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ParseFailure("evidence must be an array")
    entries: list[Evidence] = []
    for item in raw:
        if not isinstance(item, dict):
            raise ParseFailure("evidence entries must be objects")
        path = item.get("path")
        snippet = item.get("snippet")
        if not isinstance(path, str) or not path:
            raise ParseFailure("evidence entry missing path")
        if not isinstance(snippet, str) or not snippet:
            raise ParseFailure("evidence entry missing snippet")
        start = item.get("start_line")
        end = item.get("end_line")
        if start is not None and not isinstance(start, int):
            raise ParseFailure("start_line must be an integer")
        if end is not None and not isinstance(end, int):
            raise ParseFailure("end_line must be an integer")
        if isinstance(start, int) and isinstance(end, int) and start > end:
            start, end = end, start
        entries.append(Evidence(path, snippet, start, end))
    return tuple(entries)


def parse_response(raw_text: str, catalog: Catalog) -> ParsedResponse:
    """Normalize raw backend output into detections.

    Entries naming patterns outside the catalog are quarantined rather than
    silently dropped; any other schema violation raises ParseFailure.
    """
    payload = _first_json_object(raw_text)
    raw_detections = payload.get("detections")
    if not isinstance(raw_detections, list):
        raise ParseFailure("response must contain a 'detections' array")
    detections: list[Detection] = []
    quarantined: list[str] = []
    for entry in raw_detections:
        if not isinstance(entry, dict):
            raise ParseFailure("detection entries must be objects")
        name = entry.get("pattern")
        if not isinstance(name, str) or not name.strip():
            raise ParseFailure("detection entry missing pattern name")
        raw_certainty = entry.get("certainty")
        if not isinstance(raw_certainty, str):
            raise ParseFailure("detection entry missing certainty")
        try:
            certainty = Certainty.parse(raw_certainty)
        except ValueError as exc:
            raise ParseFailure(str(exc)) from exc
        justification = entry.get("justification")
        if not isinstance(justification, str) or not justification.strip():
            raise ParseFailure("detection entry missing justification")
        evidence = _parse_evidence(entry.get("evidence"))
        try:
            descriptor = lookup(catalog, name)
        except UnknownPattern:
            quarantined.append(name)
            continue
        if not evidence and certainty is not Certainty.LOW:
            raise ParseFailure(
                f"detection '{name}' at {certainty.label} certainty carries no evidence"
            )
        detections.append(
            Detection(
                pattern_id=descriptor.id,
                certainty=certainty,
                justification=justification.strip(),
                evidence=evidence,
            )
        )
    return ParsedResponse(tuple(detections), tuple(quarantined))


def slices_from_user_text(user_text: str) -> tuple[Slice, ...]:
    """Rebuild prompt slices from the delimited user text.

    Inverse of the prompt assembly up to one trailing newline per slice; lets
    the rules engine run from the same request contract as the other modes.
    """
    slices: list[Slice] = []
    header: re.Match[str] | None = None
    buffer: list[str] = []

    def flush() -> None:
        if header is None:
            return
        slices.append(
            Slice(
                relative_path=header.group("path"),
                start_line=int(header.group("start")),
                end_line=int(header.group("end")),
                text="".join(buffer),
            )
        )

    for line in user_text.splitlines(keepends=True):
        match = _SLICE_HEADER_RE.match(line.rstrip("\n"))
        if match:
            flush()
            header = match
            buffer = []
        elif header is not None:
            buffer.append(line)
    flush()
    return tuple(slices)


# --- cassette storage ----------------------------------------------------


def load_cassette(path: str | Path) -> dict[str, str]:
    """Map of request digest to recorded raw response."""
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        return {}
    except (OSError, json.JSONDecodeError) as exc:
        raise CassetteWriteError(f"unreadable cassette {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise CassetteWriteError(f"cassette {path} must hold a JSON array")
    return {
        str(e["request_digest"]): str(e["raw_response"])
        for e in entries
        if isinstance(e, dict)
    }


def append_cassette(path: str | Path, digest: str, model: str, raw_response: str) -> None:
    path = Path(path)
    try:
        if path.exists():
            entries = json.loads(path.read_text(encoding="utf-8"))
            if not isinstance(entries, list):
                raise CassetteWriteError(f"cassette {path} must hold a JSON array")
        else:
            entries = []
        entries.append(
            {"request_digest": digest, "model": model, "raw_response": raw_response}
        )
        path.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise CassetteWriteError(f"cannot write cassette {path}: {exc}") from exc


# --- mode implementations -------------------------------------------------

_TOKEN_ESTIMATE_CONFIG = ChunkConfig()


def _estimated_usage(request: BackendRequest, response_text: str, config: BackendConfig) -> UsageRecord:
    input_tokens = estimate_tokens(
        request.prompt.system_text + request.prompt.user_text, _TOKEN_ESTIMATE_CONFIG
    )
    output_tokens = estimate_tokens(response_text, _TOKEN_ESTIMATE_CONFIG)
    return UsageRecord(
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        estimated_cost=usage_cost(
            input_tokens,
            output_tokens,
            config.price_per_1k_input_tokens,
            config.price_per_1k_output_tokens,
        ),
    )


def _finalize(
    parsed: ParsedResponse, request: BackendRequest, source: str, usage: UsageRecord
) -> DetectionResult:
    stamped = tuple(
        Detection(
            pattern_id=d.pattern_id,
            certainty=d.certainty,
            justification=d.justification,
            evidence=d.evidence,
            source=source,
            chunk_index=request.chunk_index,
            run_id=request.run_id,
        )
        for d in parsed.detections
    )
    return DetectionResult(stamped, usage, parsed.quarantined)


def _replay_detect(request: BackendRequest, config: BackendConfig, catalog: Catalog) -> DetectionResult:
    cassette = load_cassette(config.cassette_path)
    raw = cassette.get(request.request_digest)
    if raw is None:
        raise CassetteMiss(request.request_digest)
    try:
        parsed = parse_response(raw, catalog)
    except ParseFailure as exc:
        raise ResponseUnparseable(f"recorded response unparseable: {exc}") from exc
    return _finalize(parsed, request, "replay", _estimated_usage(request, raw, config))


def _rules_detect(request: BackendRequest, config: BackendConfig, catalog: Catalog) -> DetectionResult:
    chunk = PromptChunk(
        index=request.chunk_index,
        slices=slices_from_user_text(request.prompt.user_text),
        estimated_tokens=0,
    )
    detections = rules_detect(chunk, catalog)
    parsed = ParsedResponse(tuple(detections), ())
    return _finalize(parsed, request, "rules", _estimated_usage(request, "", config))


class _RemoteClient:
    """Chat-completion HTTP client with retry and exponential backoff."""

    def __init__(self, config: BackendConfig, sleep: Callable[[float], None]) -> None:
        self.config = config
        self.sleep = sleep
        self.api_key = os.environ.get(config.api_key_env_var, "")

    def complete(self, system_text: str, user_text: str) -> tuple[str, dict]:
        """POST one prompt; returns (response text, usage object)."""
        body = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        }
        headers = {
            "Authorization": f"Bearer {self.api_key}",
            "Content-Type": "application/json",
        }
        backoff_s = self.config.initial_backoff_ms / 1000.0
        last_error = "no attempts made"
        for attempt in range(self.config.max_retries):
            if attempt > 0:
                self.sleep(backoff_s)
                backoff_s *= 2
            try:
                response = requests.post(
                    self.config.endpoint_url, json=body, headers=headers, timeout=120
                )
            except requests.RequestException as exc:
                last_error = f"network error: {exc}"
                continue
            if response.status_code in (401, 403):
                raise AuthFailure(f"authentication rejected (HTTP {response.status_code})")
            if response.status_code == 429:
                last_error = "HTTP 429"
                continue
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendUnavailable(f"unexpected HTTP {response.status_code}")
            payload = response.json()
            try:
                text = payload["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise BackendUnavailable(f"malformed completion payload: {exc}") from exc
            usage = payload.get("usage") if isinstance(payload.get("usage"), dict) else {}
            return str(text), usage
        if last_error == "HTTP 429":
            raise RateLimited(f"rate limited after {self.config.max_retries} attempts")
        raise BackendUnavailable(f"backend unavailable after {self.config.max_retries} attempts: {last_error}")


def _remote_usage(request: BackendRequest, usage_obj: dict, text: str, config: BackendConfig) -> UsageRecord:
    estimated = _estimated_usage(request, text, config)
    input_tokens = usage_obj.get("prompt_tokens", estimated.input_tokens)
    output_tokens = usage_obj.get("completion_tokens", estimated.output_tokens)
    if not isinstance(input_tokens, int) or input_tokens < 0:
        input_tokens = estimated.input_tokens
    if not isinstance(output_tokens, int) or output_tokens < 0:
        output_tokens = estimated.output_tokens
    return UsageRecord(
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        estimated_cost=usage_cost(
            input_tokens,
            output_tokens,
            config.price_per_1k_input_tokens,
            config.price_per_1k_output_tokens,
        ),
    )


def _remote_detect(
    request: BackendRequest,
    config: BackendConfig,
    catalog: Catalog,
    sleep: Callable[[float], None],
    record: bool,
) -> DetectionResult:
    client = _RemoteClient(config, sleep)
    text, usage_obj = client.complete(request.prompt.system_text, request.prompt.user_text)
    usage = _remote_usage(request, usage_obj, text, config)
    try:
        parsed = parse_response(text, catalog)
    except ParseFailure:
        # One re-ask with an explicit JSON-only reminder before giving up.
        text, usage_obj = client.complete(
            request.prompt.system_text + _JSON_REMINDER, request.prompt.user_text
        )
        usage = usage + _remote_usage(request, usage_obj, text, config)
        try:
            parsed = parse_response(text, catalog)
        except ParseFailure as exc:
            raise ResponseUnparseable(str(exc)) from exc
    if record:
        append_cassette(config.cassette_path, request.request_digest, config.model_name, text)
    return _finalize(parsed, request, "remote", usage)


def detect(
    request: BackendRequest,
    config: BackendConfig,
    catalog: Catalog,
    *,
    sleep: Callable[[float], None] = time.sleep,
) -> DetectionResult:
    """Dispatch one request to the configured backend mode."""
    config.validate()
    if config.mode == "replay":
        return _replay_detect(request, config, catalog)
    if config.mode == "rules":
        return _rules_detect(request, config, catalog)
    return _remote_detect(request, config, catalog, sleep, record=config.mode == "record")


# Detection source label per backend mode.
MODE_SOURCES = {"remote": "remote", "record": "remote", "replay": "replay", "rules": "rules"}
