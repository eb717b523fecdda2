"""Shared fixtures: sample repositories, replay cassettes, and an HTTP stub."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from micropad.backend import request_digest
from micropad.catalog import Catalog, default_catalog
from micropad.chunker import ChunkConfig, build_prompt, chunk_artifacts
from micropad.scanner import ScanConfig, scan_repository

# Table of per-run detections reported for the kit sample repository, used to
# build replay cassettes. (display name, certainty) per run.
KIT_RUNS: dict[int, list[str]] = {
    1: ["Service registry", "Client-side discovery", "Service Deployment Platform"],
    2: ["Service registry", "Self-registration", "Client-side discovery"],
    3: ["Service registry", "Self-registration", "Client-side discovery"],
}

KIT_PATTERN_UNION = {
    "service-registry",
    "client-side-discovery",
    "service-deployment-platform",
    "self-registration",
}


@pytest.fixture(scope="session")
def catalog() -> Catalog:
    return default_catalog()


def make_kit_repo(root: Path) -> Path:
    """A small service-kit style repository with discovery-centric IaC files."""
    repo = root / "kit"
    repo.mkdir()
    (repo / "docker-compose.yml").write_text(
        "services:\n"
        "  consul:\n"
        "    image: consul:1.15\n"
        "    command: agent -server -bootstrap\n"
        "  addsvc:\n"
        "    image: kit/addsvc:latest\n"
        "    environment:\n"
        "      - CONSUL_ADDR=consul:8500\n",
        encoding="utf-8",
    )
    (repo / "deploy").mkdir()
    (repo / "deploy" / "k8s.yaml").write_text(
        "apiVersion: apps/v1\n"
        "kind: Deployment\n"
        "metadata:\n"
        "  name: addsvc\n"
        "spec:\n"
        "  replicas: 2\n",
        encoding="utf-8",
    )
    return repo


def detection_entry(display_name: str, path: str = "docker-compose.yml") -> dict:
    return {
        "pattern": display_name,
        "certainty": "High",
        "justification": f"{display_name} instance evidenced by service configuration",
        "evidence": [
            {"path": path, "snippet": "consul:\n    image: consul:1.15", "start_line": 2, "end_line": 3}
        ],
    }


def write_cassette_for_repo(
    repo: Path,
    cassette_path: Path,
    runs: dict[int, list[str]],
    catalog: Catalog,
    model: str = "stub-model",
) -> Path:
    """Record the responses a replay backend should serve for *repo*.

    Prompts are built exactly the way the detection pipeline builds them, so
    the digests match without hardcoding.
    """
    scan = scan_repository(repo, ScanConfig())
    chunks = chunk_artifacts(scan.artifacts, ChunkConfig())
    entries = []
    for run_id, names in runs.items():
        for chunk in chunks:
            prompt = build_prompt(chunk, catalog, run_seed=run_id)
            body = {"detections": [detection_entry(name) for name in names]}
            entries.append(
                {
                    "request_digest": request_digest(prompt),
                    "model": model,
                    "raw_response": json.dumps(body),
                }
            )
    cassette_path.write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
    return cassette_path


@pytest.fixture()
def kit_repo(tmp_path: Path) -> Path:
    return make_kit_repo(tmp_path)


@pytest.fixture()
def kit_cassette(tmp_path: Path, kit_repo: Path, catalog: Catalog) -> Path:
    return write_cassette_for_repo(kit_repo, tmp_path / "kit-cassette.json", KIT_RUNS, catalog)


class StubBackendServer:
    """Scripted HTTP endpoint recording every request it receives."""

    def __init__(self) -> None:
        self.requests: list[dict] = []
        self.responses: list[tuple[int, object]] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802  (http.server API)
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    body = None
                stub.requests.append(
                    {
                        "path": self.path,
                        "headers": dict(self.headers.items()),
                        "body": body,
                    }
                )
                status, payload = (
                    stub.responses.pop(0) if stub.responses else (500, {"error": "unscripted"})
                )
                data = (
                    payload.encode("utf-8")
                    if isinstance(payload, str)
                    else json.dumps(payload).encode("utf-8")
                )
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args) -> None:
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def script(self, *responses: tuple[int, object]) -> None:
        self.responses.extend(responses)

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture()
def stub_server():
    server = StubBackendServer()
    try:
        yield server
    finally:
        server.close()


def completion(text: str, prompt_tokens: int = 120, completion_tokens: int = 40) -> dict:
    """A chat-completion style payload wrapping *text*."""
    return {
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    }
