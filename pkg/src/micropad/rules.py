"""Deterministic rule-based detection over prompt chunks.

The rules are shallow, case-insensitive keyword and structure heuristics
applied per slice. They exist as an offline baseline and test oracle, not as
a complete detector. Every rule resolves to a pattern id present in the
active catalog.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import yaml

from .catalog import Catalog
from .chunker import PromptChunk, Slice
from .detections import Certainty, Detection, Evidence

_REGISTRY_TOKENS = ("eureka", "consul", "zookeeper", "etcd", "nacos")
_GATEWAY_TOKENS = ("zuul", "spring cloud gateway", "kong", "traefik", "api-gateway")
_BROKER_TOKENS = ("kafka", "rabbitmq", "amqp", "nats", "activemq")
_METRICS_TOKENS = ("prometheus", "metrics endpoint")
_MESH_TOKENS = ("istio", "linkerd")
_SERVERLESS_TOKENS = ("aws::lambda::function", "aws::serverless::function")
_PROXY_NAMES = ("envoy", "istio-proxy", "linkerd", "proxy", "sidecar", "agent")

# Database connection hosts: URL schemes and HOST-style environment keys.
_DB_URL_RE = re.compile(
    r"\b(?:postgres(?:ql)?|mysql|mariadb|mongodb(?:\+srv)?|mssql)://(?:[^@/\s]*@)?([a-z0-9_.-]+)",
    re.IGNORECASE,
)
_DB_HOST_RE = re.compile(
    r"\b(?:DB|DATABASE|MYSQL|POSTGRES|MONGO)_HOST\s*[:=]\s*['\"]?([a-zA-Z0-9_.-]+)",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class _Hit:
    pattern_id: str
    certainty: Certainty
    justification: str
    line_offset: int  # 0-based within the slice
    snippet: str


def _token_re(token: str) -> re.Pattern[str]:
    return re.compile(r"(?<![a-z0-9])" + re.escape(token) + r"(?![a-z0-9])", re.IGNORECASE)


_TOKEN_RES = {
    token: _token_re(token)
    for token in (
        _REGISTRY_TOKENS
        + _GATEWAY_TOKENS
        + _BROKER_TOKENS
        + _METRICS_TOKENS
        + _MESH_TOKENS
        + ("nginx", "proxy_pass", "healthcheck")
    )
}


def _first_token_line(lines: list[str], tokens: tuple[str, ...]) -> tuple[int, str, str] | None:
    """Earliest line containing any token; returns (index, line, token)."""
    for idx, line in enumerate(lines):
        for token in tokens:
            if _TOKEN_RES[token].search(line):
                return idx, line, token
    return None


def _parse_compose(text: str) -> dict | None:
    """Best-effort docker-compose structure: a mapping with a services map."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError:
        return None
    if not isinstance(data, dict):
        return None
    services = data.get("services")
    if not isinstance(services, dict) or not services:
        return None
    return data


def _iter_yaml_documents(text: str) -> list[dict]:
    try:
        return [doc for doc in yaml.safe_load_all(text) if isinstance(doc, dict)]
    except yaml.YAMLError:
        return []


def _container_lists(node: object) -> list[list[dict]]:
    """All 'containers' lists anywhere in a parsed manifest."""
    found: list[list[dict]] = []
    if isinstance(node, dict):
        for key, value in node.items():
            if key == "containers" and isinstance(value, list):
                entries = [e for e in value if isinstance(e, dict)]
                if entries:
                    found.append(entries)
            found.extend(_container_lists(value))
    elif isinstance(node, list):
        for item in node:
            found.extend(_container_lists(item))
    return found


def _line_of(lines: list[str], needle: str) -> int:
    lowered = needle.lower()
    for idx, line in enumerate(lines):
        if lowered in line.lower():
            return idx
    return 0


def _service_db_hosts(service_node: object) -> set[str]:
    hosts: set[str] = set()
    dumped = yaml.safe_dump(service_node, default_flow_style=False)
    for match in _DB_URL_RE.finditer(dumped):
        hosts.add(match.group(1).lower())
    for match in _DB_HOST_RE.finditer(dumped):
        hosts.add(match.group(1).lower())
    return hosts


def _slice_hits(piece: Slice) -> list[_Hit]:
    lines = piece.text.splitlines()
    hits: list[_Hit] = []
    compose = _parse_compose(piece.text)

    # R1: compose document with a service defining image or build.
    if compose is not None:
        for name, service in compose["services"].items():
            if isinstance(service, dict) and ("image" in service or "build" in service):
                idx = _line_of(lines, str(name))
                hits.append(
                    _Hit(
                        "service-instance-per-container",
                        Certainty.HIGH,
                        f"Compose service '{name}' is deployed as its own container",
                        idx,
                        lines[idx] if lines else str(name),
                    )
                )
                break

    # R2: Kubernetes manifest with a workload or service kind.
    if any(l.lstrip().lower().startswith("apiversion:") for l in lines):
        kind_re = re.compile(r"^\s*kind:\s*(Deployment|StatefulSet|DaemonSet|Service)\s*$", re.IGNORECASE)
        for idx, line in enumerate(lines):
            match = kind_re.match(line)
            if match:
                hits.append(
                    _Hit(
                        "service-deployment-platform",
                        Certainty.HIGH,
                        f"Kubernetes {match.group(1)} manifest targets a deployment platform",
                        idx,
                        line,
                    )
                )
                break

    # R3-R5, R7, R9: token scans.
    for pattern_id, tokens, certainty, what in (
        ("service-registry", _REGISTRY_TOKENS, Certainty.MEDIUM, "service registry"),
        ("messaging", _BROKER_TOKENS, Certainty.MEDIUM, "message broker"),
        ("application-metrics", _METRICS_TOKENS, Certainty.MEDIUM, "metrics collection"),
        ("service-mesh", _MESH_TOKENS, Certainty.HIGH, "service mesh"),
    ):
        found = _first_token_line(lines, tokens)
        if found:
            idx, line, token = found
            hits.append(
                _Hit(pattern_id, certainty, f"References {what} '{token}'", idx, line)
            )

    # R4: gateway tokens, or nginx configured with proxy_pass.
    found = _first_token_line(lines, _GATEWAY_TOKENS)
    if found is None and _first_token_line(lines, ("nginx",)) and _first_token_line(lines, ("proxy_pass",)):
        found = _first_token_line(lines, ("proxy_pass",))
    if found:
        idx, line, token = found
        hits.append(
            _Hit("api-gateway", Certainty.MEDIUM, f"Gateway configuration mentions '{token}'", idx, line)
        )

    # R6: compose healthcheck key.
    if compose is not None:
        for name, service in compose["services"].items():
            if isinstance(service, dict) and "healthcheck" in service:
                idx = _line_of(lines, "healthcheck")
                hits.append(
                    _Hit(
                        "health-check-api",
                        Certainty.HIGH,
                        f"Compose service '{name}' declares a healthcheck",
                        idx,
                        lines[idx] if lines else "healthcheck",
                    )
                )
                break

    # R8: serverless descriptor.
    basename = piece.relative_path.rsplit("/", 1)[-1].lower()
    if basename in ("serverless.yml", "serverless.yaml"):
        hits.append(
            _Hit(
                "serverless-deployment",
                Certainty.HIGH,
                "Serverless framework descriptor",
                0,
                lines[0] if lines else basename,
            )
        )
    else:
        lowered = piece.text.lower()
        for token in _SERVERLESS_TOKENS:
            if token in lowered:
                idx = _line_of(lines, token)
                hits.append(
                    _Hit(
                        "serverless-deployment",
                        Certainty.HIGH,
                        "Declares a serverless function resource",
                        idx,
                        lines[idx],
                    )
                )
                break

    # R10: pod with >= 2 containers, one of which looks like a proxy/agent.
    for doc in _iter_yaml_documents(piece.text):
        fired = False
        for containers in _container_lists(doc):
            if len(containers) < 2:
                continue
            names = [str(c.get("name", "")) + " " + str(c.get("image", "")) for c in containers]
            for label in names:
                if any(token in label.lower() for token in _PROXY_NAMES):
                    idx = _line_of(lines, "containers")
                    hits.append(
                        _Hit(
                            "sidecar",
                            Certainty.MEDIUM,
                            "Pod runs a proxy or agent container beside the main container",
                            idx,
                            lines[idx] if lines else "containers",
                        )
                    )
                    fired = True
                    break
            if fired:
                break
        if fired:
            break

    # R11/R12: database hosts across compose services.
    if compose is not None:
        hosts_by_service = {
            name: _service_db_hosts(service)
            for name, service in compose["services"].items()
            if isinstance(service, dict)
        }
        with_hosts = {name: hosts for name, hosts in hosts_by_service.items() if hosts}
        if len(with_hosts) >= 2:
            all_hosts = set().union(*with_hosts.values())
            if len(all_hosts) >= 2:
                idx = _line_of(lines, sorted(all_hosts)[0])
                hits.append(
                    _Hit(
                        "database-per-service",
                        Certainty.MEDIUM,
                        "Services connect to distinct database hosts",
                        idx,
                        lines[idx] if lines else "",
                    )
                )
            shared = sorted(
                host
                for host in all_hosts
                if sum(1 for hosts in with_hosts.values() if host in hosts) >= 2
            )
            if shared:
                idx = _line_of(lines, shared[0])
                hits.append(
                    _Hit(
                        "shared-database",
                        Certainty.MEDIUM,
                        "Several services share one database host",
                        idx,
                        lines[idx] if lines else "",
                    )
                )

    return hits


def rules_detect(chunk: PromptChunk, catalog: Catalog) -> list[Detection]:
    """Apply the rule set to every slice of a chunk.

    Pure function of (chunk, catalog); duplicate (pattern, path) hits collapse
    to one detection keeping the first evidence.
    """
    known = set(catalog.ids())
    detections: list[Detection] = []
    seen: set[tuple[str, str]] = set()
    for piece in chunk.slices:
        for hit in _slice_hits(piece):
            if hit.pattern_id not in known:
                continue
            key = (hit.pattern_id, piece.relative_path)
            if key in seen:
                continue
            seen.add(key)
            line = piece.start_line + hit.line_offset
            snippet = hit.snippet.strip() or hit.justification
            detections.append(
                Detection(
                    pattern_id=hit.pattern_id,
                    certainty=hit.certainty,
                    justification=f"{hit.justification} in {piece.relative_path}",
                    evidence=(
                        Evidence(
                            relative_path=piece.relative_path,
                            snippet=snippet,
                            start_line=line,
                            end_line=line,
                        ),
                    ),
                    source="rules",
                    chunk_index=chunk.index,
                )
            )
    return detections
