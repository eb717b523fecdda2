"""Repository scanner for Infrastructure-as-Code artifacts.

Responsibilities
----------------
- Walk a repository tree rooted at a local directory.
- Keep exactly the files whose name matches the IaC filter: one of the
  configured suffixes (case-insensitive, longest suffix wins) or one of the
  special basenames (``Dockerfile``, ``KubeFile``).
- Load matched files as UTF-8 text with a size cap and a binary sniff,
  recording every skip with its reason in a scan log.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

# Suffixes admitted by default, overridable through ScanConfig.
DEFAULT_SUFFIXES: tuple[str, ...] = (
    ".yml", ".yaml", ".dockercompose", ".tf", ".ps1", ".pl", ".properties",
    ".json", ".env", ".sh", ".kubeconfig", ".helm", ".tpl", ".packer",
    ".nomad", ".vagrantfile", ".ansible", ".cloudformation", ".template",
    ".lock", ".tfvars", ".terraformignore", ".tfplan", ".env.example",
    ".makefile", ".cfg", ".stack", ".tfstate",
)

# Basenames matched exactly (case-insensitive) regardless of suffix.
DEFAULT_BASENAMES: tuple[str, ...] = ("Dockerfile", "KubeFile")

DEFAULT_EXCLUDED_DIRS: tuple[str, ...] = (".git", ".hg", ".svn", ".bzr")

# Bytes inspected for the NUL-byte binary sniff.
_SNIFF_BYTES = 8192


class ScanError(Exception):
    """Base class for errors raised while scanning a repository root."""


class RootNotFound(ScanError):
    def __init__(self, root: str) -> None:
        super().__init__(f"repository root does not exist: {root}")
        self.root = root


class RootNotADirectory(ScanError):
    def __init__(self, root: str) -> None:
        super().__init__(f"repository root is not a directory: {root}")
        self.root = root


class MatchKind(Enum):
    EXTENSION = "extension"
    NAME = "name"
    NONE = "none"


@dataclass(frozen=True)
class Classification:
    """How (and whether) a path matched the IaC filter."""

    kind: MatchKind
    value: str = ""

    @property
    def is_iac(self) -> bool:
        return self.kind is not MatchKind.NONE

    def describe(self) -> str:
        if self.kind is MatchKind.NONE:
            return "none"
        return f"{self.kind.value}:{self.value}"


NOT_IAC = Classification(MatchKind.NONE)


@dataclass(frozen=True)
class ScanConfig:
    """Filter and safety settings for one repository scan."""

    max_file_bytes: int = 262144
    follow_symlinks: bool = False
    excluded_dirs: tuple[str, ...] = DEFAULT_EXCLUDED_DIRS
    suffixes: tuple[str, ...] = DEFAULT_SUFFIXES
    basenames: tuple[str, ...] = DEFAULT_BASENAMES

    def __post_init__(self) -> None:
        if self.max_file_bytes <= 0:
            raise ValueError("max_file_bytes must be positive")
        for name in self.excluded_dirs:
            if not name or "/" in name or "\\" in name:
                raise ValueError(f"invalid excluded directory name: {name!r}")


@dataclass(frozen=True)
class IaCArtifact:
    """One filtered repository file with its decoded text content."""

    relative_path: str
    match: Classification
    byte_size: int
    content: str
    line_count: int


@dataclass(frozen=True)
class Skip:
    """A file that matched the filter but was not loaded."""

    reason: str


@dataclass(frozen=True)
class ScanLogEntry:
    path: str
    action: str  # "included" | "skipped"
    reason: str


@dataclass
class ScanResult:
    artifacts: list[IaCArtifact] = field(default_factory=list)
    log: list[ScanLogEntry] = field(default_factory=list)


def classify_path(relative_path: str, config: ScanConfig | None = None) -> Classification:
    """Classify a slash-separated path against the IaC filter.

    Pure function of the final path component: suffix matching is
    case-insensitive and prefers the longest configured suffix; basename
    matching is a case-insensitive exact match on the whole final component.
    """
    config = config or ScanConfig()
    basename = relative_path.rsplit("/", 1)[-1]
    lowered = basename.lower()
    for suffix in sorted(config.suffixes, key=len, reverse=True):
        if lowered.endswith(suffix.lower()):
            return Classification(MatchKind.EXTENSION, suffix)
    for name in config.basenames:
        if lowered == name.lower():
            return Classification(MatchKind.NAME, name)
    return NOT_IAC


def load_artifact(
    absolute_path: str | Path,
    relative_path: str,
    classification: Classification,
    config: ScanConfig,
) -> IaCArtifact | Skip:
    """Load one matched file, or return a Skip with the reason.

    A NUL byte within the first 8 KiB marks the file as binary; files over
    the size cap are skipped; undecodable byte sequences are replaced.
    """
    if not classification.is_iac:
        raise ValueError("load_artifact requires an IaC classification")
    try:
        with open(absolute_path, "rb") as fh:
            head = fh.read(_SNIFF_BYTES)
            if b"\x00" in head:
                return Skip("binary")
            size = os.fstat(fh.fileno()).st_size
            if size > config.max_file_bytes:
                return Skip("oversize")
            data = head + fh.read()
    except OSError as exc:
        return Skip(f"io: {exc}")
    content = data.decode("utf-8", errors="replace")
    return IaCArtifact(
        relative_path=relative_path,
        match=classification,
        byte_size=len(data),
        content=content,
        line_count=len(content.splitlines()),
    )


def scan_repository(root: str | Path, config: ScanConfig | None = None) -> ScanResult:
    """Collect IaC artifacts under *root*, ordered by relative path.

    Ordering is case-insensitive lexicographic with the exact path as
    tiebreak, so it is a strict total order. Per-file read failures become
    skip records; only problems with the root itself raise. The result is
    independent of filesystem walk order.
    """
    config = config or ScanConfig()
    root_path = Path(root)
    if not root_path.exists():
        raise RootNotFound(str(root))
    if not root_path.is_dir():
        raise RootNotADirectory(str(root))

    excluded = set(config.excluded_dirs)
    collected: list[tuple[str, IaCArtifact | Skip]] = []
    for dirpath, dirnames, filenames in os.walk(root_path, followlinks=config.follow_symlinks):
        dirnames[:] = sorted(d for d in dirnames if d not in excluded)
        for filename in filenames:
            absolute = Path(dirpath) / filename
            if not config.follow_symlinks and absolute.is_symlink():
                continue
            relative = absolute.relative_to(root_path).as_posix()
            classification = classify_path(relative, config)
            if not classification.is_iac:
                continue
            collected.append((relative, load_artifact(absolute, relative, classification, config)))

    collected.sort(key=lambda item: (item[0].lower(), item[0]))
    result = ScanResult()
    for relative, loaded in collected:
        if isinstance(loaded, Skip):
            result.log.append(ScanLogEntry(relative, "skipped", loaded.reason))
        else:
            result.artifacts.append(loaded)
            result.log.append(ScanLogEntry(relative, "included", loaded.match.describe()))
    return result


def scan_log_jsonl(entries: list[ScanLogEntry]) -> str:
    """Serialize scan log entries as JSON lines."""
    return "".join(
        json.dumps({"path": e.path, "action": e.action, "reason": e.reason}) + "\n"
        for e in entries
    )
