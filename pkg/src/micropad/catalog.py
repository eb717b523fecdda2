"""Pattern catalog: descriptors, lookup, persistence, and prompt rendering."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .default_patterns import DEFAULT_CATALOG_VERSION, DEFAULT_PATTERNS

CATEGORIES = frozenset(
    {"deployment", "discovery", "communication", "reliability", "observability", "data"}
)

_ID_RE = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")


class CatalogError(Exception):
    """Base class for catalog validation and parse errors."""


class ParseError(CatalogError):
    def __init__(self, cause: str, line: int | None = None) -> None:
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"catalog parse error{where}: {cause}")
        self.line = line
        self.cause = cause


class DuplicateId(CatalogError):
    def __init__(self, pattern_id: str) -> None:
        super().__init__(f"duplicate pattern id: {pattern_id}")
        self.pattern_id = pattern_id


class DuplicateAlias(CatalogError):
    def __init__(self, alias: str) -> None:
        super().__init__(f"duplicate pattern alias: {alias}")
        self.alias = alias


class EmptyCatalog(CatalogError):
    def __init__(self) -> None:
        super().__init__("catalog contains no patterns")


class UnknownPattern(CatalogError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown pattern: {name}")
        self.name = name


def _normalize(name: str) -> str:
    """Trim, collapse internal whitespace, and casefold for matching."""
    return " ".join(name.split()).casefold()


@dataclass(frozen=True)
class PatternDescriptor:
    id: str
    display_name: str
    category: str
    description: str
    aliases: tuple[str, ...] = ()
    detection_cues: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not _ID_RE.match(self.id):
            raise ParseError(f"invalid pattern id: {self.id!r}")
        if self.category not in CATEGORIES:
            raise ParseError(f"invalid category for {self.id}: {self.category!r}")
        if not self.description.strip():
            raise ParseError(f"empty description for {self.id}")


@dataclass(frozen=True)
class Catalog:
    version: str
    patterns: tuple[PatternDescriptor, ...]
    _index: dict[str, PatternDescriptor] = field(
        default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        if not self.patterns:
            raise EmptyCatalog()
        ids: set[str] = set()
        alias_seen: set[str] = set()
        for descriptor in self.patterns:
            if descriptor.id in ids:
                raise DuplicateId(descriptor.id)
            ids.add(descriptor.id)
            for alias in descriptor.aliases:
                key = _normalize(alias)
                if key in alias_seen:
                    raise DuplicateAlias(alias)
                alias_seen.add(key)
        # Lookup precedence: id, then display name, then aliases.
        index: dict[str, PatternDescriptor] = {}
        for source in ("alias", "display", "id"):
            for descriptor in self.patterns:
                if source == "id":
                    index[_normalize(descriptor.id)] = descriptor
                elif source == "display":
                    index[_normalize(descriptor.display_name)] = descriptor
                else:
                    for alias in descriptor.aliases:
                        index[_normalize(alias)] = descriptor
        object.__setattr__(self, "_index", index)

    def ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.patterns)

    def get(self, pattern_id: str) -> PatternDescriptor:
        for descriptor in self.patterns:
            if descriptor.id == pattern_id:
                return descriptor
        raise UnknownPattern(pattern_id)

    def display_name(self, pattern_id: str) -> str:
        try:
            return self.get(pattern_id).display_name
        except UnknownPattern:
            return pattern_id


def default_catalog() -> Catalog:
    """The built-in 24-pattern catalog."""
    return Catalog(
        version=DEFAULT_CATALOG_VERSION,
        patterns=tuple(
            PatternDescriptor(
                id=pid,
                display_name=display,
                category=category,
                description=description,
                aliases=aliases,
                detection_cues=cues,
            )
            for pid, display, category, description, aliases, cues in DEFAULT_PATTERNS
        ),
    )


def lookup(catalog: Catalog, name: str) -> PatternDescriptor:
    """Resolve a pattern name against id, display name, then aliases.

    Matching is case-insensitive after trimming and collapsing whitespace.
    """
    descriptor = catalog._index.get(_normalize(name))
    if descriptor is None:
        raise UnknownPattern(name)
    return descriptor


def load_catalog(path: str | Path) -> Catalog:
    """Parse and validate a catalog file (see save_catalog for the format)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(exc)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(data, dict) or "patterns" not in data:
        raise ParseError("top-level object with a 'patterns' array required")
    raw_patterns = data["patterns"]
    if not isinstance(raw_patterns, list):
        raise ParseError("'patterns' must be an array")
    descriptors = []
    for entry in raw_patterns:
        if not isinstance(entry, dict):
            raise ParseError("pattern entries must be objects")
        try:
            descriptors.append(
                PatternDescriptor(
                    id=str(entry["id"]),
                    display_name=str(entry["display_name"]),
                    category=str(entry["category"]),
                    description=str(entry["description"]),
                    aliases=tuple(str(a) for a in entry.get("aliases", [])),
                    detection_cues=tuple(str(c) for c in entry.get("detection_cues", [])),
                )
            )
        except KeyError as exc:
            raise ParseError(f"pattern entry missing field {exc}") from exc
    return Catalog(version=str(data.get("version", "")), patterns=tuple(descriptors))


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    """Write the catalog as JSON, round-trippable by load_catalog."""
    payload = {
        "version": catalog.version,
        "patterns": [
            {
                "id": d.id,
                "display_name": d.display_name,
                "category": d.category,
                "description": d.description,
                "aliases": list(d.aliases),
                "detection_cues": list(d.detection_cues),
            }
            for d in catalog.patterns
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def render_for_prompt(catalog: Catalog) -> str:
    """Deterministic numbered text block describing every pattern."""
    lines: list[str] = []
    for number, d in enumerate(catalog.patterns, start=1):
        lines.append(f"{number}. {d.display_name} [{d.id}]")
        lines.append(f"   {d.description}")
        if d.detection_cues:
            lines.append(f"   Cues: {', '.join(d.detection_cues)}")
    return "\n".join(lines) + "\n"
