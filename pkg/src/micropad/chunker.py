"""Pack scanned artifacts into token-budgeted chunks and build backend prompts.

Chunking is greedy first-fit in scan order. An artifact that cannot fit a
fresh chunk on its own is split at line boundaries into maximal slices; the
concatenation of all slice texts always reproduces the concatenation of all
artifact contents byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .catalog import Catalog, render_for_prompt
from .scanner import IaCArtifact

# Delimiter preceding every slice in the user prompt. Bit-exact contract:
# downstream parsers rely on this format.
SLICE_DELIMITER = "FILE {path} LINES {start}-{end}"

RESPONSE_SCHEMA_TEXT = """\
Respond with a single JSON object and nothing else, matching exactly:
{"detections": [{"pattern": "<catalog pattern name>",
                 "certainty": "High" | "Medium" | "Low",
                 "justification": "<why the pattern instance is present>",
                 "evidence": [{"path": "<file path from a FILE delimiter>",
                               "snippet": "<verbatim supporting lines>",
                               "start_line": <int, optional>,
                               "end_line": <int, optional>}]}]}
Every detection above Low certainty must carry at least one evidence entry.
Report an empty "detections" array when nothing is found.
"""

INSTRUCTION_TEXT = """\
You analyze Infrastructure-as-Code files from one software repository and
identify which microservice architecture patterns from the catalog below have
concrete instances evidenced by those files. Only report a pattern when the
file content supports it; grade your confidence as High, Medium, or Low and
quote the supporting lines as evidence.
"""


@dataclass(frozen=True)
class ChunkConfig:
    token_budget_per_chunk: int = 60000
    chars_per_token: int = 4
    header_overhead_tokens: int = 2000

    def __post_init__(self) -> None:
        if self.token_budget_per_chunk <= 0 or self.chars_per_token <= 0:
            raise ValueError("chunk budget and chars_per_token must be positive")
        if self.header_overhead_tokens < 0:
            raise ValueError("header_overhead_tokens must not be negative")
        if self.header_overhead_tokens >= self.token_budget_per_chunk:
            raise ValueError("header overhead must be below the chunk budget")

    @property
    def effective_budget(self) -> int:
        return self.token_budget_per_chunk - self.header_overhead_tokens


@dataclass(frozen=True)
class Slice:
    """A contiguous run of lines from one artifact (1-based, inclusive)."""

    relative_path: str
    start_line: int
    end_line: int
    text: str


@dataclass(frozen=True)
class PromptChunk:
    index: int
    slices: tuple[Slice, ...]
    estimated_tokens: int


@dataclass(frozen=True)
class PromptText:
    system_text: str
    user_text: str


def estimate_tokens(text: str, config: ChunkConfig) -> int:
    """Character-count heuristic: ceil(len / chars_per_token)."""
    return math.ceil(len(text) / config.chars_per_token)


def _split_lines(artifact: IaCArtifact, config: ChunkConfig) -> list[Slice]:
    """Split one oversized artifact into maximal slices at line boundaries."""
    lines = artifact.content.splitlines(keepends=True)
    budget = config.effective_budget
    slices: list[Slice] = []
    start = 0
    while start < len(lines):
        end = start + 1
        text = lines[start]
        while end < len(lines):
            candidate = text + lines[end]
            if estimate_tokens(candidate, config) > budget:
                break
            text = candidate
            end += 1
        slices.append(
            Slice(
                relative_path=artifact.relative_path,
                start_line=start + 1,
                end_line=end,
                text=text,
            )
        )
        start = end
    return slices


def _whole_slice(artifact: IaCArtifact) -> Slice:
    return Slice(
        relative_path=artifact.relative_path,
        start_line=1,
        end_line=artifact.line_count,
        text=artifact.content,
    )


def chunk_artifacts(artifacts: list[IaCArtifact], config: ChunkConfig | None = None) -> list[PromptChunk]:
    """Greedy first-fit packing of artifacts (in scan order) into chunks."""
    config = config or ChunkConfig()
    budget = config.effective_budget
    chunks: list[PromptChunk] = []
    current: list[Slice] = []
    current_tokens = 0

    def close_current() -> None:
        nonlocal current, current_tokens
        if current:
            chunks.append(PromptChunk(len(chunks), tuple(current), current_tokens))
            current = []
            current_tokens = 0

    def place(piece: Slice) -> None:
        nonlocal current_tokens
        tokens = estimate_tokens(piece.text, config)
        if current and current_tokens + tokens > budget:
            close_current()
        current.append(piece)
        current_tokens += tokens

    for artifact in artifacts:
        if estimate_tokens(artifact.content, config) <= budget:
            place(_whole_slice(artifact))
        else:
            for piece in _split_lines(artifact, config):
                place(piece)
    close_current()
    return chunks


def build_prompt(chunk: PromptChunk, catalog: Catalog, run_seed: int) -> PromptText:
    """Assemble the deterministic system and user texts for one chunk."""
    if not chunk.slices:
        raise ValueError("cannot build a prompt for an empty chunk")
    system_parts = [
        INSTRUCTION_TEXT,
        "Pattern catalog:",
        render_for_prompt(catalog),
        RESPONSE_SCHEMA_TEXT,
        f"Run identifier: {run_seed}.",
    ]
    user_parts: list[str] = []
    for piece in chunk.slices:
        user_parts.append(
            SLICE_DELIMITER.format(
                path=piece.relative_path, start=piece.start_line, end=piece.end_line
            )
            + "\n"
        )
        text = piece.text
        if text and not text.endswith("\n"):
            text += "\n"
        user_parts.append(text)
    return PromptText(
        system_text="\n".join(system_parts),
        user_text="".join(user_parts),
    )
