from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from micropad.chunker import (
    ChunkConfig,
    PromptChunk,
    Slice,
    build_prompt,
    chunk_artifacts,
    estimate_tokens,
)
from micropad.scanner import Classification, IaCArtifact, MatchKind


def artifact(path: str, content: str) -> IaCArtifact:
    return IaCArtifact(
        relative_path=path,
        match=Classification(MatchKind.EXTENSION, ".yml"),
        byte_size=len(content.encode()),
        content=content,
        line_count=len(content.splitlines()),
    )


artifact_lists = st.lists(
    st.text(alphabet="ab\n", min_size=0, max_size=120),
    min_size=0,
    max_size=6,
).map(lambda texts: [artifact(f"f{i:02d}.yml", t) for i, t in enumerate(texts)])


class TestEstimateTokens:
    def test_empty_is_zero(self):
        assert estimate_tokens("", ChunkConfig()) == 0

    def test_exact_multiple(self):
        assert estimate_tokens("abcd", ChunkConfig(chars_per_token=4)) == 1

    def test_ceiling(self):
        assert estimate_tokens("x" * 4097, ChunkConfig(chars_per_token=4)) == 1025


class TestChunkConfig:
    def test_zero_overhead_allowed(self):
        assert ChunkConfig(header_overhead_tokens=0).effective_budget == 60000

    def test_overhead_must_stay_below_budget(self):
        with pytest.raises(ValueError):
            ChunkConfig(token_budget_per_chunk=100, header_overhead_tokens=100)

    def test_positive_budget_required(self):
        with pytest.raises(ValueError):
            ChunkConfig(token_budget_per_chunk=0)


class TestChunkArtifacts:
    def test_no_artifacts(self):
        assert chunk_artifacts([], ChunkConfig()) == []

    def test_two_artifacts_that_cannot_share(self):
        config = ChunkConfig(token_budget_per_chunk=150, chars_per_token=4, header_overhead_tokens=0)
        items = [artifact("a.yml", "x" * 400), artifact("b.yml", "y" * 400)]
        chunks = chunk_artifacts(items, config)
        assert len(chunks) == 2
        assert [len(c.slices) for c in chunks] == [1, 1]

    def test_oversized_artifact_splits_at_lines(self):
        config = ChunkConfig(token_budget_per_chunk=100, chars_per_token=4, header_overhead_tokens=0)
        content = "".join(f"line {i:03d} {'pad' * 20}\n" for i in range(15))  # ~250 tokens
        assert estimate_tokens(content, config) > 200
        chunks = chunk_artifacts([artifact("big.yml", content)], config)
        slices = [s for c in chunks for s in c.slices]
        assert len(slices) >= 3
        assert "".join(s.text for s in slices) == content
        # Line ranges partition the file contiguously.
        assert slices[0].start_line == 1
        for prev, cur in zip(slices, slices[1:]):
            assert cur.start_line == prev.end_line + 1

    def test_indices_sequential(self):
        config = ChunkConfig(token_budget_per_chunk=10, chars_per_token=1, header_overhead_tokens=0)
        items = [artifact(f"{i}.yml", "abcdefgh\n") for i in range(4)]
        chunks = chunk_artifacts(items, config)
        assert [c.index for c in chunks] == list(range(len(chunks)))

    @given(items=artifact_lists, budget=st.integers(min_value=2, max_value=60))
    @settings(max_examples=200, deadline=None)
    def test_content_preserved(self, items, budget):
        config = ChunkConfig(token_budget_per_chunk=budget, chars_per_token=4, header_overhead_tokens=0)
        chunks = chunk_artifacts(items, config)
        rebuilt = "".join(s.text for c in chunks for s in c.slices)
        assert rebuilt == "".join(a.content for a in items)

    @given(items=artifact_lists, budget=st.integers(min_value=2, max_value=60))
    @settings(max_examples=200, deadline=None)
    def test_budget_respected_except_single_slice(self, items, budget):
        config = ChunkConfig(token_budget_per_chunk=budget, chars_per_token=4, header_overhead_tokens=0)
        for chunk in chunk_artifacts(items, config):
            assert chunk.estimated_tokens <= budget or len(chunk.slices) == 1

    @given(
        items=artifact_lists,
        small=st.integers(min_value=2, max_value=40),
        extra=st.integers(min_value=0, max_value=40),
    )
    @settings(max_examples=200, deadline=None)
    def test_chunk_count_monotone_in_budget(self, items, small, extra):
        low = ChunkConfig(token_budget_per_chunk=small, chars_per_token=4, header_overhead_tokens=0)
        high = ChunkConfig(
            token_budget_per_chunk=small + extra, chars_per_token=4, header_overhead_tokens=0
        )
        assert len(chunk_artifacts(items, high)) <= len(chunk_artifacts(items, low))


class TestBuildPrompt:
    def test_deterministic(self, catalog):
        chunk = PromptChunk(0, (Slice("a.yml", 1, 2, "x: 1\ny: 2\n"),), 3)
        first = build_prompt(chunk, catalog, run_seed=1)
        second = build_prompt(chunk, catalog, run_seed=1)
        assert first == second

    def test_run_seed_changes_prompt(self, catalog):
        chunk = PromptChunk(0, (Slice("a.yml", 1, 1, "x: 1\n"),), 2)
        assert build_prompt(chunk, catalog, 1) != build_prompt(chunk, catalog, 2)

    def test_system_text_contains_all_display_names(self, catalog):
        chunk = PromptChunk(0, (Slice("a.yml", 1, 1, "x: 1\n"),), 2)
        system = build_prompt(chunk, catalog, 1).system_text
        for descriptor in catalog.patterns:
            assert descriptor.display_name in system

    def test_delimiter_line_format(self, catalog):
        chunk = PromptChunk(0, (Slice("a.yml", 1, 10, "line\n" * 10),), 13)
        prompt = build_prompt(chunk, catalog, 1)
        assert "FILE a.yml LINES 1-10\n" in prompt.user_text

    def test_empty_chunk_rejected(self, catalog):
        with pytest.raises(ValueError):
            build_prompt(PromptChunk(0, (), 0), catalog, 1)
