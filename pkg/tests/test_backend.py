from __future__ import annotations

import json
from decimal import Decimal

import pytest

from conftest import completion
from micropad.backend import (
    AuthFailure,
    BackendConfig,
    BackendRequest,
    BackendUnavailable,
    CassetteMiss,
    ConfigurationError,
    ParseFailure,
    RateLimited,
    ResponseUnparseable,
    append_cassette,
    detect,
    load_cassette,
    parse_response,
    request_digest,
    slices_from_user_text,
)
from micropad.chunker import PromptChunk, PromptText, Slice, build_prompt
from micropad.detections import Certainty

GOOD_RESPONSE = json.dumps(
    {
        "detections": [
            {
                "pattern": "Service registry",
                "certainty": "High",
                "justification": "Consul config found",
                "evidence": [{"path": "consul.yml", "snippet": "retry_join: ..."}],
            }
        ]
    }
)


def make_prompt(text: str = "x: 1\n", seed: int = 1, catalog=None) -> PromptText:
    chunk = PromptChunk(0, (Slice("a.yml", 1, 1, text),), 1)
    return build_prompt(chunk, catalog, run_seed=seed)


class TestParseResponse:
    def test_service_registry_example(self, catalog):
        parsed = parse_response(GOOD_RESPONSE, catalog)
        assert len(parsed.detections) == 1
        detection = parsed.detections[0]
        assert detection.pattern_id == "service-registry"
        assert detection.certainty is Certainty.HIGH
        assert detection.evidence[0].relative_path == "consul.yml"

    def test_empty_detections(self, catalog):
        assert parse_response('{"detections":[]}', catalog).detections == ()

    def test_unknown_pattern_quarantined(self, catalog):
        raw = '{"detections":[{"pattern":"CQRS","certainty":"High","justification":"x"}]}'
        parsed = parse_response(raw, catalog)
        assert parsed.detections == ()
        assert parsed.quarantined == ("CQRS",)

    def test_tolerates_prose_and_fences(self, catalog):
        raw = "Here is my analysis:\n```json\n" + GOOD_RESPONSE + "\n```\nHope this helps!"
        parsed = parse_response(raw, catalog)
        assert parsed.detections[0].pattern_id == "service-registry"

    def test_no_json_object_fails(self, catalog):
        with pytest.raises(ParseFailure):
            parse_response("nothing here", catalog)

    def test_missing_detections_key_fails(self, catalog):
        with pytest.raises(ParseFailure):
            parse_response('{"items": []}', catalog)

    def test_bad_certainty_fails(self, catalog):
        raw = '{"detections":[{"pattern":"Messaging","certainty":"Sure","justification":"x"}]}'
        with pytest.raises(ParseFailure):
            parse_response(raw, catalog)

    def test_high_without_evidence_fails(self, catalog):
        raw = '{"detections":[{"pattern":"Messaging","certainty":"High","justification":"x"}]}'
        with pytest.raises(ParseFailure):
            parse_response(raw, catalog)

    def test_low_without_evidence_allowed(self, catalog):
        raw = '{"detections":[{"pattern":"Messaging","certainty":"Low","justification":"x"}]}'
        parsed = parse_response(raw, catalog)
        assert parsed.detections[0].certainty is Certainty.LOW
        assert parsed.detections[0].evidence == ()

    def test_inverted_line_range_normalized(self, catalog):
        raw = json.dumps(
            {
                "detections": [
                    {
                        "pattern": "Messaging",
                        "certainty": "Medium",
                        "justification": "queue",
                        "evidence": [
                            {"path": "q.yml", "snippet": "kafka", "start_line": 9, "end_line": 3}
                        ],
                    }
                ]
            }
        )
        evidence = parse_response(raw, catalog).detections[0].evidence[0]
        assert (evidence.start_line, evidence.end_line) == (3, 9)

    def test_certainty_case_insensitive(self, catalog):
        raw = '{"detections":[{"pattern":"Messaging","certainty":"low","justification":"x"}]}'
        assert parse_response(raw, catalog).detections[0].certainty is Certainty.LOW


class TestDigest:
    def test_64_hex_chars(self, catalog):
        digest = request_digest(make_prompt(catalog=catalog))
        assert len(digest) == 64
        int(digest, 16)

    def test_one_char_change_changes_digest(self, catalog):
        a = request_digest(make_prompt("x: 1\n", catalog=catalog))
        b = request_digest(make_prompt("x: 2\n", catalog=catalog))
        assert a != b

    def test_seed_changes_digest(self, catalog):
        a = request_digest(make_prompt(seed=1, catalog=catalog))
        b = request_digest(make_prompt(seed=2, catalog=catalog))
        assert a != b


class TestSliceRoundTrip:
    def test_user_text_parses_back(self, catalog):
        slices = (
            Slice("a.yml", 1, 2, "x: 1\ny: 2\n"),
            Slice("dir/b.env", 3, 4, "A=1\nB=2\n"),
        )
        chunk = PromptChunk(0, slices, 4)
        prompt = build_prompt(chunk, catalog, 1)
        rebuilt = slices_from_user_text(prompt.user_text)
        assert rebuilt == slices


class TestReplay:
    def test_replay_returns_recorded_detections(self, tmp_path, catalog):
        prompt = make_prompt(catalog=catalog)
        request = BackendRequest.create(prompt, run_id=1, chunk_index=0)
        cassette = tmp_path / "tape.json"
        append_cassette(cassette, request.request_digest, "m", GOOD_RESPONSE)
        config = BackendConfig(mode="replay", cassette_path=str(cassette))
        result = detect(request, config, catalog)
        assert [d.pattern_id for d in result.detections] == ["service-registry"]
        assert result.detections[0].source == "replay"
        assert result.detections[0].run_id == 1

    def test_missing_digest_raises(self, tmp_path, catalog):
        cassette = tmp_path / "tape.json"
        cassette.write_text("[]")
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        config = BackendConfig(mode="replay", cassette_path=str(cassette))
        with pytest.raises(CassetteMiss):
            detect(request, config, catalog)

    def test_modified_prompt_misses(self, tmp_path, catalog):
        cassette = tmp_path / "tape.json"
        original = BackendRequest.create(make_prompt("x: 1\n", catalog=catalog), 1, 0)
        append_cassette(cassette, original.request_digest, "m", GOOD_RESPONSE)
        altered = BackendRequest.create(make_prompt("x: 1 \n", catalog=catalog), 1, 0)
        config = BackendConfig(mode="replay", cassette_path=str(cassette))
        with pytest.raises(CassetteMiss):
            detect(altered, config, catalog)

    def test_two_entries_distinct_digests(self, tmp_path, catalog):
        cassette = tmp_path / "tape.json"
        first = BackendRequest.create(make_prompt("a: 1\n", catalog=catalog), 1, 0)
        second = BackendRequest.create(make_prompt("b: 2\n", catalog=catalog), 1, 1)
        append_cassette(cassette, first.request_digest, "m", GOOD_RESPONSE)
        append_cassette(cassette, second.request_digest, "m", '{"detections":[]}')
        stored = load_cassette(cassette)
        assert len(stored) == 2
        assert first.request_digest != second.request_digest

    def test_unparseable_recording_raises(self, tmp_path, catalog):
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        cassette = tmp_path / "tape.json"
        append_cassette(cassette, request.request_digest, "m", "not json at all")
        config = BackendConfig(mode="replay", cassette_path=str(cassette))
        with pytest.raises(ResponseUnparseable):
            detect(request, config, catalog)


class TestRulesMode:
    def test_compose_chunk_detects_containers(self, catalog):
        compose = "services:\n  web:\n    image: nginx:1.25\n"
        chunk = PromptChunk(0, (Slice("docker-compose.yml", 1, 3, compose),), 10)
        prompt = build_prompt(chunk, catalog, 1)
        request = BackendRequest.create(prompt, run_id=2, chunk_index=0)
        result = detect(request, BackendConfig(mode="rules"), catalog)
        ids = {d.pattern_id for d in result.detections}
        assert "service-instance-per-container" in ids
        assert all(d.run_id == 2 and d.source == "rules" for d in result.detections)


class TestConfigValidation:
    def test_remote_requires_endpoint(self, monkeypatch):
        monkeypatch.setenv("MICROPAD_API_KEY", "k")
        with pytest.raises(ConfigurationError):
            BackendConfig(mode="remote", model_name="m").validate()

    def test_remote_requires_api_key(self, monkeypatch):
        monkeypatch.delenv("MICROPAD_API_KEY", raising=False)
        with pytest.raises(ConfigurationError):
            BackendConfig(mode="remote", endpoint_url="http://x", model_name="m").validate()

    def test_replay_requires_cassette(self):
        with pytest.raises(ConfigurationError):
            BackendConfig(mode="replay").validate()

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            BackendConfig(mode="chat").validate()


def remote_config(url: str, **overrides) -> BackendConfig:
    settings = dict(
        mode="remote",
        endpoint_url=url,
        model_name="test-model",
        max_retries=3,
        initial_backoff_ms=10,
        price_per_1k_input_tokens=Decimal("0.15"),
        price_per_1k_output_tokens=Decimal("0.60"),
    )
    settings.update(overrides)
    return BackendConfig(**settings)


class TestRemote:
    @pytest.fixture(autouse=True)
    def _api_key(self, monkeypatch):
        monkeypatch.setenv("MICROPAD_API_KEY", "test-key-123")

    def test_request_shape_and_auth(self, stub_server, catalog):
        stub_server.script((200, completion(GOOD_RESPONSE)))
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        result = detect(request, remote_config(stub_server.url), catalog, sleep=lambda s: None)
        assert [d.pattern_id for d in result.detections] == ["service-registry"]
        assert result.detections[0].source == "remote"
        sent = stub_server.requests[0]
        assert sent["headers"]["Authorization"] == "Bearer test-key-123"
        assert sent["body"]["model"] == "test-model"
        roles = [m["role"] for m in sent["body"]["messages"]]
        assert roles == ["system", "user"]
        assert "FILE a.yml LINES 1-1" in sent["body"]["messages"][1]["content"]

    def test_usage_and_exact_cost(self, stub_server, catalog):
        stub_server.script((200, completion(GOOD_RESPONSE, prompt_tokens=2000, completion_tokens=500)))
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        result = detect(request, remote_config(stub_server.url), catalog, sleep=lambda s: None)
        assert result.usage.input_tokens == 2000
        assert result.usage.output_tokens == 500
        assert result.usage.estimated_cost == Decimal("0.15") * 2 + Decimal("0.60") / 2

    def test_429_retries_with_geometric_backoff(self, stub_server, catalog):
        stub_server.script((429, {"error": "slow down"}), (429, {"error": "slow down"}),
                           (200, completion(GOOD_RESPONSE)))
        sleeps: list[float] = []
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        result = detect(request, remote_config(stub_server.url), catalog, sleep=sleeps.append)
        assert len(result.detections) == 1
        assert len(stub_server.requests) == 3
        assert sleeps == [0.01, 0.02]

    def test_rate_limited_after_max_retries(self, stub_server, catalog):
        stub_server.script((429, {}), (429, {}), (429, {}))
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        with pytest.raises(RateLimited):
            detect(request, remote_config(stub_server.url), catalog, sleep=lambda s: None)
        assert len(stub_server.requests) == 3

    def test_server_errors_become_unavailable(self, stub_server, catalog):
        stub_server.script((500, {}), (503, {}), (500, {}))
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        with pytest.raises(BackendUnavailable):
            detect(request, remote_config(stub_server.url), catalog, sleep=lambda s: None)

    def test_auth_failure_no_retry(self, stub_server, catalog):
        stub_server.script((401, {}))
        sleeps: list[float] = []
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        with pytest.raises(AuthFailure):
            detect(request, remote_config(stub_server.url), catalog, sleep=sleeps.append)
        assert len(stub_server.requests) == 1
        assert sleeps == []

    def test_reask_once_then_succeed(self, stub_server, catalog):
        stub_server.script((200, completion("sorry, no JSON today")), (200, completion(GOOD_RESPONSE)))
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        result = detect(request, remote_config(stub_server.url), catalog, sleep=lambda s: None)
        assert len(result.detections) == 1
        assert len(stub_server.requests) == 2
        reminder = stub_server.requests[1]["body"]["messages"][0]["content"]
        assert "valid JSON only" in reminder

    def test_reask_failure_is_unparseable(self, stub_server, catalog):
        stub_server.script((200, completion("still prose")), (200, completion("more prose")))
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        with pytest.raises(ResponseUnparseable):
            detect(request, remote_config(stub_server.url), catalog, sleep=lambda s: None)


class TestRecord:
    @pytest.fixture(autouse=True)
    def _api_key(self, monkeypatch):
        monkeypatch.setenv("MICROPAD_API_KEY", "test-key-123")

    def test_record_then_replay_identical(self, stub_server, tmp_path, catalog):
        cassette = tmp_path / "tape.json"
        stub_server.script((200, completion(GOOD_RESPONSE)))
        request = BackendRequest.create(make_prompt(catalog=catalog), 1, 0)
        record_cfg = remote_config(stub_server.url, mode="record", cassette_path=str(cassette))
        recorded = detect(request, record_cfg, catalog, sleep=lambda s: None)
        replay_cfg = BackendConfig(mode="replay", cassette_path=str(cassette))
        replayed = detect(request, replay_cfg, catalog)
        # Identical up to the source stamp, which records the serving mode.
        payload = lambda d: (d.pattern_id, d.certainty, d.justification, d.evidence, d.run_id, d.chunk_index)
        assert [payload(d) for d in recorded.detections] == [payload(d) for d in replayed.detections]
        assert {d.source for d in recorded.detections} == {"remote"}
        assert {d.source for d in replayed.detections} == {"replay"}

    def test_recording_two_requests(self, stub_server, tmp_path, catalog):
        cassette = tmp_path / "tape.json"
        stub_server.script((200, completion(GOOD_RESPONSE)), (200, completion('{"detections":[]}')))
        config = remote_config(stub_server.url, mode="record", cassette_path=str(cassette))
        first = BackendRequest.create(make_prompt("a: 1\n", catalog=catalog), 1, 0)
        second = BackendRequest.create(make_prompt("b: 2\n", catalog=catalog), 1, 1)
        detect(first, config, catalog, sleep=lambda s: None)
        detect(second, config, catalog, sleep=lambda s: None)
        stored = load_cassette(cassette)
        assert len(stored) == 2
