from __future__ import annotations

import json
import threading
import time

import pytest
import requests

from kpe.backend import (
    CacheEntry,
    CompletionFailure,
    CompletionResult,
    FileCache,
    GenParams,
    HttpProvider,
    MockFixtures,
    MockProvider,
    cache_key,
    cached_complete,
    char_trigrams,
    overlap_bucket,
    request_digest,
    run_batch,
    trigram_overlap,
)
from kpe.corpus import EvalDataset, Segment, SystemOutput
from kpe.errors import (
    AuthError,
    CacheCorruptionError,
    MissingFixtureError,
    ProviderError,
    RateLimitError,
    TransportError,
)
from kpe.prompting import RenderedPrompt, builtin_templates, render_template

PARAMS = GenParams(model_id="model-x", temperature=0.0, max_tokens=256)


def _prompt(text: str, template_id: str = "gemba_classify") -> RenderedPrompt:
    return RenderedPrompt(
        template_id=template_id, version=1, final_text=text, bindings={}
    )


# digests ----------------------------------------------------------------

def test_cache_key_golden():
    # frozen digest: any canonicalization change must be caught deliberately
    assert (
        cache_key("model-x", "gemba_classify", 1, "final text", PARAMS)
        == "4cdfae56f644733df991f864439c97e76e94293c4601e1934a49e8db03c257f1"
    )
    stop_params = GenParams(
        model_id="model-x", temperature=0.0, max_tokens=256, stop=("a", "b")
    )
    assert (
        cache_key("model-x", "gemba_classify", 1, "final text", stop_params)
        == "6b44e6b7371f1869ae92f84b2ff146363185bf46e63472cc44dfd18f69a90014"
    )


def test_cache_key_field_boundaries():
    # length prefixes mean shifting a character across fields changes the key
    a = cache_key("m", "ab", 1, "c", PARAMS)
    b = cache_key("m", "a", 1, "bc", PARAMS)
    assert a != b


def test_cache_key_sensitivity():
    base = cache_key("m", "t", 1, "text", PARAMS)
    assert base != cache_key("m", "t", 2, "text", PARAMS)
    assert base != cache_key("m2", "t", 1, "text", PARAMS)
    hot = GenParams(model_id="m", temperature=0.7, max_tokens=256)
    assert base != cache_key("m", "t", 1, "text", hot)
    empty_stop = GenParams(model_id="m", temperature=0.0, max_tokens=256, stop=())
    assert base != cache_key("m", "t", 1, "text", empty_stop)


def test_cache_key_integer_temperature_normalized():
    as_int = GenParams(model_id="m", temperature=0, max_tokens=256)
    as_float = GenParams(model_id="m", temperature=0.0, max_tokens=256)
    assert cache_key("m", "t", 1, "x", as_int) == cache_key("m", "t", 1, "x", as_float)


# file cache -------------------------------------------------------------

def _entry(digest_text: str = "hello") -> CacheEntry:
    prompt = _prompt(digest_text)
    digest = request_digest(prompt, PARAMS)
    return CacheEntry(
        request_digest=digest,
        model_id=PARAMS.model_id,
        template_id=prompt.template_id,
        template_version=prompt.version,
        final_text=prompt.final_text,
        temperature=PARAMS.temperature,
        max_tokens=PARAMS.max_tokens,
        stop=PARAMS.stop,
        completion_text="Class: Perfect translation",
        created_at=1000.0,
    )


def test_cache_put_get_round_trip(tmp_path):
    cache = FileCache(tmp_path / "cache")
    entry = _entry()
    cache.put(entry)
    got = cache.get(entry.request_digest)
    assert got == entry
    assert (cache.hits, cache.misses, cache.writes) == (1, 0, 1)


def test_cache_miss_counts(tmp_path):
    cache = FileCache(tmp_path / "cache")
    assert cache.get("0" * 64) is None
    assert cache.misses == 1


def test_cache_sharded_layout(tmp_path):
    cache = FileCache(tmp_path / "cache")
    entry = _entry()
    cache.put(entry)
    digest = entry.request_digest
    assert (tmp_path / "cache" / digest[:2] / f"{digest}.json").exists()


def test_corrupt_entry_quarantined(tmp_path):
    cache = FileCache(tmp_path / "cache")
    entry = _entry()
    cache.put(entry)
    path = tmp_path / "cache" / entry.request_digest[:2] / f"{entry.request_digest}.json"
    path.write_text("{ not json", encoding="utf-8")
    assert cache.get(entry.request_digest) is None
    assert cache.corruptions == 1
    assert path.with_suffix(".json.corrupt").exists()
    assert not path.exists()


def test_tampered_entry_fails_digest_check(tmp_path):
    cache = FileCache(tmp_path / "cache")
    entry = _entry()
    cache.put(entry)
    path = tmp_path / "cache" / entry.request_digest[:2] / f"{entry.request_digest}.json"
    obj = json.loads(path.read_text(encoding="utf-8"))
    obj["final_text"] = "tampered"
    path.write_text(json.dumps(obj), encoding="utf-8")
    assert cache.get(entry.request_digest) is None
    assert cache.corruptions == 1


def test_cache_gc_by_age(tmp_path):
    import os

    cache = FileCache(tmp_path / "cache")
    fresh, aged = _entry("fresh"), _entry("aged")
    cache.put(fresh)
    cache.put(aged)
    aged_path = (
        tmp_path / "cache" / aged.request_digest[:2] / f"{aged.request_digest}.json"
    )
    os.utime(aged_path, (1000, 1000))
    removed = cache.gc(max_age_s=3600, now=time.time())
    assert removed == 1
    assert cache.get(fresh.request_digest) is not None
    assert not aged_path.exists()


# http provider ----------------------------------------------------------

class FakeResponse:
    def __init__(self, status_code: int, body=None, bad_json: bool = False):
        self.status_code = status_code
        self._body = body
        self._bad_json = bad_json

    def json(self):
        if self._bad_json:
            raise ValueError("not json")
        return self._body


class FakeSession:
    def __init__(self, script):
        # script items: FakeResponse or an exception to raise
        self.script = list(script)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def _ok(text: str) -> FakeResponse:
    return FakeResponse(200, {"choices": [{"message": {"content": text}}]})


def _provider(script, **kwargs) -> tuple[HttpProvider, FakeSession, list]:
    session = FakeSession(script)
    sleeps: list[float] = []
    provider = HttpProvider(
        "https://api.example.test/v1/chat/completions",
        api_key="sk-test",
        session=session,
        sleep=sleeps.append,
        retry_base_s=1.0,
        max_attempts=5,
        **kwargs,
    )
    return provider, session, sleeps


def test_http_success_payload_and_auth_header():
    provider, session, _ = _provider([_ok("hi")])
    text = provider.complete(_prompt("ping"), PARAMS)
    assert text == "hi"
    req = session.requests[0]
    assert req["json"]["model"] == "model-x"
    assert req["json"]["messages"] == [{"role": "user", "content": "ping"}]
    assert req["headers"]["Authorization"] == "Bearer sk-test"


def test_http_retries_5xx_with_backoff():
    provider, _, sleeps = _provider([FakeResponse(500), FakeResponse(503), _ok("ok")])
    assert provider.complete(_prompt("x"), PARAMS) == "ok"
    assert sleeps == [1.0, 2.0]
    assert provider.attempts == 3


def test_http_rate_limit_exhausts_attempts():
    provider, _, sleeps = _provider([FakeResponse(429)] * 5)
    with pytest.raises(RateLimitError):
        provider.complete(_prompt("x"), PARAMS)
    assert sleeps == [1.0, 2.0, 4.0, 8.0]


def test_http_transport_errors_retried():
    provider, _, _ = _provider(
        [requests.ConnectionError("boom"), FakeResponse(408), _ok("ok")]
    )
    assert provider.complete(_prompt("x"), PARAMS) == "ok"


def test_http_auth_error_not_retried():
    provider, session, sleeps = _provider([FakeResponse(401)])
    with pytest.raises(AuthError):
        provider.complete(_prompt("x"), PARAMS)
    assert sleeps == []
    assert len(session.requests) == 1


def test_http_client_error_not_retried():
    provider, _, _ = _provider([FakeResponse(404)])
    with pytest.raises(ProviderError) as err:
        provider.complete(_prompt("x"), PARAMS)
    assert not isinstance(err.value, (AuthError, RateLimitError, TransportError))


def test_http_malformed_body_is_provider_error():
    provider, _, _ = _provider([FakeResponse(200, bad_json=True)])
    with pytest.raises(ProviderError):
        provider.complete(_prompt("x"), PARAMS)
    provider2, _, _ = _provider([FakeResponse(200, {"choices": []})])
    with pytest.raises(ProviderError):
        provider2.complete(_prompt("x"), PARAMS)


# trigram grading --------------------------------------------------------

def test_char_trigrams():
    assert char_trigrams("abcd") == {"abc", "bcd"}
    assert char_trigrams("ab") == set()


def test_trigram_overlap_hand_case():
    # 12 distinct trigrams each; 9 shared -> 0.75
    assert trigram_overlap("he came today.", "he come today.") == 0.75


def test_trigram_overlap_edges():
    assert trigram_overlap("same text", "same text") == 1.0
    assert trigram_overlap("abcdef", "uvwxyz") == 0.0
    assert trigram_overlap("ab", "ab") == 1.0
    assert trigram_overlap("ab", "cd") == 0.0
    assert trigram_overlap("ab", "abc") == 0.0


def test_overlap_bucket_edges():
    assert [overlap_bucket(o, 5) for o in (0.0, 0.19, 0.2, 0.4, 0.6, 0.8, 1.0)] == [
        0, 0, 1, 2, 3, 4, 4,
    ]
    assert overlap_bucket(0.5, 3) == 1
    assert overlap_bucket(1.0, 3) == 2


# mock provider ----------------------------------------------------------

def _tiny_fixtures() -> MockFixtures:
    segments = [
        Segment(lp="de-en", seg_id="s1", src_text="er kam heute."),
        Segment(lp="de-en", seg_id="s2", src_text="guten morgen."),
    ]
    outputs = [
        SystemOutput(lp="de-en", system_id="sysA", seg_id="s1", mt_text="he came today."),
        SystemOutput(lp="de-en", system_id="sysB", seg_id="s1", mt_text="he come today."),
        SystemOutput(lp="de-en", system_id="sysA", seg_id="s2", mt_text="qqqq zzzz"),
    ]
    dataset = EvalDataset.build(segments, outputs, [])
    refs = {("de-en", "s1"): "he came today.", ("de-en", "s2"): "good morning."}
    return MockFixtures.from_dataset(dataset, refs)


def _quality_prompt(mt: str, src: str = "er kam heute.") -> RenderedPrompt:
    template = builtin_templates().get("gemba_classify")
    return render_template(template, {"source_seg": src, "target_seg": mt})


def test_mock_identical_pair_top_class():
    provider = MockProvider(fixtures=_tiny_fixtures())
    text = provider.complete(_quality_prompt("he came today."), PARAMS)
    assert text == "Class: Perfect translation"


def test_mock_hand_overlap_case():
    provider = MockProvider(fixtures=_tiny_fixtures())
    # overlap 0.75 buckets to class 3 of 5
    text = provider.complete(_quality_prompt("he come today."), PARAMS)
    assert text == "Class: Most meaning preserved, minor issues"


def test_mock_disjoint_pair_bottom_class():
    provider = MockProvider(fixtures=_tiny_fixtures())
    text = provider.complete(_quality_prompt("qqqq zzzz", "guten morgen."), PARAMS)
    assert text == "Class: No meaning preserved"


def test_mock_stars_and_scalar_modes():
    fixtures = _tiny_fixtures()
    provider = MockProvider(fixtures=fixtures)
    registry = builtin_templates()
    stars_prompt = render_template(
        registry.get("gemba_stars"),
        {"source_seg": "er kam heute.", "target_seg": "he came today."},
    )
    assert provider.complete(stars_prompt, PARAMS) == "Stars: 5"
    scalar_prompt = render_template(
        registry.get("gemba_scalar"),
        {"source_seg": "er kam heute.", "target_seg": "he come today."},
    )
    assert provider.complete(scalar_prompt, PARAMS) == "Score: 75"


def test_mock_locate_falls_back_to_source_index():
    provider = MockProvider(fixtures=_tiny_fixtures())
    # unknown translation, known source: grade against that segment's ref
    text = provider.complete(_quality_prompt("he came today!", "er kam heute."), PARAMS)
    assert text.startswith("Class: ")


def test_mock_unknown_text_raises():
    provider = MockProvider(fixtures=_tiny_fixtures())
    with pytest.raises(MissingFixtureError):
        provider.complete(
            _quality_prompt("never seen before", "unbekannte quelle"), PARAMS
        )


def test_mock_combiner_rounds_half_up():
    provider = MockProvider(fixtures=_tiny_fixtures())
    template = builtin_templates().get("kpe_cot1_combine")
    prompt = render_template(
        template,
        {
            "source_seg": "er kam heute.",
            "target_seg": "he come today.",
            "perplexity_answer": "Moderately fluent",  # index 2
            "token_answer": "Most words preserved",  # index 3
        },
    )
    # mean 2.5 rounds half up to 3
    text = provider.complete(prompt, PARAMS)
    assert text == "Class: Most meaning preserved, minor issues"


def test_mock_alignment_cells():
    provider = MockProvider(fixtures=_tiny_fixtures())
    template = builtin_templates().get("kpe_token_align")
    prompt = render_template(
        template,
        {
            "source_seg": "1. He\n2. came\n3. .",
            "target_seg": "1. he\n2. went\n3. .",
        },
    )
    text = provider.complete(prompt, PARAMS)
    assert text.split("\n") == ["100, 2, 2", "2, 2, 2", "2, 2, 95"]


def test_fixtures_json_round_trip(tmp_path, toy):
    path = tmp_path / "fixtures.json"
    path.write_text(json.dumps(toy.fixtures.to_json_obj()), encoding="utf-8")
    reloaded = MockFixtures.from_json_file(path, toy.dataset)
    assert reloaded.refs == toy.fixtures.refs
    assert reloaded.aspect_refs == toy.fixtures.aspect_refs


# cached completion and batching ------------------------------------------

class CountingProvider:
    """Deterministic provider that records call order and can fail or stall."""

    def __init__(self, fail_texts=(), delay_texts=()):
        self.provider_id = "counting"
        self.calls = 0
        self.seen = []
        self.fail_texts = set(fail_texts)
        self.delay_texts = set(delay_texts)
        self._lock = threading.Lock()

    def complete(self, prompt, params):
        with self._lock:
            self.calls += 1
            self.seen.append(prompt.final_text)
        if prompt.final_text in self.delay_texts:
            time.sleep(0.05)
        if prompt.final_text in self.fail_texts:
            raise ProviderError(f"refused {prompt.final_text!r}")
        return f"echo {prompt.final_text}"


def test_cached_complete_hit_and_miss(tmp_path):
    cache = FileCache(tmp_path / "cache")
    provider = CountingProvider()
    first = cached_complete(provider, cache, _prompt("q"), PARAMS)
    second = cached_complete(provider, cache, _prompt("q"), PARAMS)
    assert first.from_cache is False
    assert second.from_cache is True
    assert second.text == first.text == "echo q"
    assert second.latency_ms == 0
    assert provider.calls == 1


def test_run_batch_coalesces_duplicates(tmp_path):
    cache = FileCache(tmp_path / "cache")
    provider = CountingProvider()
    prompts = [_prompt(f"q{i % 40}") for i in range(100)]
    results = run_batch(provider, cache, prompts, PARAMS, max_in_flight=8)
    assert provider.calls == 40
    assert sum(1 for r in results if r.from_cache) == 60
    for prompt, result in zip(prompts, results):
        assert isinstance(result, CompletionResult)
        assert result.text == f"echo {prompt.final_text}"


def test_run_batch_preserves_input_order(tmp_path):
    cache = FileCache(tmp_path / "cache")
    provider = CountingProvider(delay_texts={"q0", "q3"})
    prompts = [_prompt(f"q{i}") for i in range(8)]
    results = run_batch(provider, cache, prompts, PARAMS, max_in_flight=4)
    for prompt, result in zip(prompts, results):
        assert result.request_digest == request_digest(prompt, PARAMS)
        assert result.text == f"echo {prompt.final_text}"


def test_run_batch_captures_item_failures(tmp_path):
    cache = FileCache(tmp_path / "cache")
    provider = CountingProvider(fail_texts={"q2"})
    prompts = [_prompt(f"q{i}") for i in range(4)]
    results = run_batch(provider, cache, prompts, PARAMS)
    assert isinstance(results[2], CompletionFailure)
    assert results[2].error_kind == "ProviderError"
    assert all(isinstance(r, CompletionResult) for i, r in enumerate(results) if i != 2)


def test_run_batch_without_cache():
    provider = CountingProvider()
    prompts = [_prompt("a"), _prompt("a"), _prompt("b")]
    results = run_batch(provider, None, prompts, PARAMS)
    assert provider.calls == 2
    assert [r.text for r in results] == ["echo a", "echo a", "echo b"]


def test_run_batch_corruption_storm_aborts(tmp_path):
    cache = FileCache(tmp_path / "cache")
    provider = CountingProvider()
    prompts = [_prompt(f"q{i}") for i in range(4)]
    for prompt in prompts[:3]:
        digest = request_digest(prompt, PARAMS)
        path = cache.cache_dir / digest[:2] / f"{digest}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("garbage", encoding="utf-8")
    with pytest.raises(CacheCorruptionError):
        run_batch(provider, cache, prompts, PARAMS, max_in_flight=1)
    assert cache.corruptions >= 3


def test_run_batch_rejects_bad_concurrency():
    with pytest.raises(ValueError):
        run_batch(CountingProvider(), None, [], PARAMS, max_in_flight=0)


def test_run_batch_empty():
    assert run_batch(CountingProvider(), None, [], PARAMS) == []
