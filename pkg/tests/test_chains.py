from __future__ import annotations

import threading

import pytest

from kpe.backend import FileCache, GenParams, MockFixtures, MockProvider, request_digest
from kpe.chains import (
    COT_STEP_KINDS,
    EstimatorKind,
    combiner_template_id,
    estimate_cot1,
    estimate_cot2,
    estimate_one_step,
    load_score_file,
    score_dataset,
    template_id_for,
)
from kpe.corpus import EvalDataset, Segment, SystemOutput
from kpe.errors import InputError, ParseError
from kpe.prompting import builtin_templates, render_template

PARAMS = GenParams(model_id="mock-1")


def _pair_fixtures(mt_by_seg: dict[str, str], refs_by_seg: dict[str, str]):
    segments = [
        Segment(lp="de-en", seg_id=seg, src_text=f"quelle {seg}") for seg in mt_by_seg
    ]
    outputs = [
        SystemOutput(lp="de-en", system_id="sysA", seg_id=seg, mt_text=mt)
        for seg, mt in mt_by_seg.items()
    ]
    dataset = EvalDataset.build(segments, outputs, [])
    refs = {("de-en", seg): ref for seg, ref in refs_by_seg.items()}
    return dataset, MockFixtures.from_dataset(dataset, refs)


IDENTICAL = "the very same translation text."


@pytest.fixture()
def identical_pair():
    dataset, fixtures = _pair_fixtures({"s1": IDENTICAL}, {"s1": IDENTICAL})
    return dataset, MockProvider(fixtures=fixtures)


# estimator kinds ---------------------------------------------------------

def test_estimator_kind_validation():
    assert EstimatorKind(name="cot1").n_steps == 3
    assert EstimatorKind(name="cot2").n_steps == 4
    assert EstimatorKind(name="gemba").n_steps == 1
    with pytest.raises(InputError):
        EstimatorKind(name="cot3")
    with pytest.raises(InputError):
        EstimatorKind(name="gemba", scoring_mode="cat7")
    with pytest.raises(InputError):
        EstimatorKind(name="cot1", scoring_mode="scalar")
    with pytest.raises(InputError):
        EstimatorKind(name="cot2", scoring_mode="stars")


def test_template_routing():
    assert template_id_for("gemba", "cat5") == "gemba_classify"
    assert template_id_for("gemba", "cat3") == "gemba_classify_cat3"
    assert template_id_for("gemba", "stars") == "gemba_stars"
    assert template_id_for("gemba", "scalar") == "gemba_scalar"
    assert template_id_for("prompt1_perplexity", "cat5") == "kpe_perplexity"
    assert template_id_for("prompt2_token", "cat3") == "kpe_token_sim_cat3"
    assert template_id_for("prompt3_sentence", "stars") == "kpe_sent_sim_stars"
    assert combiner_template_id("cot1", "cat5") == "kpe_cot1_combine"
    assert combiner_template_id("cot2", "cat3") == "kpe_cot2_combine_cat3"


# single-pair estimation ----------------------------------------------------

def test_one_step_trace(identical_pair):
    _, provider = identical_pair
    score = estimate_one_step(
        EstimatorKind(name="gemba"), "quelle s1", IDENTICAL, provider, params=PARAMS
    )
    assert score.ordinal == 4
    assert len(score.steps) == 1
    step = score.steps[0]
    assert step.template_id == "gemba_classify"
    assert step.parsed_class == "Perfect translation"
    assert step.response_text == "Class: Perfect translation"


def test_one_step_rejects_chain_kinds(identical_pair):
    _, provider = identical_pair
    with pytest.raises(InputError):
        estimate_one_step(
            EstimatorKind(name="cot1"), "q", "mt text", provider, params=PARAMS
        )


def test_perplexity_binds_translation_only(identical_pair):
    _, provider = identical_pair
    score = estimate_one_step(
        EstimatorKind(name="prompt1_perplexity"),
        "quelle s1",
        IDENTICAL,
        provider,
        params=PARAMS,
    )
    assert set(score.steps[0].bindings) == {"target_seg"}


def test_cot1_trace_structure(identical_pair):
    _, provider = identical_pair
    score = estimate_cot1("quelle s1", IDENTICAL, provider, params=PARAMS)
    assert score.ordinal == 4
    assert [s.template_id for s in score.steps] == [
        "kpe_perplexity",
        "kpe_token_sim",
        "kpe_cot1_combine",
    ]
    combine = score.steps[-1]
    # the combiner receives the parsed class labels of the earlier steps
    assert combine.bindings["perplexity_answer"] == "Perfectly fluent"
    assert combine.bindings["token_answer"] == "All words preserved"
    assert "Perfectly fluent" in _rerender(combine).final_text


def test_cot2_trace_structure(identical_pair):
    _, provider = identical_pair
    score = estimate_cot2("quelle s1", IDENTICAL, provider, params=PARAMS)
    assert score.ordinal == 4
    assert len(score.steps) == 4
    assert score.steps[-1].bindings["sentence_answer"] == "Identical meaning"


def _rerender(step):
    template = builtin_templates().get(step.template_id)
    return render_template(template, step.bindings)


def test_step_digests_rederivable(identical_pair):
    _, provider = identical_pair
    score = estimate_cot2("quelle s1", IDENTICAL, provider, params=PARAMS)
    for step in score.steps:
        assert request_digest(_rerender(step), PARAMS) == step.digest


def test_empty_mt_rejected(identical_pair):
    _, provider = identical_pair
    with pytest.raises(InputError):
        estimate_one_step(
            EstimatorKind(name="gemba"), "quelle s1", "   ", provider, params=PARAMS
        )


# parse-failure policies ----------------------------------------------------

class GarblingProvider:
    """Wraps the mock but answers chosen templates with unparseable text."""

    def __init__(self, inner, garbled_template_ids):
        self.inner = inner
        self.garbled = set(garbled_template_ids)
        self.provider_id = "garbling"
        self.calls = 0

    def complete(self, prompt, params):
        self.calls += 1
        if prompt.template_id in self.garbled:
            return "I would rather not say."
        return self.inner.complete(prompt, params)


def test_step_parse_failure_aborts_pair_by_default(identical_pair):
    _, mock = identical_pair
    provider = GarblingProvider(mock, {"kpe_perplexity"})
    with pytest.raises(ParseError):
        estimate_cot1("quelle s1", IDENTICAL, provider, params=PARAMS)


def test_step_parse_failure_substitutes_middle(identical_pair):
    _, mock = identical_pair
    provider = GarblingProvider(mock, {"kpe_perplexity"})
    score = estimate_cot1(
        "quelle s1", IDENTICAL, provider, params=PARAMS, step_failure="substitute_middle"
    )
    first = score.steps[0]
    assert first.parsed_class == "Moderately fluent"
    assert "substituted middle class" in first.error
    # middle (2) and top (4) average to 3
    assert score.ordinal == 3


def test_final_parse_failure_never_substituted(identical_pair):
    _, mock = identical_pair
    provider = GarblingProvider(mock, {"kpe_cot1_combine"})
    with pytest.raises(ParseError):
        estimate_cot1(
            "quelle s1",
            IDENTICAL,
            provider,
            params=PARAMS,
            step_failure="substitute_middle",
        )


# dataset scoring -----------------------------------------------------------

def test_score_dataset_marks_failures_without_aborting():
    dataset, fixtures = _pair_fixtures(
        {"s1": IDENTICAL, "s2": "different text entirely."},
        {"s1": IDENTICAL},  # s2 has no pseudo-reference
    )
    provider = MockProvider(fixtures=fixtures)
    table = score_dataset(
        EstimatorKind(name="gemba"), dataset, provider, None, params=PARAMS
    )
    ok = table.get("de-en", "sysA", "s1")
    bad = table.get("de-en", "sysA", "s2")
    assert ok.ordinal == 4 and ok.error is None
    assert bad.ordinal is None
    assert "MissingFixtureError" in bad.error
    assert table.n_errored == 1 and table.n_parsed == 1


def test_score_dataset_empty_mt_skips_provider():
    segments = [Segment(lp="de-en", seg_id="s1", src_text="quelle")]
    outputs = [SystemOutput(lp="de-en", system_id="sysA", seg_id="s1", mt_text="")]
    dataset = EvalDataset.build(segments, outputs, [])
    fixtures = MockFixtures.from_dataset(dataset, {("de-en", "s1"): "ref"})
    provider = MockProvider(fixtures=fixtures)
    table = score_dataset(
        EstimatorKind(name="gemba"), dataset, provider, None, params=PARAMS
    )
    score = table.get("de-en", "sysA", "s1")
    assert provider.calls == 0
    assert score.steps == ()
    assert "empty mt_text" in score.error


def test_chain_failure_skips_later_stages(identical_pair):
    dataset, _ = identical_pair
    mock = MockProvider(
        fixtures=MockFixtures.from_dataset(dataset, {("de-en", "s1"): IDENTICAL})
    )
    provider = GarblingProvider(mock, {"kpe_token_sim"})
    table = score_dataset(
        EstimatorKind(name="cot1"), dataset, provider, None, params=PARAMS
    )
    score = table.get("de-en", "sysA", "s1")
    assert score.ordinal is None
    assert len(score.steps) == 2  # perplexity ok, token failed, no combine
    assert score.steps[1].error is not None


class StageOrderProvider:
    """Records the template id of every call to check stage synchrony."""

    def __init__(self, inner):
        self.inner = inner
        self.provider_id = "ordered"
        self.calls = 0
        self.sequence = []
        self._lock = threading.Lock()

    def complete(self, prompt, params):
        with self._lock:
            self.calls += 1
            self.sequence.append(prompt.template_id)
        return self.inner.complete(prompt, params)


def test_chain_stages_are_synchronous():
    mts = {f"s{i}": f"translation number {i} with words." for i in range(6)}
    dataset, fixtures = _pair_fixtures(mts, {seg: mt for seg, mt in mts.items()})
    provider = StageOrderProvider(MockProvider(fixtures=fixtures))
    score_dataset(
        EstimatorKind(name="cot1"), dataset, provider, None,
        params=PARAMS, max_in_flight=3,
    )
    seq = provider.sequence
    assert len(seq) == 18
    boundaries = [seq.index(t) for t in ("kpe_perplexity", "kpe_token_sim", "kpe_cot1_combine")]
    assert boundaries == sorted(boundaries)
    # no stage starts before the previous one fully drains
    assert seq[:6].count("kpe_perplexity") == 6
    assert seq[6:12].count("kpe_token_sim") == 6
    assert seq[12:].count("kpe_cot1_combine") == 6


def test_chain_reuses_cached_step_responses(tmp_path, identical_pair):
    dataset, provider = identical_pair
    cache = FileCache(tmp_path / "cache")
    score_dataset(
        EstimatorKind(name="prompt1_perplexity"), dataset, provider, cache, params=PARAMS
    )
    calls_before = provider.calls
    table = score_dataset(
        EstimatorKind(name="cot1"), dataset, provider, cache, params=PARAMS
    )
    # the chain's first step is the same prompt the one-step run already cached
    assert provider.calls == calls_before + 2  # token_sim + combine only
    assert table.get("de-en", "sysA", "s1").ordinal == 4


# persistence ----------------------------------------------------------------

def test_score_file_round_trip(tmp_path, identical_pair):
    dataset, provider = identical_pair
    table = score_dataset(
        EstimatorKind(name="cot1"), dataset, provider, None, params=PARAMS
    )
    path = tmp_path / "scores_cot1.jsonl"
    table.write_jsonl(path)
    loaded = load_score_file(path)
    assert loaded.estimator == table.estimator
    assert loaded.total == table.total
    original = table.get("de-en", "sysA", "s1")
    reloaded = loaded.get("de-en", "sysA", "s1")
    assert reloaded.ordinal == original.ordinal
    assert [s.digest for s in reloaded.steps] == [s.digest for s in original.steps]
    assert [s.parsed_ordinal for s in reloaded.steps] == [
        s.parsed_ordinal for s in original.steps
    ]


def test_score_file_rejects_mixed_estimators(tmp_path):
    path = tmp_path / "scores.jsonl"
    row1 = (
        '{"lp": "de-en", "system_id": "a", "seg_id": "s", "estimator": "gemba",'
        ' "mode": "cat5", "ordinal": 4, "error": null, "steps": []}'
    )
    row2 = row1.replace('"gemba"', '"cot1"')
    path.write_text(row1 + "\n" + row2 + "\n", encoding="utf-8")
    with pytest.raises(InputError, match="mixed"):
        load_score_file(path)


def test_score_file_rejects_empty(tmp_path):
    path = tmp_path / "scores.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(InputError, match="empty"):
        load_score_file(path)


def test_unknown_step_failure_policy(identical_pair):
    dataset, provider = identical_pair
    with pytest.raises(InputError):
        score_dataset(
            EstimatorKind(name="gemba"), dataset, provider, None,
            params=PARAMS, step_failure="wing_it",
        )
