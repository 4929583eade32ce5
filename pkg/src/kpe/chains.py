"""Quality estimators: one-step prompts and two chain-of-thought composites.

Estimator names:

    gemba               single quality-classification prompt
    prompt1_perplexity  fluency of the translation alone
    prompt2_token       word-level source/translation similarity
    prompt3_sentence    sentence-level source/translation similarity
    cot1                prompt1 + prompt2, then a combining prompt
    cot2                prompt1 + prompt2 + prompt3, then a combining prompt

Chains execute stage-synchronously over a dataset: every step-k prompt in
the batch completes before any step-k+1 prompt is sent, so each stage is
one run_batch call and identical prompts coalesce. Combiner prompts are
bound to the parsed class labels of earlier steps (not raw responses).
A provider failure on any step aborts that pair; a parse failure follows
the step_failure policy ("abort_pair" or "substitute_middle", which binds
the step schema's middle class and flags the step record).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .backend import (
    CompletionFailure,
    CompletionResult,
    FileCache,
    GenParams,
    cached_complete,
    run_batch,
)
from .corpus import EvalDataset, SystemOutput
from .errors import InputError, ParseError
from .parsing import parse_categorical, parse_scalar, parse_stars
from .prompting import (
    ANSWER_PLACEHOLDERS,
    PromptTemplate,
    RenderedPrompt,
    TemplateRegistry,
    builtin_templates,
    render_template,
)

ONE_STEP_KINDS = ("gemba", "prompt1_perplexity", "prompt2_token", "prompt3_sentence")
COT_KINDS = ("cot1", "cot2")
ESTIMATOR_NAMES = ONE_STEP_KINDS + COT_KINDS
SCORING_MODES = ("cat5", "cat3", "stars", "scalar")

_MODE_SUFFIX = {"cat5": "", "cat3": "_cat3", "stars": "_stars", "scalar": "_scalar"}

_ONE_STEP_BASE = {
    "gemba": "gemba",
    "prompt1_perplexity": "kpe_perplexity",
    "prompt2_token": "kpe_token_sim",
    "prompt3_sentence": "kpe_sent_sim",
}

COT_STEP_KINDS = {
    "cot1": ("prompt1_perplexity", "prompt2_token"),
    "cot2": ("prompt1_perplexity", "prompt2_token", "prompt3_sentence"),
}

_COMBINER_BASE = {"cot1": "kpe_cot1_combine", "cot2": "kpe_cot2_combine"}


def template_id_for(kind_name: str, mode: str) -> str:
    """Resolve the template id for a one-step kind under a scoring mode."""
    base = _ONE_STEP_BASE[kind_name]
    if kind_name == "gemba" and mode == "cat5":
        return "gemba_classify"
    if kind_name == "gemba" and mode == "cat3":
        return "gemba_classify_cat3"
    return base + _MODE_SUFFIX[mode]


def combiner_template_id(kind_name: str, mode: str) -> str:
    return _COMBINER_BASE[kind_name] + _MODE_SUFFIX[mode]


@dataclass(frozen=True)
class EstimatorKind:
    """An estimator plus the scoring mode its templates answer in."""

    name: str
    scoring_mode: str = "cat5"

    def __post_init__(self) -> None:
        if self.name not in ESTIMATOR_NAMES:
            raise InputError(
                f"unknown estimator {self.name!r}; known: {', '.join(ESTIMATOR_NAMES)}"
            )
        if self.scoring_mode not in SCORING_MODES:
            raise InputError(
                f"unknown scoring mode {self.scoring_mode!r}; "
                f"known: {', '.join(SCORING_MODES)}"
            )
        if self.is_cot and self.scoring_mode not in ("cat5", "cat3"):
            raise InputError(
                f"{self.name} requires a categorical scoring mode, "
                f"not {self.scoring_mode!r}"
            )

    @property
    def is_cot(self) -> bool:
        return self.name in COT_KINDS

    @property
    def n_steps(self) -> int:
        """Prompt rounds per pair: 1 for one-step kinds, steps + combine for chains."""
        if not self.is_cot:
            return 1
        return len(COT_STEP_KINDS[self.name]) + 1


@dataclass(frozen=True)
class StepRecord:
    """Full trace of one prompt round for one (system, segment) pair.

    bindings are kept in memory so the digest can be re-derived by
    re-rendering; the persisted form keeps only (template_id, version,
    digest, parsed) and raw responses stay in the cache, addressed by
    digest.
    """

    template_id: str
    version: int
    digest: str
    bindings: dict[str, str] = field(compare=False)
    response_text: str | None = None
    parsed_ordinal: int | float | None = None
    parsed_class: str | None = None
    error: str | None = None


@dataclass(frozen=True)
class QualityScore:
    lp: str
    system_id: str
    seg_id: str
    estimator: str
    mode: str
    ordinal: int | float | None
    error: str | None
    steps: tuple[StepRecord, ...]


@dataclass
class ScoreTable:
    """All QualityScores of one estimator over one dataset run."""

    estimator: EstimatorKind
    model_id: str
    params: GenParams
    scores: dict[tuple[str, str, str], QualityScore] = field(default_factory=dict)

    def get(self, lp: str, system_id: str, seg_id: str) -> QualityScore | None:
        return self.scores.get((lp, system_id, seg_id))

    @property
    def total(self) -> int:
        return len(self.scores)

    @property
    def n_parsed(self) -> int:
        return sum(1 for s in self.scores.values() if s.ordinal is not None)

    @property
    def n_errored(self) -> int:
        return sum(1 for s in self.scores.values() if s.error is not None)

    def write_jsonl(self, path: str | Path) -> None:
        """One object per score, sorted by key; deterministic bytes."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for key in sorted(self.scores):
                score = self.scores[key]
                obj = {
                    "lp": score.lp,
                    "system_id": score.system_id,
                    "seg_id": score.seg_id,
                    "estimator": score.estimator,
                    "mode": score.mode,
                    "ordinal": score.ordinal,
                    "error": score.error,
                    "steps": [
                        {
                            "template_id": step.template_id,
                            "version": step.version,
                            "digest": step.digest,
                            "parsed": step.parsed_ordinal,
                        }
                        for step in score.steps
                    ],
                }
                fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True))
                fh.write("\n")


def load_score_file(path: str | Path) -> ScoreTable:
    """Rebuild a ScoreTable from its JSONL form (traces lose bindings/raw text)."""
    scores: dict[tuple[str, str, str], QualityScore] = {}
    estimator: EstimatorKind | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = EstimatorKind(name=obj["estimator"], scoring_mode=obj["mode"])
            if estimator is None:
                estimator = kind
            elif estimator != kind:
                raise InputError(f"{path}: mixed estimators in one score file")
            steps = tuple(
                StepRecord(
                    template_id=s["template_id"],
                    version=int(s["version"]),
                    digest=s["digest"],
                    bindings={},
                    parsed_ordinal=s["parsed"],
                )
                for s in obj["steps"]
            )
            score = QualityScore(
                lp=obj["lp"],
                system_id=obj["system_id"],
                seg_id=obj["seg_id"],
                estimator=obj["estimator"],
                mode=obj["mode"],
                ordinal=obj["ordinal"],
                error=obj["error"],
                steps=steps,
            )
            scores[(score.lp, score.system_id, score.seg_id)] = score
    if estimator is None:
        raise InputError(f"{path}: empty score file")
    return ScoreTable(
        estimator=estimator,
        model_id="",
        params=GenParams(model_id=""),
        scores=scores,
    )


def _parse_response(text: str, template: PromptTemplate, mode: str):
    """Returns (ordinal, class_string or None); raises ParseError subclasses."""
    schema = template.schema
    if mode in ("cat5", "cat3"):
        cat = parse_categorical(text, schema)
        return cat.index, cat.class_string
    if mode == "stars":
        star = parse_stars(text, int(schema.lo), int(schema.hi))
        return star.stars, None
    scalar = parse_scalar(text, schema.lo, schema.hi)
    return scalar.value, None


def _one_step_bindings(kind_name: str, src_text: str, mt_text: str) -> dict[str, str]:
    if kind_name == "prompt1_perplexity":
        return {"target_seg": mt_text}
    return {"source_seg": src_text, "target_seg": mt_text}


def _failure_note(stage: str, kind: str, message: str) -> str:
    return f"{stage}: {kind}: {message}"


class _PairState:
    """Mutable per-(system, segment) progress through a chain."""

    __slots__ = ("output", "src_text", "steps", "answers", "error", "ordinal")

    def __init__(self, output: SystemOutput, src_text: str) -> None:
        self.output = output
        self.src_text = src_text
        self.steps: list[StepRecord] = []
        self.answers: list[str] = []
        self.error: str | None = None
        self.ordinal: int | float | None = None

    @property
    def alive(self) -> bool:
        return self.error is None


def _run_stage(
    states: list[_PairState],
    make_bindings,
    template: PromptTemplate,
    provider,
    cache: FileCache | None,
    params: GenParams,
    max_in_flight: int,
    mode: str,
    *,
    is_final: bool,
    step_failure: str,
    stage_name: str,
) -> None:
    """Render, batch-complete and parse one stage for every live pair."""
    live = [st for st in states if st.alive]
    prompts: list[RenderedPrompt] = []
    for st in live:
        prompts.append(render_template(template, make_bindings(st)))
    outcomes = run_batch(provider, cache, prompts, params, max_in_flight=max_in_flight)
    for st, prompt, outcome in zip(live, prompts, outcomes):
        if isinstance(outcome, CompletionFailure):
            st.steps.append(
                StepRecord(
                    template_id=template.template_id,
                    version=template.version,
                    digest=outcome.request_digest,
                    bindings=prompt.bindings,
                    error=f"{outcome.error_kind}: {outcome.message}",
                )
            )
            st.error = _failure_note(stage_name, outcome.error_kind, outcome.message)
            continue
        assert isinstance(outcome, CompletionResult)
        try:
            ordinal, class_string = _parse_response(outcome.text, template, mode)
        except ParseError as exc:
            note = _failure_note(stage_name, type(exc).__name__, str(exc))
            if is_final or step_failure == "abort_pair":
                st.steps.append(
                    StepRecord(
                        template_id=template.template_id,
                        version=template.version,
                        digest=outcome.request_digest,
                        bindings=prompt.bindings,
                        response_text=outcome.text,
                        error=note,
                    )
                )
                st.error = note
            else:
                middle = template.schema.middle_class
                st.steps.append(
                    StepRecord(
                        template_id=template.template_id,
                        version=template.version,
                        digest=outcome.request_digest,
                        bindings=prompt.bindings,
                        response_text=outcome.text,
                        parsed_class=middle,
                        error=f"{note} (substituted middle class)",
                    )
                )
                st.answers.append(middle)
            continue
        st.steps.append(
            StepRecord(
                template_id=template.template_id,
                version=template.version,
                digest=outcome.request_digest,
                bindings=prompt.bindings,
                response_text=outcome.text,
                parsed_ordinal=ordinal,
                parsed_class=class_string,
            )
        )
        if is_final:
            st.ordinal = ordinal
        elif class_string is not None:
            st.answers.append(class_string)


def score_dataset(
    estimator: EstimatorKind,
    dataset: EvalDataset,
    provider,
    cache: FileCache | None,
    *,
    params: GenParams,
    max_in_flight: int = 4,
    step_failure: str = "abort_pair",
    registry: TemplateRegistry | None = None,
) -> ScoreTable:
    """Score every system output in the dataset with one estimator."""
    if step_failure not in ("abort_pair", "substitute_middle"):
        raise InputError(f"unknown step_failure policy {step_failure!r}")
    if registry is None:
        registry = builtin_templates()
    mode = estimator.scoring_mode

    states: list[_PairState] = []
    for output in sorted(dataset.outputs):
        src_text = dataset.get_segment(output.lp, output.seg_id).src_text
        state = _PairState(output, src_text)
        if not output.mt_text.strip():
            state.error = _failure_note("input", "InputError", "empty mt_text")
        states.append(state)

    if estimator.is_cot:
        step_kinds = COT_STEP_KINDS[estimator.name]
        for stage_no, step_kind in enumerate(step_kinds, start=1):
            template = registry.get(template_id_for(step_kind, mode))
            _run_stage(
                states,
                lambda st, k=step_kind: _one_step_bindings(k, st.src_text, st.output.mt_text),
                template,
                provider,
                cache,
                params,
                max_in_flight,
                mode,
                is_final=False,
                step_failure=step_failure,
                stage_name=f"step{stage_no}:{template.template_id}",
            )
        combiner = registry.get(combiner_template_id(estimator.name, mode))

        def combine_bindings(st: _PairState) -> dict[str, str]:
            bindings = {
                "source_seg": st.src_text,
                "target_seg": st.output.mt_text,
            }
            for i, answer in enumerate(st.answers):
                bindings[ANSWER_PLACEHOLDERS[i]] = answer
            return bindings

        _run_stage(
            states,
            combine_bindings,
            combiner,
            provider,
            cache,
            params,
            max_in_flight,
            mode,
            is_final=True,
            step_failure=step_failure,
            stage_name=f"combine:{combiner.template_id}",
        )
    else:
        template = registry.get(template_id_for(estimator.name, mode))
        _run_stage(
            states,
            lambda st: _one_step_bindings(estimator.name, st.src_text, st.output.mt_text),
            template,
            provider,
            cache,
            params,
            max_in_flight,
            mode,
            is_final=True,
            step_failure=step_failure,
            stage_name=f"step1:{template.template_id}",
        )

    table = ScoreTable(estimator=estimator, model_id=params.model_id, params=params)
    for st in states:
        out = st.output
        table.scores[(out.lp, out.system_id, out.seg_id)] = QualityScore(
            lp=out.lp,
            system_id=out.system_id,
            seg_id=out.seg_id,
            estimator=estimator.name,
            mode=mode,
            ordinal=st.ordinal,
            error=st.error,
            steps=tuple(st.steps),
        )
    return table


def _estimate_single(
    estimator: EstimatorKind,
    src_text: str,
    mt_text: str,
    provider,
    cache: FileCache | None,
    *,
    params: GenParams,
    step_failure: str = "abort_pair",
    registry: TemplateRegistry | None = None,
    lp: str = "",
    system_id: str = "",
    seg_id: str = "",
) -> QualityScore:
    """Sequential single-pair scoring, shared by the convenience entry points."""
    if not mt_text.strip():
        raise InputError("empty mt_text")
    if registry is None:
        registry = builtin_templates()
    mode = estimator.scoring_mode
    steps: list[StepRecord] = []
    answers: list[str] = []

    def run_one(template: PromptTemplate, bindings: dict[str, str], *, final: bool,
                stage_name: str) -> int | float | None:
        prompt = render_template(template, bindings)
        result = cached_complete(provider, cache, prompt, params)
        try:
            ordinal, class_string = _parse_response(result.text, template, mode)
        except ParseError as exc:
            note = _failure_note(stage_name, type(exc).__name__, str(exc))
            if final or step_failure == "abort_pair":
                steps.append(
                    StepRecord(
                        template_id=template.template_id,
                        version=template.version,
                        digest=result.request_digest,
                        bindings=prompt.bindings,
                        response_text=result.text,
                        error=note,
                    )
                )
                raise
            middle = template.schema.middle_class
            steps.append(
                StepRecord(
                    template_id=template.template_id,
                    version=template.version,
                    digest=result.request_digest,
                    bindings=prompt.bindings,
                    response_text=result.text,
                    parsed_class=middle,
                    error=f"{note} (substituted middle class)",
                )
            )
            answers.append(middle)
            return None
        steps.append(
            StepRecord(
                template_id=template.template_id,
                version=template.version,
                digest=result.request_digest,
                bindings=prompt.bindings,
                response_text=result.text,
                parsed_ordinal=ordinal,
                parsed_class=class_string,
            )
        )
        if class_string is not None and not final:
            answers.append(class_string)
        return ordinal

    if estimator.is_cot:
        for i, step_kind in enumerate(COT_STEP_KINDS[estimator.name], start=1):
            template = registry.get(template_id_for(step_kind, mode))
            run_one(
                template,
                _one_step_bindings(step_kind, src_text, mt_text),
                final=False,
                stage_name=f"step{i}:{template.template_id}",
            )
        combiner = registry.get(combiner_template_id(estimator.name, mode))
        bindings = {"source_seg": src_text, "target_seg": mt_text}
        for i, answer in enumerate(answers):
            bindings[ANSWER_PLACEHOLDERS[i]] = answer
        ordinal = run_one(
            combiner, bindings, final=True, stage_name=f"combine:{combiner.template_id}"
        )
    else:
        template = registry.get(template_id_for(estimator.name, mode))
        ordinal = run_one(
            template,
            _one_step_bindings(estimator.name, src_text, mt_text),
            final=True,
            stage_name=f"step1:{template.template_id}",
        )

    return QualityScore(
        lp=lp,
        system_id=system_id,
        seg_id=seg_id,
        estimator=estimator.name,
        mode=mode,
        ordinal=ordinal,
        error=None,
        steps=tuple(steps),
    )


def estimate_one_step(
    kind: EstimatorKind, src_text: str, mt_text: str, provider, cache=None, **kwargs
) -> QualityScore:
    """Score one pair with a single-prompt estimator."""
    if kind.is_cot:
        raise InputError(f"{kind.name} is a chain; use estimate_cot1/estimate_cot2")
    return _estimate_single(kind, src_text, mt_text, provider, cache, **kwargs)


def estimate_cot1(
    src_text: str, mt_text: str, provider, cache=None, *, scoring_mode: str = "cat5", **kwargs
) -> QualityScore:
    """Fluency + word-level steps, then a combining prompt."""
    kind = EstimatorKind(name="cot1", scoring_mode=scoring_mode)
    return _estimate_single(kind, src_text, mt_text, provider, cache, **kwargs)


def estimate_cot2(
    src_text: str, mt_text: str, provider, cache=None, *, scoring_mode: str = "cat5", **kwargs
) -> QualityScore:
    """Fluency + word-level + sentence-level steps, then a combining prompt."""
    kind = EstimatorKind(name="cot2", scoring_mode=scoring_mode)
    return _estimate_single(kind, src_text, mt_text, provider, cache, **kwargs)
