"""Completion providers, response cache, and the bounded batch executor.

The HTTP provider speaks the common chat-completions wire shape. The mock
provider grades deterministically from pseudo-reference fixtures so the
whole harness runs offline. Both sit behind the same two-method surface
(`provider_id`, `complete`), and everything that talks to a provider goes
through `cached_complete`, which keys responses by a content digest over
(model, template id, template version, final prompt text, generation
parameters). Cache entries are plain JSON files, written atomically, and
verified against their digest on every read; anything that fails the check
is quarantined and treated as a miss.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

import requests

from .corpus import EvalDataset
from .errors import (
    AuthError,
    CacheCorruptionError,
    KpeError,
    MissingFixtureError,
    ProviderError,
    RateLimitError,
    TransportError,
)
from .parsing import category_to_ordinal
from .prompting import (
    ANSWER_PLACEHOLDERS,
    COMBINE_STEP_TEMPLATES,
    RenderedPrompt,
    TemplateRegistry,
    builtin_templates,
    parse_token_list,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenParams:
    model_id: str
    temperature: float = 0.0
    max_tokens: int = 256
    stop: tuple[str, ...] | None = None


@dataclass(frozen=True)
class CompletionResult:
    text: str
    provider_id: str
    from_cache: bool
    latency_ms: int
    request_digest: str


@dataclass(frozen=True)
class CompletionFailure:
    """Per-item error captured by run_batch instead of raising."""

    error_kind: str
    message: str
    request_digest: str


# digests -------------------------------------------------------------------

def _encode_part(part: str) -> bytes:
    data = part.encode("utf-8")
    return f"{len(data)}:".encode("ascii") + data


def cache_key(
    model_id: str,
    template_id: str,
    template_version: int,
    final_text: str,
    params: GenParams,
) -> str:
    """64-hex digest over a canonical, length-prefixed field serialization.

    Field order is fixed; every field is length-prefixed, so no separator
    collision can make two different requests collide. Stable across
    platforms and processes.
    """
    parts = [
        model_id,
        template_id,
        str(int(template_version)),
        final_text,
        repr(float(params.temperature)),
        str(int(params.max_tokens)),
    ]
    if params.stop is None:
        parts.append("stop:none")
    else:
        parts.append(f"stop:{len(params.stop)}")
        parts.extend(params.stop)
    h = hashlib.sha256()
    for part in parts:
        h.update(_encode_part(part))
    return h.hexdigest()


def request_digest(prompt: RenderedPrompt, params: GenParams) -> str:
    return cache_key(
        params.model_id, prompt.template_id, prompt.version, prompt.final_text, params
    )


# cache ---------------------------------------------------------------------

@dataclass(frozen=True)
class CacheEntry:
    request_digest: str
    model_id: str
    template_id: str
    template_version: int
    final_text: str
    temperature: float
    max_tokens: int
    stop: tuple[str, ...] | None
    completion_text: str
    created_at: float

    def params(self) -> GenParams:
        return GenParams(
            model_id=self.model_id,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            stop=self.stop,
        )


class FileCache:
    """Content-addressed response cache: <dir>/<digest[:2]>/<digest>.json."""

    def __init__(self, cache_dir: str | Path) -> None:
        self.cache_dir = Path(cache_dir)
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.writes = 0
        self.corruptions = 0

    def _path(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / f"{digest}.json"

    def get(self, digest: str) -> CacheEntry | None:
        """Return the verified entry, or None. Corrupt entries are quarantined."""
        path = self._path(digest)
        if not path.exists():
            with self._lock:
                self.misses += 1
            return None
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
            entry = CacheEntry(
                request_digest=obj["request_digest"],
                model_id=obj["model_id"],
                template_id=obj["template_id"],
                template_version=int(obj["template_version"]),
                final_text=obj["final_text"],
                temperature=float(obj["temperature"]),
                max_tokens=int(obj["max_tokens"]),
                stop=tuple(obj["stop"]) if obj["stop"] is not None else None,
                completion_text=obj["completion_text"],
                created_at=float(obj["created_at"]),
            )
            recomputed = cache_key(
                entry.model_id,
                entry.template_id,
                entry.template_version,
                entry.final_text,
                entry.params(),
            )
            if recomputed != digest or entry.request_digest != digest:
                raise ValueError("digest mismatch")
        except (ValueError, KeyError, TypeError, json.JSONDecodeError):
            self._quarantine(path)
            return None
        with self._lock:
            self.hits += 1
        return entry

    def _quarantine(self, path: Path) -> None:
        quarantined = path.with_suffix(".json.corrupt")
        try:
            os.replace(path, quarantined)
        except OSError:
            pass
        with self._lock:
            self.corruptions += 1
            self.misses += 1
        log.warning("quarantined corrupt cache entry %s", path.name)

    def put(self, entry: CacheEntry) -> None:
        """Atomic write: temp file in the target directory, then rename."""
        path = self._path(entry.request_digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "request_digest": entry.request_digest,
            "model_id": entry.model_id,
            "template_id": entry.template_id,
            "template_version": entry.template_version,
            "final_text": entry.final_text,
            "temperature": entry.temperature,
            "max_tokens": entry.max_tokens,
            "stop": list(entry.stop) if entry.stop is not None else None,
            "completion_text": entry.completion_text,
            "created_at": entry.created_at,
        }
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, ensure_ascii=False, sort_keys=True)
            os.replace(tmp_name, path)
        except BaseException:
            try:
                os.unlink(tmp_name)
            except OSError:
                pass
            raise
        with self._lock:
            self.writes += 1

    def gc(self, max_age_s: float, now: float | None = None) -> int:
        """Delete entries (and quarantined files) older than max_age_s by mtime."""
        if now is None:
            now = time.time()
        cutoff = now - max_age_s
        removed = 0
        if not self.cache_dir.exists():
            return 0
        for path in sorted(self.cache_dir.glob("*/*")):
            if path.suffix not in (".json", ".corrupt"):
                continue
            try:
                if path.stat().st_mtime < cutoff:
                    path.unlink()
                    removed += 1
            except OSError:
                continue
        return removed


# http provider --------------------------------------------------------------

_RETRYABLE_STATUS = {408, 429}


class HttpProvider:
    """Chat-completions client with exponential backoff.

    Retries transport failures, 408, 429 and 5xx up to max_attempts with
    delays retry_base_s * 2**attempt. 401/403 raise AuthError immediately;
    other 4xx raise ProviderError. The session and sleep function are
    injectable for tests.
    """

    def __init__(
        self,
        endpoint_url: str,
        api_key: str | None = None,
        session=None,
        sleep=time.sleep,
        retry_base_s: float = 1.0,
        max_attempts: int = 5,
        timeout_s: float = 60.0,
    ) -> None:
        self.endpoint_url = endpoint_url
        self.api_key = api_key
        self.session = session if session is not None else requests.Session()
        self.sleep = sleep
        self.retry_base_s = retry_base_s
        self.max_attempts = max_attempts
        self.timeout_s = timeout_s
        self.provider_id = "http"
        self._lock = threading.Lock()
        self.calls = 0
        self.attempts = 0

    def complete(self, prompt: RenderedPrompt, params: GenParams) -> str:
        with self._lock:
            self.calls += 1
        payload = {
            "model": params.model_id,
            "messages": [{"role": "user", "content": prompt.final_text}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.stop is not None:
            payload["stop"] = list(params.stop)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: KpeError | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.retry_base_s * (2 ** (attempt - 1)))
            with self._lock:
                self.attempts += 1
            try:
                resp = self.session.post(
                    self.endpoint_url, json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_error = TransportError(f"transport failure: {exc}")
                continue
            status = getattr(resp, "status_code", 0)
            if status in (401, 403):
                raise AuthError(f"authentication rejected (HTTP {status})", status=status)
            if status in _RETRYABLE_STATUS or status >= 500:
                kind = RateLimitError if status == 429 else TransportError
                last_error = kind(f"HTTP {status} from provider", status=status)
                continue
            if status != 200:
                raise ProviderError(f"HTTP {status} from provider", status=status)
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"malformed provider response: {exc}") from exc
            if not isinstance(text, str):
                raise ProviderError("provider response content is not text")
            return text
        assert last_error is not None
        raise last_error


# mock provider ---------------------------------------------------------------

def char_trigrams(text: str) -> set[str]:
    """All distinct length-3 substrings (spaces and punctuation included)."""
    return {text[i : i + 3] for i in range(len(text) - 2)}


def trigram_overlap(a: str, b: str) -> float:
    """Overlap coefficient |A & B| / min(|A|, |B|) of character trigram sets.

    Strings shorter than 3 characters have no trigrams; two such strings
    overlap fully when equal and not at all otherwise.
    """
    ta, tb = char_trigrams(a), char_trigrams(b)
    if not ta or not tb:
        return 1.0 if a == b else 0.0
    return len(ta & tb) / min(len(ta), len(tb))


def overlap_bucket(o: float, n_classes: int) -> int:
    """Map an overlap in [0, 1] to one of n evenly spaced class indexes.

    For five classes the edges are 0.2/0.4/0.6/0.8: below 0.2 is class 0,
    0.8 and above is class 4.
    """
    return min(n_classes - 1, int(o * n_classes))


def _is_punct_token(token: str) -> bool:
    return bool(token) and all(
        unicodedata.category(ch).startswith("P") for ch in token
    )


@dataclass
class MockFixtures:
    """Pseudo-references keyed by (lp, seg_id), plus reverse text indexes.

    refs is the base mapping; aspect_refs may override it per grading
    aspect ("fluency", "token", "sentence") so the one-step prompts can be
    given different error patterns. Prompts carry only bound texts, so the
    provider finds the segment through the mt (or source) reverse index.
    """

    refs: dict[tuple[str, str], str]
    aspect_refs: dict[str, dict[tuple[str, str], str]] = field(default_factory=dict)
    _mt_index: dict[str, list[tuple[str, str]]] = field(default_factory=dict, repr=False)
    _src_index: dict[str, list[tuple[str, str]]] = field(default_factory=dict, repr=False)

    @classmethod
    def from_dataset(
        cls,
        dataset: EvalDataset,
        refs: dict[tuple[str, str], str],
        aspect_refs: dict[str, dict[tuple[str, str], str]] | None = None,
    ) -> "MockFixtures":
        fixtures = cls(refs=dict(refs), aspect_refs=dict(aspect_refs or {}))
        for output in sorted(dataset.outputs):
            fixtures._mt_index.setdefault(output.mt_text, [])
            key = (output.lp, output.seg_id)
            if key not in fixtures._mt_index[output.mt_text]:
                fixtures._mt_index[output.mt_text].append(key)
        for segment in sorted(dataset.segments):
            fixtures._src_index.setdefault(segment.src_text, [])
            fixtures._src_index[segment.src_text].append((segment.lp, segment.seg_id))
        return fixtures

    @classmethod
    def from_json_file(cls, path: str | Path, dataset: EvalDataset) -> "MockFixtures":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        refs = {(r["lp"], r["seg_id"]): r["text"] for r in obj["refs"]}
        aspect_refs = {
            aspect: {(r["lp"], r["seg_id"]): r["text"] for r in rows}
            for aspect, rows in obj.get("aspect_refs", {}).items()
        }
        return cls.from_dataset(dataset, refs, aspect_refs)

    def to_json_obj(self) -> dict:
        def rows(mapping: dict[tuple[str, str], str]) -> list[dict]:
            return [
                {"lp": lp, "seg_id": seg_id, "text": text}
                for (lp, seg_id), text in sorted(mapping.items())
            ]

        return {
            "refs": rows(self.refs),
            "aspect_refs": {a: rows(m) for a, m in sorted(self.aspect_refs.items())},
        }

    def locate(self, mt_text: str, src_text: str | None = None) -> tuple[str, str]:
        mt_cands = self._mt_index.get(mt_text, [])
        src_cands = self._src_index.get(src_text, []) if src_text is not None else []
        if mt_cands and src_cands:
            for key in mt_cands:
                if key in src_cands:
                    return key
        if mt_cands:
            return sorted(mt_cands)[0]
        if src_cands:
            return sorted(src_cands)[0]
        raise MissingFixtureError(f"no fixture for mt {mt_text[:60]!r}")

    def ref(self, aspect: str, key: tuple[str, str]) -> str:
        override = self.aspect_refs.get(aspect, {})
        if key in override:
            return override[key]
        if key in self.refs:
            return self.refs[key]
        raise MissingFixtureError(f"no pseudo-reference for {key}")


def _aspect_of(template_id: str) -> str:
    if template_id.startswith("kpe_perplexity"):
        return "fluency"
    if template_id.startswith("kpe_token_sim"):
        return "token"
    if template_id.startswith("kpe_sent_sim"):
        return "sentence"
    return "base"


class MockProvider:
    """Deterministic offline provider.

    Quality prompts are graded by the character-trigram overlap between the
    translation and the segment's pseudo-reference (both lowercased),
    bucketed into the prompt's classes. Combiner prompts answer with the
    class at the rounded mean of the step answers bound into the prompt.
    Alignment prompts get a percentage matrix: 95 for identical punctuation
    tokens, 100 for case-insensitively equal tokens, 2 otherwise. Responses
    are a pure function of (rendered prompt, fixtures).
    """

    def __init__(
        self,
        fixtures: MockFixtures | None = None,
        registry: TemplateRegistry | None = None,
    ) -> None:
        self.fixtures = fixtures
        self.registry = registry if registry is not None else builtin_templates()
        self.provider_id = "mock"
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, prompt: RenderedPrompt, params: GenParams) -> str:
        with self._lock:
            self.calls += 1
        if prompt.template_id == "kpe_token_align":
            return self._align_response(prompt)
        if prompt.template_id in COMBINE_STEP_TEMPLATES:
            return self._combine_response(prompt)
        return self._quality_response(prompt)

    def _align_response(self, prompt: RenderedPrompt) -> str:
        src_tokens = parse_token_list(prompt.bindings["source_seg"])
        mt_tokens = parse_token_list(prompt.bindings["target_seg"])
        lines = []
        for s in src_tokens:
            cells = []
            for t in mt_tokens:
                if _is_punct_token(s) and _is_punct_token(t) and s == t:
                    cells.append("95")
                elif s.lower() == t.lower():
                    cells.append("100")
                else:
                    cells.append("2")
            lines.append(", ".join(cells))
        return "\n".join(lines)

    def _combine_response(self, prompt: RenderedPrompt) -> str:
        template = self.registry.get(prompt.template_id)
        step_ids = COMBINE_STEP_TEMPLATES[prompt.template_id]
        indexes = []
        for i, step_id in enumerate(step_ids):
            answer = prompt.bindings[ANSWER_PLACEHOLDERS[i]]
            indexes.append(category_to_ordinal(answer, self.registry.get(step_id).schema))
        final = int(sum(indexes) / len(indexes) + 0.5)  # round half up
        return f"Class: {template.schema.classes[final]}"

    def _quality_response(self, prompt: RenderedPrompt) -> str:
        if self.fixtures is None:
            raise MissingFixtureError("mock provider was built without fixtures")
        mt_text = prompt.bindings["target_seg"]
        src_text = prompt.bindings.get("source_seg")
        key = self.fixtures.locate(mt_text, src_text)
        ref = self.fixtures.ref(_aspect_of(prompt.template_id), key)
        o = trigram_overlap(mt_text.lower(), ref.lower())
        schema = self.registry.get(prompt.template_id).schema
        if schema.kind == "categorical":
            idx = overlap_bucket(o, len(schema.classes))
            return f"Class: {schema.classes[idx]}"
        if schema.kind == "stars":
            span = int(schema.hi) - int(schema.lo) + 1
            return f"Stars: {int(schema.lo) + overlap_bucket(o, span)}"
        return f"Score: {round(schema.lo + o * (schema.hi - schema.lo))}"


# cached completion and batching ----------------------------------------------

def cached_complete(
    provider,
    cache: FileCache | None,
    prompt: RenderedPrompt,
    params: GenParams,
) -> CompletionResult:
    """Serve from the cache when possible, else call the provider and store."""
    digest = request_digest(prompt, params)
    if cache is not None:
        entry = cache.get(digest)
        if entry is not None:
            return CompletionResult(
                text=entry.completion_text,
                provider_id=provider.provider_id,
                from_cache=True,
                latency_ms=0,
                request_digest=digest,
            )
    started = time.monotonic()
    text = provider.complete(prompt, params)
    latency_ms = int((time.monotonic() - started) * 1000)
    if cache is not None:
        cache.put(
            CacheEntry(
                request_digest=digest,
                model_id=params.model_id,
                template_id=prompt.template_id,
                template_version=prompt.version,
                final_text=prompt.final_text,
                temperature=params.temperature,
                max_tokens=params.max_tokens,
                stop=params.stop,
                completion_text=text,
                created_at=time.time(),
            )
        )
    return CompletionResult(
        text=text,
        provider_id=provider.provider_id,
        from_cache=False,
        latency_ms=latency_ms,
        request_digest=digest,
    )


def run_batch(
    provider,
    cache: FileCache | None,
    prompts: list[RenderedPrompt],
    params: GenParams,
    max_in_flight: int = 4,
) -> list[CompletionResult | CompletionFailure]:
    """Complete many prompts with bounded concurrency.

    Results come back in input order. Identical requests are coalesced:
    only the first of a duplicate group reaches the provider, the rest are
    reported as cache hits. Item failures are captured per slot; the only
    batch-level failure is a cache corruption storm (more than half the
    items hitting corrupt entries), which aborts the whole batch.
    """
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")
    n = len(prompts)
    if n == 0:
        return []
    digests = [request_digest(p, params) for p in prompts]
    groups: dict[str, list[int]] = {}
    for i, digest in enumerate(digests):
        groups.setdefault(digest, []).append(i)

    results: list[CompletionResult | CompletionFailure | None] = [None] * n
    corruption_base = cache.corruptions if cache is not None else 0
    abort = threading.Event()

    def run_group(first_index: int) -> CompletionResult | CompletionFailure:
        prompt = prompts[first_index]
        if abort.is_set():
            return CompletionFailure(
                error_kind="CacheCorruptionError",
                message="batch aborted by corruption storm",
                request_digest=digests[first_index],
            )
        try:
            return cached_complete(provider, cache, prompt, params)
        except KpeError as exc:
            return CompletionFailure(
                error_kind=type(exc).__name__,
                message=str(exc),
                request_digest=digests[first_index],
            )

    storm = False
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = {
            pool.submit(run_group, members[0]): members
            for members in groups.values()
        }
        for future in as_completed(futures):
            members = futures[future]
            outcome = future.result()
            results[members[0]] = outcome
            for extra in members[1:]:
                if isinstance(outcome, CompletionResult):
                    results[extra] = replace(outcome, from_cache=True, latency_ms=0)
                else:
                    results[extra] = outcome
            if cache is not None and not storm:
                corrupt = cache.corruptions - corruption_base
                if corrupt * 2 > n:
                    storm = True
                    abort.set()
    if storm:
        raise CacheCorruptionError(
            f"cache corruption storm: more than half of {n} items hit corrupt entries"
        )
    return results  # type: ignore[return-value]
