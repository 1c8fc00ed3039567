"""Scoring endpoint client: decoding parameters, response cache, parsing.

Raw responses are cached in a content-addressed directory (one JSON file
per request, named by the SHA-256 of model + decoding parameters + prompt)
and are never discarded, so an experiment can be replayed without network
access. Parsing is deliberately lenient -- the prompt primes the model with
``[{``, so responses may arrive with or without that prefix, and with prose
around the JSON array -- but a record with a missing or out-of-range
overall score makes the whole response unparseable. Unparseable responses
are values, not exceptions: they are dropped from downstream statistics and
counted for the drop-rate report.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .prompts import PromptSpec, PromptText
from .trec import LabelSet


class JudgeError(RuntimeError):
    """Base class for judging failures."""


class TransportError(JudgeError):
    """Endpoint unreachable (or persistently failing) after bounded retries."""

    def __init__(self, message: str, attempts: list[str] | None = None):
        super().__init__(message)
        self.attempts = attempts or []


class EndpointError(JudgeError):
    """The endpoint answered with a non-retryable error."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class DecodingParams:
    """Decoding parameters sent with every request.

    Defaults are the greedy settings used for labelling: temperature 0,
    top_p 1, frequency penalty 0.5, presence penalty 0, no stop sequences.
    """

    model: str
    temperature: float = 0.0
    top_p: float = 1.0
    frequency_penalty: float = 0.5
    presence_penalty: float = 0.0
    stop: tuple[str, ...] | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["stop"] = list(self.stop) if self.stop else None
        return d


@dataclass(frozen=True)
class JudgeRecord:
    """One simulated judge's scores. M/T ride along only when aspects were prompted."""

    O: int
    M: int | None = None
    T: int | None = None


@dataclass
class LabelOutcome:
    """Aggregated result for one (prompt, document) request.

    ``score`` is the mean overall score in [0, 2], or None when the raw
    response was unparseable.
    """

    score: float | None
    raw: str
    records: list[JudgeRecord] = field(default_factory=list)

    @property
    def unparseable(self) -> bool:
        return self.score is None


class Endpoint(Protocol):
    def complete(self, prompt: PromptText, params: DecodingParams) -> str: ...


class ResponseCache:
    """Content-addressed store of raw responses, one JSON document per file.

    Writes go through a temp file and ``os.replace`` so concurrent labelling
    threads can never expose a half-written entry.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(params: DecodingParams, prompt_text: str) -> str:
        payload = json.dumps(
            {"model": params.model, "params": params.as_dict(), "prompt": prompt_text},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.is_file():
            return None
        return json.loads(path.read_text("utf-8"))

    def put(self, key: str, record: dict) -> None:
        path = self._path(key)
        tmp = path.with_suffix(f".tmp.{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(json.dumps(record, sort_keys=True, ensure_ascii=False), "utf-8")
        os.replace(tmp, path)

    def __contains__(self, key: str) -> bool:
        return self._path(key).is_file()

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*.json"))


def judge(prompt: PromptText, params: DecodingParams, endpoint: Endpoint, *,
          cache: ResponseCache | None = None, retries: int = 3,
          backoff: float = 0.5) -> str:
    """Fetch the raw response for one prompt, via the cache when possible.

    Transport failures (connection errors, 5xx) are retried up to
    ``retries`` times with exponential backoff; the final TransportError
    carries the attempt log. Non-retryable endpoint errors propagate
    immediately.
    """
    if retries < 1:
        raise ValueError("retries must be >= 1")
    key = ResponseCache.key(params, prompt.text) if cache is not None else None
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit["response"]

    attempts: list[str] = []
    for attempt in range(1, retries + 1):
        try:
            raw = endpoint.complete(prompt, params)
            break
        except EndpointError:
            raise
        except (TransportError, ConnectionError, OSError) as e:
            attempts.append(f"attempt {attempt}: {e}")
            if attempt == retries:
                raise TransportError(
                    f"endpoint failed after {retries} attempts: {e}", attempts
                ) from e
            if backoff > 0:
                time.sleep(backoff * 2 ** (attempt - 1))

    if cache is not None:
        cache.put(key, {
            "key": key,
            "model": params.model,
            "params": params.as_dict(),
            "prompt": prompt.text,
            "response": raw,
        })
    return raw


class HttpEndpoint:
    """Chat-completion style HTTP endpoint.

    POSTs ``{model, messages, temperature, top_p, frequency_penalty,
    presence_penalty}`` and reads ``choices[0].message.content``. 5xx
    responses surface as retryable TransportError; other non-success codes
    as EndpointError with the status.
    """

    def __init__(self, url: str, api_key: str | None = None, timeout: float = 60.0,
                 session=None):
        self.url = url
        self.api_key = api_key
        self.timeout = timeout
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def complete(self, prompt: PromptText, params: DecodingParams) -> str:
        body = {
            "model": params.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
        }
        if params.stop:
            body["stop"] = list(params.stop)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._session.post(self.url, json=body, headers=headers,
                                      timeout=self.timeout)
        except (ConnectionError, OSError) as e:
            raise TransportError(f"POST {self.url} failed: {e}") from e
        except Exception as e:  # requests wraps socket errors in its own types
            if type(e).__module__.startswith("requests"):
                raise TransportError(f"POST {self.url} failed: {e}") from e
            raise
        if resp.status_code >= 500:
            raise TransportError(f"endpoint returned {resp.status_code}")
        if resp.status_code >= 300:
            raise EndpointError(f"endpoint returned {resp.status_code}",
                                status=resp.status_code)
        try:
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise EndpointError(f"malformed completion body: {e}",
                                status=resp.status_code) from e


def _as_grade(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value if 0 <= value <= 2 else None
    if isinstance(value, float) and value.is_integer():
        return int(value) if 0 <= value <= 2 else None
    return None


def _extract_array(raw: str) -> list | None:
    s = raw.strip()
    candidates = [s, "[{" + s, "[" + s]
    for cand in candidates:
        # tolerate prose before the array: try the first few '[' positions
        pos = -1
        for _ in range(5):
            pos = cand.find("[", pos + 1)
            if pos < 0:
                break
            sliced = _balanced_json_slice_lenient(cand, pos)
            if sliced is None:
                continue
            try:
                value = json.loads(sliced)
            except json.JSONDecodeError:
                continue
            if isinstance(value, list):
                return value
    # a bare object counts as a single-record array
    pos = s.find("{")
    if pos >= 0:
        sliced = _balanced_json_slice_lenient(s, pos)
        if sliced is not None:
            try:
                value = json.loads(sliced)
            except json.JSONDecodeError:
                return None
            if isinstance(value, dict):
                return [value]
    return None


def _balanced_json_slice_lenient(s: str, start: int) -> str | None:
    """Like _balanced_json_slice but ignores anything after the balanced close."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(s)):
        c = s[i]
        if in_string:
            if escaped:
                escaped = False
            elif c == "\\":
                escaped = True
            elif c == '"':
                in_string = False
            continue
        if c == '"':
            in_string = True
        elif c in "[{":
            depth += 1
        elif c in "]}":
            depth -= 1
            if depth == 0:
                return s[start:i + 1]
    return None


def parse_response(raw: str, expect_aspects: bool = False,
                   expect_count: int = 1) -> list[JudgeRecord] | None:
    """Parse a raw response into judge records, or None if unparseable.

    A record with a missing or out-of-range overall score O poisons the
    whole response. A record-count mismatch against ``expect_count`` is
    tolerated with a warning and the records are kept.
    """
    array = _extract_array(raw)
    if array is None or not array:
        return None
    records: list[JudgeRecord] = []
    for item in array:
        if not isinstance(item, dict):
            return None
        o = _as_grade(item.get("O"))
        if o is None:
            return None
        m = item.get("M")
        t = item.get("T")
        if m is not None:
            m = _as_grade(m)
            if m is None:
                return None
        if t is not None:
            t = _as_grade(t)
            if t is None:
                return None
        records.append(JudgeRecord(O=o, M=m, T=t))
    if len(records) != expect_count:
        warnings.warn(
            f"expected {expect_count} judge records, got {len(records)}; keeping them"
        )
    if expect_aspects and any(r.M is None or r.T is None for r in records):
        warnings.warn("aspects were prompted but some records lack M/T")
    return records


def aggregate(records: Sequence[JudgeRecord]) -> float:
    """Mean overall score across judges; aspect scores are diagnostics only."""
    if not records:
        raise ValueError("cannot aggregate zero judge records")
    return sum(r.O for r in records) / len(records)


def relevance_fraction(records: Sequence[JudgeRecord], threshold: float = 1.0) -> float:
    """Fraction of judges whose overall score clears the relevance threshold."""
    if not records:
        raise ValueError("cannot aggregate zero judge records")
    return sum(1 for r in records if r.O >= threshold) / len(records)


def binarize(score: float, threshold: float = 1.0) -> int:
    """Collapse a [0, 2] score to binary relevance: 1 iff score >= threshold."""
    if not 0.0 <= score <= 2.0:
        raise ValueError(f"score {score} outside [0, 2]")
    return 1 if score >= threshold else 0


def score_response(raw: str, spec: PromptSpec) -> LabelOutcome:
    """Parse + aggregate one raw response under the expectations of ``spec``."""
    records = parse_response(raw, expect_aspects=spec.aspects,
                             expect_count=spec.judge_count)
    if records is None:
        return LabelOutcome(score=None, raw=raw, records=[])
    return LabelOutcome(score=aggregate(records), raw=raw, records=records)


class MockEndpoint:
    """Deterministic stand-in endpoint that replays (possibly noisy) gold labels.

    For known pairs it answers with well-formed JSON whose overall score is
    the gold grade, flipped to a uniformly random *other* grade (among the
    grades present in the gold set) with probability ``flip_rate``. Unknown
    pairs get an unparseable response, exercising the drop path. Responses
    depend only on (seed, topic, doc), so they are stable across call order
    and threads; ``calls`` counts actual invocations for cache tests.
    """

    def __init__(self, gold: LabelSet, flip_rate: float = 0.0, seed: int = 0):
        if not 0.0 <= flip_rate <= 1.0:
            raise ValueError("flip_rate must be a probability")
        self._gold = dict(gold.entries)
        self._grades = sorted({int(v) for v in gold.entries.values()})
        self.flip_rate = flip_rate
        self.seed = seed
        self.calls = 0
        self._lock = threading.Lock()

    def _grade_for(self, topic_id: int, doc_id: str) -> int | None:
        grade = self._gold.get((topic_id, doc_id))
        if grade is None:
            return None
        grade = int(grade)
        rng = random.Random(f"{self.seed}|{topic_id}|{doc_id}")
        if rng.random() < self.flip_rate:
            others = [g for g in self._grades if g != grade]
            if others:
                grade = rng.choice(others)
        return grade

    def complete(self, prompt: PromptText, params: DecodingParams) -> str:
        with self._lock:
            self.calls += 1
        prov = prompt.provenance
        grade = self._grade_for(prov.topic_id, prov.doc_id)
        if grade is None:
            return "I cannot determine the relevance of this page."
        record: dict = {"O": grade}
        if prov.spec.aspects:
            record = {"M": grade, "T": grade, "O": grade}
        return json.dumps([dict(record) for _ in range(prov.spec.judge_count)])


def mock_judge(gold: LabelSet, flip_rate: float = 0.0, seed: int = 0) -> MockEndpoint:
    """Build the deterministic mock endpoint used as a test oracle."""
    return MockEndpoint(gold, flip_rate=flip_rate, seed=seed)
