"""Per-query retrieval effectiveness from a run and a label set.

Labels are binarised before scoring, and documents without a judgment are
assumed non-relevant. A topic with no relevant documents legitimately
scores zero on every metric.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from statistics import mean
from typing import Sequence

from .agreement import _entries
from .judge import binarize
from .trec import Run

METRIC_KINDS = ("precision", "rbp", "ap")


@dataclass(frozen=True)
class MetricSpec:
    """Which metric to compute: precision@depth, RBP@depth with persistence
    phi, or AP@depth."""

    kind: str
    depth: int
    phi: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.kind == "rbp":
            if self.phi is None or not 0.0 < self.phi < 1.0:
                raise ValueError("rbp needs a persistence phi in (0, 1)")
        elif self.phi is not None:
            raise ValueError(f"{self.kind} takes no phi")

    @classmethod
    def precision(cls, depth: int = 10) -> "MetricSpec":
        return cls("precision", depth)

    @classmethod
    def rbp(cls, depth: int = 100, phi: float = 0.6) -> "MetricSpec":
        return cls("rbp", depth, phi)

    @classmethod
    def ap(cls, depth: int = 100) -> "MetricSpec":
        return cls("ap", depth)

    @property
    def label(self) -> str:
        if self.kind == "precision":
            return f"P@{self.depth}"
        if self.kind == "rbp":
            return f"RBP@{self.depth}(phi={self.phi})"
        return f"MAP@{self.depth}"


@dataclass
class QueryScoreVector:
    """Per-topic scores for one run under one metric and label source."""

    scores: dict[int, float]
    metric: MetricSpec
    labels_source: str = ""
    run_tag: str = ""

    @property
    def system_score(self) -> float:
        return mean(self.scores.values()) if self.scores else 0.0


def relevance_of(labels, topic: int, doc: str, threshold: float = 1.0) -> int:
    """Binarised relevance of one document; unjudged documents count 0."""
    value = _entries(labels).get((topic, doc))
    return 0 if value is None else binarize(float(value), threshold)


def _topic_relevance(labels, topic: int, threshold: float) -> dict[str, int]:
    return {
        d: binarize(float(v), threshold)
        for (t, d), v in _entries(labels).items()
        if t == topic
    }


def precision_at_k(docs: Sequence[str], labels, topic: int, k: int = 10,
                   threshold: float = 1.0) -> float:
    """Fraction of the top k that is relevant; short rankings pad with non-relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = _topic_relevance(labels, topic, threshold)
    hits = sum(rel.get(d, 0) for d in docs[:k])
    return hits / k


def rbp(docs: Sequence[str], labels, topic: int, depth: int = 100,
        phi: float = 0.6, threshold: float = 1.0) -> float:
    """Rank-biased precision: (1-phi) * sum_i rel_i * phi^(i-1) to the depth."""
    if not 0.0 < phi < 1.0:
        raise ValueError("phi must be in (0, 1)")
    rel = _topic_relevance(labels, topic, threshold)
    total = 0.0
    weight = 1.0
    for d in docs[:depth]:
        total += rel.get(d, 0) * weight
        weight *= phi
    return (1.0 - phi) * total


def average_precision(docs: Sequence[str], labels, topic: int, depth: int = 100,
                      total_relevant: int | None = None, threshold: float = 1.0) -> float:
    """AP with the TREC denominator: total relevant in the label set, not
    min(R, depth). R = 0 gives 0 (the zero-relevant-topic case)."""
    rel = _topic_relevance(labels, topic, threshold)
    if total_relevant is None:
        total_relevant = sum(rel.values())
    if total_relevant == 0:
        return 0.0
    found = 0
    total = 0.0
    for i, d in enumerate(docs[:depth], start=1):
        if rel.get(d, 0):
            found += 1
            total += found / i
    return total / total_relevant


def score_topic(docs: Sequence[str], labels, topic: int, metric: MetricSpec,
                threshold: float = 1.0) -> float:
    if metric.kind == "precision":
        return precision_at_k(docs, labels, topic, metric.depth, threshold)
    if metric.kind == "rbp":
        return rbp(docs, labels, topic, metric.depth, metric.phi, threshold)
    return average_precision(docs, labels, topic, metric.depth, threshold=threshold)


def format_query_scores_csv(vectors: Sequence[QueryScoreVector]) -> str:
    """Serialise per-query scores as ``metric,run,topic,score`` CSV."""
    lines = ["metric,run,topic,score"]
    for qsv in vectors:
        for topic in sorted(qsv.scores):
            lines.append(f"{qsv.metric.label},{qsv.run_tag},{topic},"
                         f"{qsv.scores[topic]:.6f}")
    return "\n".join(lines) + "\n"


def score_run(run: Run, labels, metric: MetricSpec, *,
              topics: Sequence[int] | None = None, strict: bool = False,
              threshold: float = 1.0) -> QueryScoreVector:
    """Score every topic in the run (arithmetic mean = the system score).

    When ``topics`` names the expected topic universe, topics missing from
    the run are an error in strict mode and are skipped with a warning
    otherwise.
    """
    if not run.rankings:
        raise ValueError(f"run {run.tag!r} is empty")
    run_topics = sorted(run.rankings)
    if topics is not None:
        missing = sorted(set(topics) - set(run_topics))
        if missing:
            if strict:
                raise ValueError(f"run {run.tag!r} is missing topics {missing}")
            warnings.warn(f"run {run.tag!r} is missing topics {missing}; skipped")
        run_topics = sorted(set(topics) & set(run_topics))
    source = getattr(labels, "source", "")
    scores = {
        t: score_topic(run.docs(t), labels, t, metric, threshold) for t in run_topics
    }
    return QueryScoreVector(scores=scores, metric=metric, labels_source=source,
                            run_tag=run.tag)
