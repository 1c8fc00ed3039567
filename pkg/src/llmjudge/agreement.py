"""Document-level agreement between two label sources.

All statistics run over the keys shared by the two sources; predictions
that were dropped as unparseable are simply absent from the model side and
are reported as a rate elsewhere. Confusion/MAE/kappa work on binarised
labels (relevant vs not); pairwise preference AUC works on the raw graded
scores, restricted to same-topic pairs because relevance grades are only
comparable within a topic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .trec import LabelKey


def _entries(labels) -> Mapping:
    """Accept either a LabelSet or a plain mapping."""
    return getattr(labels, "entries", labels)


@dataclass(frozen=True)
class ConfusionMatrix2x2:
    """Counts n[gold][pred] over binarised labels."""

    n00: int
    n01: int
    n10: int
    n11: int

    @property
    def total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11

    @property
    def rows(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return ((self.n00, self.n01), (self.n10, self.n11))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "ConfusionMatrix2x2":
        (n00, n01), (n10, n11) = rows
        return cls(int(n00), int(n01), int(n10), int(n11))


def confusion(gold_bin, pred_bin) -> ConfusionMatrix2x2:
    """Confusion matrix over the shared keys of two binarised label sources."""
    gold = _entries(gold_bin)
    pred = _entries(pred_bin)
    shared = gold.keys() & pred.keys()
    if not shared:
        raise ValueError("gold and predicted labels share no keys")
    counts = [[0, 0], [0, 0]]
    for key in shared:
        g, p = int(gold[key]), int(pred[key])
        if g not in (0, 1) or p not in (0, 1):
            raise ValueError(f"non-binary label for {key}: gold={gold[key]} pred={pred[key]}")
        counts[g][p] += 1
    return ConfusionMatrix2x2.from_rows(counts)


def cohens_kappa(m) -> float:
    """Chance-corrected agreement from a 2x2 confusion matrix.

    Chance agreement uses the marginal products. Degenerate marginals
    (expected agreement of exactly 1) are defined as kappa 0 with a warning.
    """
    if not isinstance(m, ConfusionMatrix2x2):
        m = ConfusionMatrix2x2.from_rows(m)
    n = m.total
    if n <= 0:
        raise ValueError("confusion matrix is empty")
    p_o = (m.n00 + m.n11) / n
    gold0, gold1 = m.n00 + m.n01, m.n10 + m.n11
    pred0, pred1 = m.n00 + m.n10, m.n01 + m.n11
    p_e = (gold0 * pred0 + gold1 * pred1) / (n * n)
    if p_e == 1.0:
        warnings.warn("degenerate marginals: chance agreement is 1, defining kappa = 0")
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def mae(gold_bin, pred) -> float:
    """Mean absolute error between binary gold and [0, 1] predictions.

    0 means the two sources always agree, 1 means they are maximally
    different. Predictions may be hard {0, 1} labels or fractional
    multi-judge relevance in [0, 1].
    """
    gold = _entries(gold_bin)
    predictions = _entries(pred)
    shared = gold.keys() & predictions.keys()
    if not shared:
        raise ValueError("gold and predicted labels share no keys")
    total = 0.0
    for key in shared:
        g = int(gold[key])
        p = float(predictions[key])
        if g not in (0, 1):
            raise ValueError(f"gold label for {key} is not binary: {gold[key]}")
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"prediction for {key} outside [0, 1]: {p}")
        total += abs(g - p)
    return total / len(shared)


def _topic_groups(gold: Mapping, pred: Mapping) -> Iterable[tuple[np.ndarray, np.ndarray]]:
    by_topic: dict[int, list[tuple[float, float]]] = {}
    for key in gold.keys() & pred.keys():
        by_topic.setdefault(key[0], []).append((float(gold[key]), float(pred[key])))
    for items in by_topic.values():
        arr = np.asarray(items)
        yield arr[:, 0], arr[:, 1]


def pairwise_auc(gold, pred) -> float:
    """Chance that the model orders a gold-discordant same-topic pair the same way.

    Ties in the model scores count 0.5. 1 means the model always agrees with
    the gold preference, 0.5 is chance, 0 is always opposite.
    """
    gold_e = _entries(gold)
    pred_e = _entries(pred)
    wins = 0.0
    total = 0
    for grades, scores in _topic_groups(gold_e, pred_e):
        levels = np.unique(grades)
        for i in range(len(levels)):
            for j in range(i + 1, len(levels)):
                lo_scores = np.sort(scores[grades == levels[i]])
                hi_scores = scores[grades == levels[j]]
                if lo_scores.size == 0 or hi_scores.size == 0:
                    continue
                below = np.searchsorted(lo_scores, hi_scores, side="left")
                at_or_below = np.searchsorted(lo_scores, hi_scores, side="right")
                ties = at_or_below - below
                wins += below.sum() + 0.5 * ties.sum()
                total += lo_scores.size * hi_scores.size
    if total == 0:
        raise ValueError("no same-topic pairs with discordant gold grades")
    return wins / total


def auc_pair_credits(gold, pred) -> dict[LabelKey, float]:
    """Per-document share of pairwise AUC: each document's mean credit over
    its gold-discordant same-topic partners. Documents with no discordant
    partner are omitted. Used as the per-document unit for significance
    tests between prompts."""
    gold_e = _entries(gold)
    pred_e = _entries(pred)
    by_topic: dict[int, list[tuple[LabelKey, float, float]]] = {}
    for key in gold_e.keys() & pred_e.keys():
        by_topic.setdefault(key[0], []).append((key, float(gold_e[key]), float(pred_e[key])))

    credits: dict[LabelKey, float] = {}
    for items in by_topic.values():
        for key, g, s in items:
            won = 0.0
            partners = 0
            for key2, g2, s2 in items:
                if key2 == key or g2 == g:
                    continue
                partners += 1
                if s == s2:
                    won += 0.5
                elif (g > g2) == (s > s2):
                    won += 1.0
            if partners:
                credits[key] = won / partners
    return credits


@dataclass(frozen=True)
class PreferencePair:
    """A searcher-stated preference between two results for one query."""

    query_id: str
    preferred: str
    other: str
    tag: str = ""

    def __post_init__(self) -> None:
        if self.preferred == self.other:
            raise ValueError(f"preference pair for {self.query_id!r} compares a doc to itself")


def parse_preference_pairs(text: str) -> list[PreferencePair]:
    """Parse delimited preference pairs: query-id, preferred, other, tag fields."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        parts = [p.strip() for p in parts if p.strip()]
        if len(parts) < 3:
            raise ValueError(f"preference line {lineno}: expected at least 3 fields")
        tag = " ".join(parts[3:]) if len(parts) > 3 else ""
        pairs.append(PreferencePair(parts[0], parts[1], parts[2], tag))
    return pairs


@dataclass
class PreferenceReport:
    accuracy: float
    evaluated: int
    skipped: int
    by_tag: dict[str, float]


def preference_accuracy(pairs: Sequence[PreferencePair], scores) -> PreferenceReport:
    """Fraction of pairs where the preferred result scores higher.

    Ties count 0.5. Pairs with a missing score are skipped and counted, so
    coverage is visible. A per-tag breakdown rides along.
    """
    score_map = _entries(scores)

    def lookup(qid: str, doc: str):
        if (qid, doc) in score_map:
            return score_map[(qid, doc)]
        if qid.isdigit() and (int(qid), doc) in score_map:
            return score_map[(int(qid), doc)]
        return None

    total = 0.0
    evaluated = 0
    skipped = 0
    tag_totals: dict[str, list[float]] = {}
    for pair in pairs:
        a = lookup(pair.query_id, pair.preferred)
        b = lookup(pair.query_id, pair.other)
        if a is None or b is None:
            skipped += 1
            continue
        credit = 1.0 if a > b else (0.5 if a == b else 0.0)
        total += credit
        evaluated += 1
        tag_totals.setdefault(pair.tag, []).append(credit)
    if evaluated == 0:
        raise ValueError("no preference pairs could be scored")
    by_tag = {tag: sum(v) / len(v) for tag, v in sorted(tag_totals.items())}
    return PreferenceReport(
        accuracy=total / evaluated, evaluated=evaluated, skipped=skipped, by_tag=by_tag
    )


def binarize_labels(labels, threshold: float = 1.0) -> dict[LabelKey, int]:
    """Binarise a label mapping: 1 iff the grade/score clears the threshold."""
    return {k: (1 if float(v) >= threshold else 0) for k, v in _entries(labels).items()}
