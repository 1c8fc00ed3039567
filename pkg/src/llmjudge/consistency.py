"""Ranking consistency between two label sources: conjoint RBO and Kendall tau.

The orderings compared here are full permutations of a shared universe
(queries sorted hardest-first, or runs/groups sorted best-first), so RBO
uses the conjoint form: beyond the list length the prefix agreement is
exactly 1, giving a closed tail of phi^N. Because the lists are conjoint
there is also a well-defined minimum -- attained by reversing one list --
which normalises RBO onto [0, 1] where 0 is an exactly opposite ranking
and 1 an identical one. Reversal being the minimum is verified by brute
force at small N (see rbo_min_bruteforce); if exhaustive search ever found
a lower pair, rbo_min would have to switch to exact search.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Hashable, Mapping, Sequence

from scipy.stats import kendalltau

from .effectiveness import QueryScoreVector
from .trec import Run


def _check_conjoint(s: Sequence[Hashable], t: Sequence[Hashable]) -> None:
    if len(set(s)) != len(s) or len(set(t)) != len(t):
        raise ValueError("orderings must not contain duplicates")
    if set(s) != set(t):
        raise ValueError("orderings must be permutations of the same universe")


def rbo_conjoint(s: Sequence[Hashable], t: Sequence[Hashable], phi: float) -> float:
    """Raw rank-biased overlap of two permutations of the same universe.

    (1-phi) * sum_{d=1..N} phi^(d-1) * |s[:d] & t[:d]| / d  +  phi^N
    """
    if not 0.0 < phi < 1.0:
        raise ValueError("phi must be in (0, 1)")
    _check_conjoint(s, t)
    n = len(s)
    if n == 0:
        raise ValueError("orderings are empty")
    seen_s: set = set()
    seen_t: set = set()
    overlap = 0
    weight = 1.0
    acc = 0.0
    for d in range(1, n + 1):
        a, b = s[d - 1], t[d - 1]
        if a == b:
            overlap += 1
        else:
            if a in seen_t:
                overlap += 1
            if b in seen_s:
                overlap += 1
            seen_s.add(a)
            seen_t.add(b)
        acc += weight * overlap / d
        weight *= phi
    return (1.0 - phi) * acc + phi ** n


def rbo_min(n: int, phi: float) -> float:
    """Minimum raw conjoint RBO over permutation pairs of size n.

    Computed as identity-vs-reversal; every prefix of that pair meets the
    pigeonhole lower bound max(0, 2d - n) on overlap, so no pair scores
    lower. rbo_min_bruteforce re-derives this by exhaustive search.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    identity = list(range(n))
    return rbo_conjoint(identity, identity[::-1], phi)


def rbo_min_bruteforce(n: int, phi: float) -> float:
    """Exhaustive minimum over all permutations against a fixed identity
    (sufficient by relabelling symmetry). Only usable for small n."""
    if n > 8:
        raise ValueError("brute force beyond n=8 is impractical")
    identity = list(range(n))
    return min(rbo_conjoint(identity, list(p), phi) for p in permutations(identity))


def rbo_normalized(s: Sequence[Hashable], t: Sequence[Hashable], phi: float) -> float:
    """Min-normalised RBO: 0 = exactly opposite ranking, 1 = identical.

    A single-item universe is 1.0 by convention (min equals max).
    """
    _check_conjoint(s, t)
    n = len(s)
    if n == 1:
        return 1.0
    raw = rbo_conjoint(s, t, phi)
    lo = rbo_min(n, phi)
    return (raw - lo) / (1.0 - lo)


def kendall_tau(x: Mapping | QueryScoreVector, y: Mapping | QueryScoreVector) -> float:
    """Tie-corrected Kendall tau-b over two score vectors aligned by key."""
    xm = x.scores if isinstance(x, QueryScoreVector) else dict(x)
    ym = y.scores if isinstance(y, QueryScoreVector) else dict(y)
    if set(xm) != set(ym):
        raise ValueError("score vectors must cover the same keys")
    if len(xm) < 2:
        raise ValueError("need at least 2 keys for a rank correlation")
    keys = sorted(xm)
    result = kendalltau([xm[k] for k in keys], [ym[k] for k in keys])
    return float(result.statistic)


def count_score_ties(scores: Mapping) -> int:
    """How many items share their score with at least one other item."""
    values = list(scores.values())
    return sum(1 for v in values if values.count(v) > 1)


def order_queries(scores: Mapping | QueryScoreVector) -> list:
    """Topics ordered hardest first (ascending score, ties broken by id)."""
    m = scores.scores if isinstance(scores, QueryScoreVector) else scores
    return sorted(m, key=lambda k: (m[k], k))


def order_runs(system_scores: Mapping[str, float]) -> list[str]:
    """Runs ordered best first (descending score, ties broken by tag)."""
    return sorted(system_scores, key=lambda k: (-system_scores[k], k))


@dataclass
class GroupOrdering:
    """Groups ordered by their best run's score, best first."""

    order: list[str]
    best_run: dict[str, str]
    best_score: dict[str, float]
    ties: int

    @property
    def scores(self) -> dict[str, float]:
        return dict(self.best_score)


def group_best(runs: Sequence[Run], system_scores: Mapping[str, float]) -> GroupOrdering:
    """Keep each group's maximum-scoring run; order groups by that score
    descending, ties broken lexicographically by group name (recorded)."""
    groups: dict[str, tuple[float, str]] = {}
    for run in runs:
        if run.tag not in system_scores:
            raise ValueError(f"no system score for run {run.tag!r}")
        score = system_scores[run.tag]
        best = groups.get(run.group)
        # ties between a group's own runs resolve to the lexically first tag
        if best is None or score > best[0] or (score == best[0] and run.tag < best[1]):
            groups[run.group] = (score, run.tag)
    order = sorted(groups, key=lambda g: (-groups[g][0], g))
    best_scores = {g: groups[g][0] for g in groups}
    ties = count_score_ties(best_scores)
    return GroupOrdering(
        order=order,
        best_run={g: groups[g][1] for g in groups},
        best_score=best_scores,
        ties=ties,
    )


@dataclass
class ConsistencyReport:
    """RBO/tau agreement between the orderings induced by two label sources."""

    metric: str
    level: str
    phi: float
    rbo_raw: float
    rbo_min: float
    rbo_normalized: float
    tau: float
    universe: int
    ties_gold: int
    ties_model: int

    def as_row(self) -> dict:
        return {
            "metric": self.metric,
            "level": self.level,
            "phi": self.phi,
            "rbo_raw": self.rbo_raw,
            "rbo_min": self.rbo_min,
            "rbo_normalized": self.rbo_normalized,
            "tau": self.tau,
            "universe": self.universe,
            "ties_gold": self.ties_gold,
            "ties_model": self.ties_model,
        }


def compare_score_maps(gold_scores: Mapping, model_scores: Mapping, *, metric: str,
                       level: str, phi: float, ascending: bool) -> ConsistencyReport:
    """Build one consistency report from two aligned score maps."""
    if ascending:
        gold_order = order_queries(gold_scores)
        model_order = order_queries(model_scores)
    else:
        gold_order = order_runs(gold_scores)
        model_order = order_runs(model_scores)
    n = len(gold_order)
    # a singleton universe has one possible ordering; tau is undefined there
    return ConsistencyReport(
        metric=metric,
        level=level,
        phi=phi,
        rbo_raw=rbo_conjoint(gold_order, model_order, phi),
        rbo_min=rbo_min(n, phi) if n > 1 else 1.0,
        rbo_normalized=rbo_normalized(gold_order, model_order, phi),
        tau=kendall_tau(gold_scores, model_scores) if n > 1 else float("nan"),
        universe=n,
        ties_gold=count_score_ties(gold_scores),
        ties_model=count_score_ties(model_scores),
    )
