"""Resampling intervals, prompt comparisons, feature effects, split selection.

The resampling unit everywhere is the document (one labelled topic:document
pair): confidence intervals come from bootstraps over documents, and the
best-prompt test is a one-sided paired t-test over per-document agreement
values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats as spstats

from .prompts import FEATURE_LETTERS, PromptSpec, enumerate_specs


@dataclass(frozen=True)
class BootstrapConfig:
    n_resamples: int = 20
    level: float = 0.95
    seed: int = 0
    unit: str = "documents"

    def __post_init__(self) -> None:
        if self.n_resamples < 2:
            raise ValueError("n_resamples must be >= 2")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")


@dataclass
class BootstrapResult:
    point: float
    lo: float
    hi: float
    redrawn: int = 0
    values: list[float] = field(default_factory=list)


def bootstrap_ci(statistic: Callable[[Sequence], float], sample: Sequence,
                 cfg: BootstrapConfig) -> BootstrapResult:
    """Percentile interval from resampling the sample with replacement.

    A resample on which the statistic is undefined (raises, or returns a
    non-finite value) is redrawn and counted. Deterministic given cfg.seed.
    """
    if len(sample) == 0:
        raise ValueError("cannot bootstrap an empty sample")
    sample = list(sample)
    n = len(sample)
    rng = np.random.default_rng(cfg.seed)
    values: list[float] = []
    redrawn = 0
    budget = cfg.n_resamples * 50
    while len(values) < cfg.n_resamples:
        if redrawn + len(values) >= budget:
            raise ValueError(
                f"statistic undefined on too many resamples ({redrawn} redraws)"
            )
        idx = rng.integers(0, n, size=n)
        resample = [sample[i] for i in idx]
        try:
            v = float(statistic(resample))
        except (ValueError, ZeroDivisionError, FloatingPointError):
            redrawn += 1
            continue
        if not np.isfinite(v):
            redrawn += 1
            continue
        values.append(v)
    alpha = (1.0 - cfg.level) / 2.0
    lo, hi = np.percentile(values, [100 * alpha, 100 * (1 - alpha)])
    return BootstrapResult(point=float(statistic(sample)), lo=float(lo), hi=float(hi),
                           redrawn=redrawn, values=values)


@dataclass
class ComparisonOutcome:
    best: str
    runner_up: str | None
    p_value: float | None
    significant: bool
    alpha: float
    means: dict[str, float]


def compare_best(candidates: Mapping[str, Sequence[float]],
                 alpha: float = 0.05) -> ComparisonOutcome:
    """Pick the best candidate and test it against the runner-up.

    Candidates map name -> per-document values (higher is better), aligned
    on the same documents. The test is a one-sided paired t-test; a single
    candidate is trivially best and the test is skipped; identical best and
    runner-up values give p = 0.5 and no significance flag.
    """
    if not candidates:
        raise ValueError("no candidates to compare")
    lengths = {len(v) for v in candidates.values()}
    if len(lengths) != 1:
        raise ValueError("candidate value vectors must be aligned (equal lengths)")
    means = {name: float(np.mean(v)) for name, v in candidates.items()}
    ranked = sorted(candidates, key=lambda name: -means[name])
    best = ranked[0]
    if len(ranked) == 1:
        return ComparisonOutcome(best=best, runner_up=None, p_value=None,
                                 significant=True, alpha=alpha, means=means)
    runner_up = ranked[1]
    a = np.asarray(candidates[best], dtype=float)
    b = np.asarray(candidates[runner_up], dtype=float)
    if np.array_equal(a, b):
        return ComparisonOutcome(best=best, runner_up=runner_up, p_value=0.5,
                                 significant=False, alpha=alpha, means=means)
    p = float(spstats.ttest_rel(a, b, alternative="greater").pvalue)
    return ComparisonOutcome(best=best, runner_up=runner_up, p_value=p,
                             significant=p < alpha, alpha=alpha, means=means)


@dataclass
class FeatureEffectReport:
    """Mean change in kappa from switching each prompt feature on, averaged
    over the 16 matched template pairs that differ only in that feature."""

    effects: dict[str, float]
    cis: dict[str, tuple[float, float]] = field(default_factory=dict)


def feature_effects(kappa_by_spec: Mapping) -> dict[str, float]:
    """Marginal effect of each feature letter on kappa.

    Requires a kappa for all 32 specs; a missing spec is an error naming it.
    Keys may be spec label strings or PromptSpec objects.
    """
    table: dict[str, float] = {}
    for key, value in kappa_by_spec.items():
        label = key.label if isinstance(key, PromptSpec) else str(key)
        table[label] = float(value)
    effects: dict[str, float] = {}
    all_labels = [s.label for s in enumerate_specs()]
    missing = [l for l in all_labels if l not in table]
    if missing:
        raise ValueError(f"missing kappa for spec(s): {', '.join(missing)}")
    for i, letter in enumerate(FEATURE_LETTERS):
        deltas = []
        for label in all_labels:
            if label[i] != letter:
                continue
            off_label = label[:i] + "-" + label[i + 1:]
            deltas.append(table[label] - table[off_label])
        assert len(deltas) == 16
        effects[letter] = sum(deltas) / len(deltas)
    return effects


def _binary_kappa_from_counts(n11, n10, n01, n00):
    """Vectorised kappa over binary label counts; degenerate marginals -> nan."""
    n = n11 + n10 + n01 + n00
    p_o = (n11 + n00) / n
    p_e = ((n11 + n01) * (n11 + n10) + (n10 + n00) * (n01 + n00)) / (n * n)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p_e >= 1.0, np.nan, (p_o - p_e) / (1.0 - p_e))


def binary_kappa(gold: Sequence[int], pred: Sequence[int]) -> float:
    """Cohen's kappa over two aligned binary vectors (degenerate -> nan)."""
    g = np.asarray(gold, dtype=float)
    p = np.asarray(pred, dtype=float)
    if g.shape != p.shape or g.ndim != 1 or g.size == 0:
        raise ValueError("gold and pred must be equal-length non-empty vectors")
    n11 = float((g * p).sum())
    n10 = float((g * (1 - p)).sum())
    n01 = float(((1 - g) * p).sum())
    n00 = float(((1 - g) * (1 - p)).sum())
    return float(_binary_kappa_from_counts(n11, n10, n01, n00))


@dataclass
class SplitSelectionReport:
    """Regret check: pick the best prompt on one half of the documents and
    see how it fares on the other half."""

    n_iter: int
    baseline: str
    wins_vs_baseline: int       # chosen prompt strictly beats baseline on split 2
    ties_vs_baseline: int       # non-losses that were exact ties
    best_on_second: int         # chosen prompt is also the best on split 2
    selection_counts: dict[str, int]
    selection_ties: int         # iterations where the split-1 winner was tied
    modal_best: str
    modal_fraction: float
    seed: int

    @property
    def non_loss_fraction(self) -> float:
        return (self.wins_vs_baseline + self.ties_vs_baseline) / self.n_iter


def split_selection(gold: Sequence[int], candidates: Mapping[str, Sequence[int]],
                    baseline: str, n_iter: int = 1000, seed: int = 0) -> SplitSelectionReport:
    """Repeated 50/50 splits of the labelled documents.

    Per iteration: rank prompts by kappa on the first half (ties broken by
    the candidates' own order, counted), then check on the second half
    whether that winner beats the baseline and whether it is still best.
    All label vectors must be binarised and aligned on the same documents.
    """
    if baseline not in candidates:
        raise ValueError(f"baseline {baseline!r} is not among the candidates")
    names = list(candidates)
    g = np.asarray(gold, dtype=float)
    preds = np.vstack([np.asarray(candidates[name], dtype=float) for name in names])
    if preds.shape[1] != g.size:
        raise ValueError("candidate vectors must align with the gold vector")
    n = g.size
    half = n // 2
    if half < 2:
        raise ValueError("need at least 2 documents per split")
    baseline_row = names.index(baseline)

    rng = np.random.default_rng(seed)
    wins = 0
    ties = 0
    best_on_second = 0
    selection_ties = 0
    counts = {name: 0 for name in names}

    def kappas(idx: np.ndarray) -> np.ndarray:
        gh = g[idx]
        ph = preds[:, idx]
        n11 = ph @ gh
        n10 = ph.sum(axis=1) - n11
        n01 = gh.sum() - n11
        n00 = idx.size - n11 - n10 - n01
        return _binary_kappa_from_counts(n11, n10, n01, n00)

    for _ in range(n_iter):
        order = rng.permutation(n)
        first, second = order[:half], order[half:]
        k1 = np.nan_to_num(kappas(first), nan=-2.0)
        top = float(k1.max())
        winners = np.flatnonzero(k1 == top)
        if winners.size > 1:
            selection_ties += 1
        chosen = int(winners[0])  # earliest in canonical candidate order
        counts[names[chosen]] += 1

        k2 = np.nan_to_num(kappas(second), nan=-2.0)
        if k2[chosen] > k2[baseline_row]:
            wins += 1
        elif k2[chosen] == k2[baseline_row]:
            ties += 1
        if k2[chosen] == k2.max():
            best_on_second += 1

    modal_best = max(counts, key=lambda name: (counts[name], ))
    return SplitSelectionReport(
        n_iter=n_iter,
        baseline=baseline,
        wins_vs_baseline=wins,
        ties_vs_baseline=ties,
        best_on_second=best_on_second,
        selection_counts=counts,
        selection_ties=selection_ties,
        modal_best=modal_best,
        modal_fraction=counts[modal_best] / n_iter,
        seed=seed,
    )


@dataclass
class LengthBiasResult:
    slope: float
    lo: float
    hi: float
    shift_at_median: float
    median_length: float
    n: int


def length_bias(signed_errors: Sequence[float], prompt_lengths: Sequence[float],
                level: float = 0.95) -> LengthBiasResult:
    """OLS slope of signed labelling error on prompt length.

    The practical effect size is slope * median(length): the modelled score
    shift at a typical prompt. Zero variance in lengths is an error.
    """
    errors = np.asarray(signed_errors, dtype=float)
    lengths = np.asarray(prompt_lengths, dtype=float)
    if errors.shape != lengths.shape or errors.ndim != 1:
        raise ValueError("signed errors and lengths must be aligned vectors")
    if errors.size < 3:
        raise ValueError("need at least 3 points for a regression")
    if np.all(lengths == lengths[0]):
        raise ValueError("prompt lengths have zero variance")
    fit = spstats.linregress(lengths, errors)
    t_crit = float(spstats.t.ppf(0.5 + level / 2, errors.size - 2))
    median_length = float(np.median(lengths))
    return LengthBiasResult(
        slope=float(fit.slope),
        lo=float(fit.slope - t_crit * fit.stderr),
        hi=float(fit.slope + t_crit * fit.stderr),
        shift_at_median=float(fit.slope) * median_length,
        median_length=median_length,
        n=errors.size,
    )
