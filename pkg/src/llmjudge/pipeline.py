"""Experiment orchestration: label, agree, consistency, and report commands.

Every command reads the manifest, consumes prior outputs from the output
directory, and writes deterministic JSON/CSV artifacts. Labelling is the
only concurrent step (bounded in-flight judge calls); everything downstream
is single-threaded and byte-reproducible given the same inputs and seeds.

Output directory layout::

    out/
      labels/labels__<spec>__<paraphrase>.json    one file per prompt variant
      agreement.json / agreement.csv              Table-1 style rows
      feature_effects.json / feature_effects.csv  Table-2 style rows
      paraphrase_spread.json / .csv               Fig-4 plot data
      consistency.json / consistency.csv          Table-4 style rows
      split_selection.json                        regret protocol results
      report/report.txt                           rendered text tables
"""

from __future__ import annotations

import hashlib
import json
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .agreement import (
    auc_pair_credits,
    binarize_labels,
    cohens_kappa,
    confusion,
    pairwise_auc,
)
from .consistency import ConsistencyReport, compare_score_maps, group_best
from .effectiveness import format_query_scores_csv, score_run
from .judge import (
    HttpEndpoint,
    JudgeError,
    ResponseCache,
    binarize,
    judge,
    mock_judge,
    relevance_fraction,
    score_response,
)
from .manifest import ExperimentManifest
from .prompts import (
    ORIGINAL_VARIANT,
    PromptSpec,
    bank_index,
    enumerate_specs,
    load_paraphrase_bank,
    render_prompt,
)
from .stats import (
    binary_kappa,
    bootstrap_ci,
    compare_best,
    feature_effects,
    split_selection,
)
from .trec import (
    DocumentStore,
    LabelKey,
    LabelSet,
    Run,
    Topic,
    parse_qrels,
    parse_run,
    parse_topics,
    stratified_sample,
)

LABELS_SCHEMA = "llmjudge/labels/v1"


class PipelineError(RuntimeError):
    """A command could not complete (missing inputs, failed items, ...)."""


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", "utf-8")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", "utf-8")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


@dataclass
class Corpus:
    topics: dict[int, Topic]
    gold: LabelSet
    store: DocumentStore
    gold_hash: str


def load_corpus(manifest: ExperimentManifest) -> Corpus:
    topics = {t.id: t for t in parse_topics(Path(manifest.topics_path).read_text("utf-8"))}
    gold = parse_qrels(Path(manifest.qrels_path).read_text("utf-8"))
    ds = manifest.docstore
    if ds.kind == "dir":
        store = DocumentStore.from_directory(ds.path, manifest.doc_char_budget)
    else:
        store = DocumentStore.from_archive(ds.path, ds.index, manifest.doc_char_budget)
    return Corpus(
        topics=topics,
        gold=gold,
        store=store,
        gold_hash=_sha256_file(Path(manifest.qrels_path)),
    )


def load_runs(manifest: ExperimentManifest) -> list[Run]:
    if not manifest.runs_dir:
        raise PipelineError("manifest has no runs_dir; consistency needs runs")
    runs = []
    for path in sorted(Path(manifest.runs_dir).iterdir()):
        if path.is_file():
            runs.append(parse_run(path.read_text("utf-8"), group_map=manifest.group_map))
    if not runs:
        raise PipelineError(f"no run files found in {manifest.runs_dir}")
    return runs


def _make_endpoint(manifest: ExperimentManifest, corpus: Corpus, mock: bool):
    if mock:
        return mock_judge(corpus.gold, manifest.mock.flip_rate, manifest.mock.seed)
    if manifest.endpoint is None:
        raise PipelineError(
            "manifest has no endpoint config; add one or run with --mock"
        )
    api_key = None
    if manifest.endpoint.api_key_env:
        api_key = os.environ.get(manifest.endpoint.api_key_env)
        if not api_key:
            raise PipelineError(
                f"endpoint API key env var {manifest.endpoint.api_key_env!r} is not set"
            )
    return HttpEndpoint(manifest.endpoint.url, api_key=api_key,
                        timeout=manifest.endpoint.timeout)


def _labels_dir(manifest: ExperimentManifest) -> Path:
    return Path(manifest.out_dir) / "labels"


def _labels_path(manifest: ExperimentManifest, spec_label: str, paraphrase_id: str) -> Path:
    return _labels_dir(manifest) / f"labels__{spec_label}__{paraphrase_id}.json"


@dataclass
class LabelRunSummary:
    files: list[str] = field(default_factory=list)
    requested: int = 0
    scored: int = 0
    dropped: int = 0
    failed: int = 0
    endpoint_calls: int | None = None


def cmd_label(manifest: ExperimentManifest, *, mock: bool = False) -> LabelRunSummary:
    """Label the stratified sample under every configured prompt variant.

    Responses land in the content-addressed cache first, so an interrupted
    run resumes by fetching only the missing items. Per-item endpoint
    failures are recorded in the labels file and surfaced as an error after
    all other items have been written.
    """
    corpus = load_corpus(manifest)
    sample = stratified_sample(corpus.gold, manifest.sample.n_per_grade,
                               manifest.sample.seed)
    missing_topics = sorted(sample.topics() - corpus.topics.keys())
    if missing_topics:
        raise PipelineError(f"sampled topics missing from the topic file: {missing_topics}")

    bank = bank_index(
        load_paraphrase_bank(manifest.paraphrase_bank)
        if manifest.paraphrase_bank else [ORIGINAL_VARIANT]
    )
    unknown_pids = [p for p in manifest.paraphrase_ids if p not in bank]
    if unknown_pids:
        raise PipelineError(f"paraphrase ids not in the bank: {unknown_pids}")

    endpoint = _make_endpoint(manifest, corpus, mock)
    cache = ResponseCache(manifest.cache_dir)
    params = manifest.decoding
    keys = sorted(sample.entries)
    summary = LabelRunSummary()

    def label_one(spec: PromptSpec, key: LabelKey):
        topic_id, doc_id = key
        fetched = corpus.store.get(doc_id)
        prompt = render_prompt(spec, corpus.topics[topic_id], fetched.text,
                               doc_id=doc_id, truncated=fetched.truncated, bank=bank)
        raw = judge(prompt, params, endpoint, cache=cache)
        return score_response(raw, spec)

    for spec_label in manifest.resolved_specs():
        for pid in manifest.paraphrase_ids:
            spec = PromptSpec.from_string(spec_label, paraphrase_id=pid)
            scores: list[list] = []
            dropped: list[list] = []
            errors: list[list] = []

            def job(key: LabelKey):
                try:
                    return key, label_one(spec, key), None
                except JudgeError as e:
                    return key, None, str(e)

            with ThreadPoolExecutor(max_workers=max(1, manifest.concurrency)) as pool:
                results = list(pool.map(job, keys))

            for key, outcome, error in sorted(results, key=lambda r: r[0]):
                topic_id, doc_id = key
                if error is not None:
                    errors.append([topic_id, doc_id, error])
                elif outcome.unparseable:
                    dropped.append([topic_id, doc_id])
                else:
                    fraction = relevance_fraction(outcome.records,
                                                  manifest.binarize_threshold)
                    scores.append([topic_id, doc_id, outcome.score, fraction])

            payload = {
                "schema": LABELS_SCHEMA,
                "source": f"model:{spec_label}@{pid}",
                "spec": spec_label,
                "paraphrase_id": pid,
                "model": params.model,
                "params": params.as_dict(),
                "sample": {"n_per_grade": manifest.sample.n_per_grade,
                           "seed": manifest.sample.seed},
                "gold_hash": corpus.gold_hash,
                "n_requested": len(keys),
                "n_scored": len(scores),
                "n_dropped": len(dropped),
                "n_failed": len(errors),
                "scores": scores,
                "dropped": dropped,
                "errors": errors,
            }
            path = _labels_path(manifest, spec_label, pid)
            _dump_json(path, payload)
            summary.files.append(str(path))
            summary.requested += len(keys)
            summary.scored += len(scores)
            summary.dropped += len(dropped)
            summary.failed += len(errors)

    summary.endpoint_calls = getattr(endpoint, "calls", None)
    if summary.failed:
        raise PipelineError(
            f"{summary.failed} item(s) failed at the endpoint; "
            f"partial output kept under {_labels_dir(manifest)}"
        )
    return summary


@dataclass
class ModelLabels:
    spec: str
    paraphrase_id: str
    scores: LabelSet
    fractions: dict[LabelKey, float]
    dropped: list[LabelKey]
    n_requested: int
    source_hash: str
    meta: dict

    @property
    def drop_rate(self) -> float:
        return len(self.dropped) / self.n_requested if self.n_requested else 0.0


def load_labels_file(path: str | Path) -> ModelLabels:
    path = Path(path)
    data = json.loads(path.read_text("utf-8"))
    if data.get("schema") != LABELS_SCHEMA:
        raise PipelineError(f"{path} is not a labels file (schema {data.get('schema')!r})")
    entries = {(int(t), d): float(s) for t, d, s, _ in data["scores"]}
    fractions = {(int(t), d): float(f) for t, d, _, f in data["scores"]}
    return ModelLabels(
        spec=data["spec"],
        paraphrase_id=data["paraphrase_id"],
        scores=LabelSet(entries=entries, source=data["source"]),
        fractions=fractions,
        dropped=[(int(t), d) for t, d in data["dropped"]],
        n_requested=data["n_requested"],
        source_hash=_sha256_file(path),
        meta={k: data[k] for k in ("model", "params", "sample", "gold_hash")},
    )


def _all_labels(manifest: ExperimentManifest) -> list[ModelLabels]:
    folder = _labels_dir(manifest)
    files = sorted(folder.glob("labels__*.json")) if folder.is_dir() else []
    if not files:
        raise PipelineError(f"no label files under {folder}; run the label command first")
    return [load_labels_file(f) for f in files]


_SPEC_ORDER = {s.label: i for i, s in enumerate(enumerate_specs())}


def _row_order(ml: ModelLabels) -> tuple:
    return (_SPEC_ORDER.get(ml.spec, 99), ml.spec,
            "" if ml.paraphrase_id == "original" else ml.paraphrase_id)


def cmd_agree(manifest: ExperimentManifest) -> dict:
    """Per-prompt agreement table: MAE, kappa, and preference AUC with CIs,
    best-per-column starred when significantly better than the runner-up."""
    corpus = load_corpus(manifest)
    threshold = manifest.binarize_threshold
    gold_bin = binarize_labels(corpus.gold, threshold)
    all_labels = sorted(_all_labels(manifest), key=_row_order)

    rows = []
    per_row_records: dict[str, list[tuple]] = {}
    for ml in all_labels:
        shared = sorted(corpus.gold.entries.keys() & ml.scores.entries.keys())
        if not shared:
            raise PipelineError(f"labels {ml.spec}@{ml.paraphrase_id} share no keys with gold")
        records = []
        for key in shared:
            grade = corpus.gold.entries[key]
            score = ml.scores.entries[key]
            pred_value = (ml.fractions[key] if manifest.mae_mode == "fractional"
                          else float(binarize(score, threshold)))
            records.append((key, float(grade), gold_bin[key], score,
                            binarize(score, threshold), pred_value))
        per_row_records[f"{ml.spec}@{ml.paraphrase_id}"] = records

        def mae_stat(sample):
            return float(np.mean([abs(r[2] - r[5]) for r in sample]))

        def kappa_stat(sample):
            # binary_kappa is nan on degenerate marginals, which makes
            # bootstrap_ci redraw the resample instead of keeping a 0
            return binary_kappa([r[2] for r in sample], [r[4] for r in sample])

        def auc_stat(sample):
            uniq = _uniq(sample)
            return pairwise_auc({r[0]: r[1] for r in uniq}, {r[0]: r[3] for r in uniq})

        cfg = manifest.bootstrap
        mae_ci = bootstrap_ci(mae_stat, records, cfg)
        kappa_ci = bootstrap_ci(kappa_stat, records, cfg)
        auc_ci = bootstrap_ci(auc_stat, records, cfg)
        # the row's point value follows the confusion-matrix contract
        # (degenerate marginals are 0 with a warning, not nan)
        kappa_point = cohens_kappa(confusion(
            {r[0]: r[2] for r in records}, {r[0]: r[4] for r in records}))

        rows.append({
            "spec": ml.spec,
            "paraphrase_id": ml.paraphrase_id,
            "n": len(shared),
            "drop_rate": ml.drop_rate,
            "mae": mae_ci.point, "mae_lo": mae_ci.lo, "mae_hi": mae_ci.hi,
            "kappa": kappa_point, "kappa_lo": kappa_ci.lo, "kappa_hi": kappa_ci.hi,
            "kappa_boot": kappa_ci.values,
            "auc": auc_ci.point, "auc_lo": auc_ci.lo, "auc_hi": auc_ci.hi,
            "label_hash": ml.source_hash,
            "sample_seed": manifest.sample.seed,
            "bootstrap_seed": manifest.bootstrap.seed,
        })

    stars = _column_stars(per_row_records)
    for row in rows:
        name = f"{row['spec']}@{row['paraphrase_id']}"
        for col in ("mae", "kappa", "auc"):
            row[f"star_{col}"] = name == stars.get(col)

    result = {
        "schema": "llmjudge/agreement/v1",
        "provenance": {
            "code_version": __version__,
            "model": manifest.decoding.model,
            "params": manifest.decoding.as_dict(),
            "gold_hash": corpus.gold_hash,
            "sample_seed": manifest.sample.seed,
            "bootstrap": {"n_resamples": manifest.bootstrap.n_resamples,
                          "level": manifest.bootstrap.level,
                          "seed": manifest.bootstrap.seed},
            "binarize_threshold": threshold,
            "mae_mode": manifest.mae_mode,
        },
        "stars": stars,
        "rows": rows,
    }
    out = Path(manifest.out_dir)
    slim = {**result, "rows": [{k: v for k, v in r.items() if k != "kappa_boot"}
                               for r in rows]}
    _dump_json(out / "agreement.json", slim)
    _write_csv(
        out / "agreement.csv",
        ["spec", "paraphrase", "n", "drop_rate",
         "mae", "mae_lo", "mae_hi", "kappa", "kappa_lo", "kappa_hi",
         "auc", "auc_lo", "auc_hi", "star_mae", "star_kappa", "star_auc"],
        [[r["spec"], r["paraphrase_id"], str(r["n"]), _fmt(r["drop_rate"]),
          _fmt(r["mae"]), _fmt(r["mae_lo"]), _fmt(r["mae_hi"]),
          _fmt(r["kappa"]), _fmt(r["kappa_lo"]), _fmt(r["kappa_hi"]),
          _fmt(r["auc"]), _fmt(r["auc_lo"]), _fmt(r["auc_hi"]),
          "*" if r["star_mae"] else "", "*" if r["star_kappa"] else "",
          "*" if r["star_auc"] else ""] for r in rows],
    )
    return result


def _uniq(sample: Sequence[tuple]) -> list[tuple]:
    """Make resampled records unique by key so duplicate draws stay distinct."""
    seen: dict = {}
    out = []
    for r in sample:
        key = r[0]
        count = seen.get(key, 0)
        seen[key] = count + 1
        new_key = key if count == 0 else (key[0], f"{key[1]}#dup{count}")
        out.append((new_key,) + r[1:])
    return out


def _column_stars(per_row_records: Mapping[str, list]) -> dict:
    """Star each column's best row via a paired t-test over per-document units."""
    if len(per_row_records) < 2:
        only = next(iter(per_row_records), None)
        return {"mae": only, "kappa": only, "auc": only, "p_values": {}}
    common = None
    for records in per_row_records.values():
        keys = {r[0] for r in records}
        common = keys if common is None else (common & keys)
    if not common:
        return {"mae": None, "kappa": None, "auc": None, "p_values": {},
                "note": "no documents shared by all prompts"}
    common = sorted(common)

    mae_vecs, agree_vecs, auc_vecs = {}, {}, {}
    credit_keys = None
    for name, records in per_row_records.items():
        by_key = {r[0]: r for r in records}
        mae_vecs[name] = [-abs(by_key[k][2] - by_key[k][5]) for k in common]
        agree_vecs[name] = [1.0 if by_key[k][2] == by_key[k][4] else 0.0 for k in common]
        credits = auc_pair_credits({k: by_key[k][1] for k in common},
                                   {k: by_key[k][3] for k in common})
        if credit_keys is None:
            credit_keys = sorted(credits)  # gold-determined, same for every row
        auc_vecs[name] = [credits[k] for k in credit_keys]

    stars: dict = {"p_values": {}}
    for col, vecs in (("mae", mae_vecs), ("kappa", agree_vecs), ("auc", auc_vecs)):
        if not next(iter(vecs.values())):
            stars[col] = None
            stars["p_values"][col] = None
            continue
        outcome = compare_best(vecs)
        stars[col] = outcome.best if outcome.significant else None
        stars["p_values"][col] = outcome.p_value
    return stars


def cmd_feature_effects(manifest: ExperimentManifest) -> dict:
    """Marginal kappa effect of each prompt feature, with bootstrap CIs."""
    corpus = load_corpus(manifest)
    threshold = manifest.binarize_threshold
    originals = {ml.spec: ml for ml in _all_labels(manifest)
                 if ml.paraphrase_id == "original"}
    needed = [s.label for s in enumerate_specs()]
    missing = [s for s in needed if s not in originals]
    if missing:
        raise PipelineError(f"feature effects need all 32 specs; missing {missing}")

    common = None
    for ml in originals.values():
        keys = set(ml.scores.entries) & set(corpus.gold.entries)
        common = keys if common is None else (common & keys)
    common = sorted(common or [])
    if not common:
        raise PipelineError("no documents are labelled by all 32 specs")

    gold_vec = np.array([1 if corpus.gold.entries[k] >= threshold else 0 for k in common])
    pred = {
        label: np.array([binarize(ml.scores.entries[k], threshold) for k in common])
        for label, ml in originals.items()
    }

    def kappa_table(idx: np.ndarray) -> dict[str, float]:
        return {label: binary_kappa(gold_vec[idx], vec[idx])
                for label, vec in pred.items()}

    point = feature_effects(kappa_table(np.arange(len(common))))

    cfg = manifest.bootstrap
    rng = np.random.default_rng(cfg.seed)
    boot: dict[str, list[float]] = {letter: [] for letter in point}
    kept = 0
    budget = cfg.n_resamples * 50
    attempts = 0
    while kept < cfg.n_resamples:
        attempts += 1
        if attempts > budget:
            raise PipelineError("kappa degenerate on too many resamples")
        idx = rng.integers(0, len(common), size=len(common))
        table = kappa_table(idx)
        if any(np.isnan(v) for v in table.values()):
            continue  # degenerate resample: redraw, as for any undefined statistic
        for letter, delta in feature_effects(table).items():
            boot[letter].append(delta)
        kept += 1
    alpha = (1.0 - cfg.level) / 2.0
    cis = {
        letter: tuple(np.percentile(vals, [100 * alpha, 100 * (1 - alpha)]))
        for letter, vals in boot.items()
    }

    result = {
        "schema": "llmjudge/feature_effects/v1",
        "provenance": {
            "code_version": __version__,
            "gold_hash": corpus.gold_hash,
            "n_documents": len(common),
            "bootstrap_seed": cfg.seed,
        },
        "rows": [
            {"feature": letter, "delta_kappa": point[letter],
             "lo": float(cis[letter][0]), "hi": float(cis[letter][1])}
            for letter in "RDNAM"
        ],
    }
    out = Path(manifest.out_dir)
    _dump_json(out / "feature_effects.json", result)
    _write_csv(
        out / "feature_effects.csv",
        ["feature", "delta_kappa", "lo", "hi"],
        [[r["feature"], _fmt(r["delta_kappa"]), _fmt(r["lo"]), _fmt(r["hi"])]
         for r in result["rows"]],
    )
    return result


def cmd_paraphrase_spread(manifest: ExperimentManifest) -> dict:
    """Kappa spread across paraphrase variants of one prompt design, plus the
    pooled empirical band over all bootstrap draws (the Fig-4 data)."""
    agree = cmd_agree(manifest)
    target = manifest.consistency_spec or manifest.resolved_specs()[0]
    rows = [r for r in agree["rows"] if r["spec"] == target]
    if not rows:
        raise PipelineError(f"no labels for spec {target!r}")

    spread_rows = []
    pooled: list[float] = []
    for r in rows:
        boot = r["kappa_boot"]
        pooled.extend(boot)
        spread_rows.append({
            "variant": r["paraphrase_id"],
            "kappa_mean": float(np.mean(boot)),
            "kappa": r["kappa"],
            "lo": r["kappa_lo"],
            "hi": r["kappa_hi"],
        })
    spread_rows.sort(key=lambda r: (r["kappa_mean"], r["variant"]))
    band_lo, band_hi = np.percentile(pooled, [2.5, 97.5])

    result = {
        "schema": "llmjudge/paraphrase_spread/v1",
        "spec": target,
        "provenance": agree["provenance"],
        "band": {"lo": float(band_lo), "hi": float(band_hi)},
        "rows": spread_rows,
    }
    out = Path(manifest.out_dir)
    _dump_json(out / "paraphrase_spread.json", result)
    _write_csv(
        out / "paraphrase_spread.csv",
        ["variant", "kappa_mean", "lo", "hi"],
        [[r["variant"], _fmt(r["kappa_mean"]), _fmt(r["lo"]), _fmt(r["hi"])]
         for r in spread_rows],
    )
    return result


def cmd_consistency(manifest: ExperimentManifest) -> dict:
    """Table-4 style report: query/run/group ordering agreement between gold
    and model labels, for each configured metric."""
    corpus = load_corpus(manifest)
    runs = load_runs(manifest)
    threshold = manifest.binarize_threshold

    target = manifest.consistency_spec or manifest.resolved_specs()[0]
    path = _labels_path(manifest, target, "original")
    if not path.is_file():
        raise PipelineError(f"labels file not found: {path}")
    model = load_labels_file(path)

    reports: list[ConsistencyReport] = []
    gold_vectors = []
    model_vectors = []
    for metric in manifest.metrics:
        gold_by_run = {}
        model_by_run = {}
        for run in runs:
            gold_by_run[run.tag] = score_run(run, corpus.gold, metric,
                                             threshold=threshold)
            model_by_run[run.tag] = score_run(run, model.scores, metric,
                                              threshold=threshold)
        gold_vectors.extend(gold_by_run[run.tag] for run in runs)
        model_vectors.extend(model_by_run[run.tag] for run in runs)

        def query_means(by_run) -> dict[int, float]:
            per_topic: dict[int, list[float]] = {}
            for qsv in by_run.values():
                for t, s in qsv.scores.items():
                    per_topic.setdefault(t, []).append(s)
            return {t: statistics.mean(v) for t, v in per_topic.items()}

        reports.append(compare_score_maps(
            query_means(gold_by_run), query_means(model_by_run),
            metric=metric.label, level="query", phi=manifest.phi_queries,
            ascending=True,
        ))

        gold_sys = {tag: qsv.system_score for tag, qsv in gold_by_run.items()}
        model_sys = {tag: qsv.system_score for tag, qsv in model_by_run.items()}
        reports.append(compare_score_maps(
            gold_sys, model_sys,
            metric=metric.label, level="run", phi=manifest.phi_runs,
            ascending=False,
        ))

        gold_groups = group_best(runs, gold_sys)
        model_groups = group_best(runs, model_sys)
        reports.append(compare_score_maps(
            gold_groups.scores, model_groups.scores,
            metric=metric.label, level="group", phi=manifest.phi_runs,
            ascending=False,
        ))

    result = {
        "schema": "llmjudge/consistency/v1",
        "provenance": {
            "code_version": __version__,
            "gold_hash": corpus.gold_hash,
            "model_labels": f"{target}@original",
            "label_hash": model.source_hash,
            "phi_queries": manifest.phi_queries,
            "phi_runs": manifest.phi_runs,
            "n_runs": len(runs),
            "unjudged_policy": "not relevant",
        },
        "rows": [r.as_row() for r in reports],
    }
    out = Path(manifest.out_dir)
    _dump_json(out / "consistency.json", result)
    _write_csv(
        out / "consistency.csv",
        ["metric", "level", "phi", "rbo_raw", "rbo_min", "rbo_normalized", "tau",
         "universe", "ties_gold", "ties_model"],
        [[r.metric, r.level, _fmt(r.phi), _fmt(r.rbo_raw), _fmt(r.rbo_min),
          _fmt(r.rbo_normalized), _fmt(r.tau), str(r.universe),
          str(r.ties_gold), str(r.ties_model)] for r in reports],
    )
    (out / "query_scores_gold.csv").write_text(
        format_query_scores_csv(gold_vectors), "utf-8")
    (out / "query_scores_model.csv").write_text(
        format_query_scores_csv(model_vectors), "utf-8")
    return result


def cmd_split_select(manifest: ExperimentManifest) -> dict:
    """Repeated-split regret protocol over the labelled prompt variants."""
    corpus = load_corpus(manifest)
    threshold = manifest.binarize_threshold
    all_labels = sorted(_all_labels(manifest), key=_row_order)
    originals = [ml for ml in all_labels if ml.paraphrase_id == "original"]
    pool = originals if len(originals) >= 2 else all_labels
    if len(pool) < 2:
        raise PipelineError("split selection needs at least 2 labelled prompts")

    def name(ml: ModelLabels) -> str:
        return ml.spec if ml.paraphrase_id == "original" else f"{ml.spec}@{ml.paraphrase_id}"

    common = None
    for ml in pool:
        keys = set(ml.scores.entries) & set(corpus.gold.entries)
        common = keys if common is None else (common & keys)
    common = sorted(common or [])
    if len(common) < 4:
        raise PipelineError("too few documents shared by all prompts for splitting")

    gold_vec = [1 if corpus.gold.entries[k] >= threshold else 0 for k in common]
    candidates = {
        name(ml): [binarize(ml.scores.entries[k], threshold) for k in common]
        for ml in pool
    }
    baseline = manifest.split_baseline
    if baseline is None:
        baseline = "-----" if "-----" in candidates else next(iter(candidates))

    report = split_selection(gold_vec, candidates, baseline,
                             n_iter=manifest.split_iterations,
                             seed=manifest.split_seed)
    result = {
        "schema": "llmjudge/split_selection/v1",
        "provenance": {
            "code_version": __version__,
            "gold_hash": corpus.gold_hash,
            "n_documents": len(common),
            "seed": report.seed,
        },
        "n_iter": report.n_iter,
        "baseline": report.baseline,
        "wins_vs_baseline": report.wins_vs_baseline,
        "ties_vs_baseline": report.ties_vs_baseline,
        "non_loss_fraction": report.non_loss_fraction,
        "best_on_second": report.best_on_second,
        "selection_counts": report.selection_counts,
        "selection_ties": report.selection_ties,
        "modal_best": report.modal_best,
        "modal_fraction": report.modal_fraction,
    }
    _dump_json(Path(manifest.out_dir) / "split_selection.json", result)
    return result


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    def line(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(header), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out)


def cmd_report(manifest: ExperimentManifest) -> Path:
    """Render plain-text tables from whichever artifacts exist.

    Errors if none of the expected inputs are present, listing them.
    """
    out = Path(manifest.out_dir)
    artifacts = {
        "agreement": out / "agreement.json",
        "feature_effects": out / "feature_effects.json",
        "paraphrase_spread": out / "paraphrase_spread.json",
        "consistency": out / "consistency.json",
        "split_selection": out / "split_selection.json",
    }
    present = {k: p for k, p in artifacts.items() if p.is_file()}
    if not present:
        missing = ", ".join(str(p) for p in artifacts.values())
        raise PipelineError(f"nothing to report; expected any of: {missing}")

    sections: list[str] = []

    if "agreement" in present:
        data = json.loads(present["agreement"].read_text("utf-8"))
        rows = [
            [r["spec"], r["paraphrase_id"], str(r["n"]), f"{r['drop_rate']:.4f}",
             f"{r['mae']:.2f} ({r['mae_lo']:.2f}-{r['mae_hi']:.2f})"
             + ("*" if r["star_mae"] else ""),
             f"{r['kappa']:.2f} ({r['kappa_lo']:.2f}-{r['kappa_hi']:.2f})"
             + ("*" if r["star_kappa"] else ""),
             f"{r['auc']:.2f} ({r['auc_lo']:.2f}-{r['auc_hi']:.2f})"
             + ("*" if r["star_auc"] else "")]
            for r in data["rows"]
        ]
        sections.append("Prompt agreement with gold labels\n" + _table(
            ["prompt", "variant", "n", "drop", "MAE (95% CI)", "kappa (95% CI)",
             "AUC (95% CI)"], rows))

    if "feature_effects" in present:
        data = json.loads(present["feature_effects"].read_text("utf-8"))
        rows = [[r["feature"], f"{r['delta_kappa']:+.4f}",
                 f"{r['lo']:+.4f}", f"{r['hi']:+.4f}"] for r in data["rows"]]
        sections.append("Feature effects on kappa\n" + _table(
            ["feature", "delta", "lo", "hi"], rows))

    if "paraphrase_spread" in present:
        data = json.loads(present["paraphrase_spread"].read_text("utf-8"))
        rows = [[r["variant"], f"{r['kappa_mean']:.3f}", f"{r['lo']:.3f}",
                 f"{r['hi']:.3f}"] for r in data["rows"]]
        band = data["band"]
        sections.append(
            f"Paraphrase spread for {data['spec']} "
            f"(pooled 95% band {band['lo']:.3f}-{band['hi']:.3f})\n"
            + _table(["variant", "mean kappa", "lo", "hi"], rows))

    if "consistency" in present:
        data = json.loads(present["consistency"].read_text("utf-8"))
        rows = [[r["metric"], r["level"], f"{r['phi']:.1f}",
                 f"{r['rbo_normalized']:.3f}", f"{r['tau']:.3f}"]
                for r in data["rows"]]
        sections.append("Ranking consistency (model vs gold labels)\n" + _table(
            ["metric", "level", "phi", "RBO(norm)", "tau"], rows))

    if "split_selection" in present:
        data = json.loads(present["split_selection"].read_text("utf-8"))
        sections.append(
            "Split selection\n"
            f"baseline {data['baseline']}: best-on-first-split beat it on the "
            f"second split in {data['wins_vs_baseline']}/{data['n_iter']} iterations "
            f"({data['ties_vs_baseline']} ties); modal best prompt "
            f"{data['modal_best']} ({data['selection_counts'][data['modal_best']]}"
            f"/{data['n_iter']} first splits)."
        )

    prov_lines = [f"code_version: {__version__}"]
    for key in sorted(present):
        data = json.loads(present[key].read_text("utf-8"))
        for k, v in sorted(data.get("provenance", {}).items()):
            prov_lines.append(f"{key}.{k}: {v}")
    sections.append("Provenance\n" + "\n".join(prov_lines))

    report_path = out / "report" / "report.txt"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text("\n\n".join(sections) + "\n", "utf-8")
    return report_path
