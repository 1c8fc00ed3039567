"""Experiment manifest: one JSON file that pins every input and tunable.

All stochastic steps take their seeds from here, so a manifest plus a warm
response cache fully determines every byte of the reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .effectiveness import MetricSpec
from .judge import DecodingParams
from .prompts import PromptSpec, enumerate_specs
from .stats import BootstrapConfig


class ManifestError(ValueError):
    """The manifest is missing something or points at absent files."""


@dataclass
class SampleConfig:
    n_per_grade: int
    seed: int


@dataclass
class MockConfig:
    flip_rate: float = 0.0
    seed: int = 0


@dataclass
class EndpointConfig:
    url: str
    api_key_env: str | None = None
    timeout: float = 60.0


@dataclass
class DocStoreConfig:
    kind: str  # "dir" | "archive" | "mapping"
    path: str
    index: str | None = None


@dataclass
class ExperimentManifest:
    topics_path: str
    qrels_path: str
    docstore: DocStoreConfig
    sample: SampleConfig
    decoding: DecodingParams
    out_dir: str
    cache_dir: str
    runs_dir: str | None = None
    group_map: dict[str, str] = field(default_factory=dict)
    prompt_specs: list[str] = field(default_factory=lambda: ["-----"])
    paraphrase_bank: str | None = None
    paraphrase_ids: list[str] = field(default_factory=lambda: ["original"])
    endpoint: EndpointConfig | None = None
    mock: MockConfig = field(default_factory=MockConfig)
    metrics: list[MetricSpec] = field(default_factory=lambda: [
        MetricSpec.precision(10), MetricSpec.rbp(100, 0.6), MetricSpec.ap(100),
    ])
    consistency_spec: str | None = None  # defaults to the first prompt spec
    phi_queries: float = 0.9
    phi_runs: float = 0.7
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    binarize_threshold: float = 1.0
    mae_mode: str = "fractional"  # or "hard"
    doc_char_budget: int = 16000
    concurrency: int = 4
    split_iterations: int = 1000
    split_seed: int = 0
    split_baseline: str | None = None  # defaults to "-----" when present

    def resolved_specs(self) -> list[str]:
        return [PromptSpec.from_string(s).label for s in self.prompt_specs]

    def validate(self) -> None:
        problems = []
        for name, path in (("topics", self.topics_path), ("qrels", self.qrels_path)):
            if not Path(path).is_file():
                problems.append(f"{name} file not found: {path}")
        if self.docstore.kind not in ("dir", "archive"):
            problems.append(f"unknown docstore kind {self.docstore.kind!r}")
        elif self.docstore.kind == "dir" and not Path(self.docstore.path).is_dir():
            problems.append(f"docstore directory not found: {self.docstore.path}")
        elif self.docstore.kind == "archive":
            if not Path(self.docstore.path).is_file():
                problems.append(f"docstore archive not found: {self.docstore.path}")
            if not self.docstore.index or not Path(self.docstore.index).is_file():
                problems.append(f"docstore index not found: {self.docstore.index}")
        if self.runs_dir is not None and not Path(self.runs_dir).is_dir():
            problems.append(f"runs directory not found: {self.runs_dir}")
        if self.paraphrase_bank is not None and not Path(self.paraphrase_bank).is_file():
            problems.append(f"paraphrase bank not found: {self.paraphrase_bank}")
        if self.mae_mode not in ("fractional", "hard"):
            problems.append(f"mae_mode must be 'fractional' or 'hard', got {self.mae_mode!r}")
        try:
            self.resolved_specs()
        except ValueError as e:
            problems.append(str(e))
        if problems:
            raise ManifestError("; ".join(problems))


def _metric_from_dict(d: dict) -> MetricSpec:
    kind = d.get("kind")
    if kind == "precision":
        return MetricSpec.precision(d.get("depth", 10))
    if kind == "rbp":
        return MetricSpec.rbp(d.get("depth", 100), d.get("phi", 0.6))
    if kind == "ap":
        return MetricSpec.ap(d.get("depth", 100))
    raise ManifestError(f"unknown metric kind {kind!r}")


def load_manifest(path: str | Path) -> ExperimentManifest:
    """Load and validate a manifest JSON file.

    Seeds must be explicit: the sample seed, bootstrap seed and (when the
    mock endpoint is used) mock seed all live in the file.
    """
    base = Path(path).parent
    data = json.loads(Path(path).read_text("utf-8"))
    for required in ("topics", "qrels", "sample", "decoding"):
        if required not in data:
            raise ManifestError(f"manifest is missing {required!r}")

    def resolve(p):
        return str((base / p).resolve()) if p is not None else None

    try:
        sample = data["sample"]
        sample_cfg = SampleConfig(n_per_grade=int(sample["n_per_grade"]),
                                  seed=int(sample["seed"]))
    except KeyError as e:
        raise ManifestError(f"manifest sample config incomplete: missing {e.args[0]!r}") from None

    decoding = data.get("decoding", {})
    if "model" not in decoding:
        raise ManifestError("manifest decoding config needs a model name")
    params = DecodingParams(
        model=decoding["model"],
        temperature=float(decoding.get("temperature", 0.0)),
        top_p=float(decoding.get("top_p", 1.0)),
        frequency_penalty=float(decoding.get("frequency_penalty", 0.5)),
        presence_penalty=float(decoding.get("presence_penalty", 0.0)),
        stop=tuple(decoding["stop"]) if decoding.get("stop") else None,
    )

    docstore = data.get("docstore") or {}
    ds_cfg = DocStoreConfig(
        kind=docstore.get("kind", "dir"),
        path=resolve(docstore.get("path", "docs")),
        index=resolve(docstore.get("index")),
    )

    endpoint = None
    if data.get("endpoint"):
        ep = data["endpoint"]
        if "url" not in ep:
            raise ManifestError("endpoint config needs a url")
        endpoint = EndpointConfig(url=ep["url"], api_key_env=ep.get("api_key_env"),
                                  timeout=float(ep.get("timeout", 60.0)))

    mock = data.get("mock") or {}
    mock_cfg = MockConfig(flip_rate=float(mock.get("flip_rate", 0.0)),
                          seed=int(mock.get("seed", 0)))

    boot = data.get("bootstrap") or {}
    if "seed" not in boot:
        raise ManifestError("bootstrap config needs an explicit seed")
    boot_cfg = BootstrapConfig(
        n_resamples=int(boot.get("n_resamples", 20)),
        level=float(boot.get("level", 0.95)),
        seed=int(boot["seed"]),
    )

    specs = data.get("prompt_specs", ["-----"])
    if specs == "all32" or specs == "all":
        specs = [s.label for s in enumerate_specs()]

    metrics = [_metric_from_dict(m) for m in data.get("metrics", [
        {"kind": "precision", "depth": 10},
        {"kind": "rbp", "depth": 100, "phi": 0.6},
        {"kind": "ap", "depth": 100},
    ])]

    manifest = ExperimentManifest(
        topics_path=resolve(data["topics"]),
        qrels_path=resolve(data["qrels"]),
        runs_dir=resolve(data.get("runs_dir")),
        group_map=data.get("group_map", {}),
        docstore=ds_cfg,
        sample=sample_cfg,
        prompt_specs=list(specs),
        paraphrase_bank=resolve(data.get("paraphrase_bank")),
        paraphrase_ids=list(data.get("paraphrase_ids", ["original"])),
        endpoint=endpoint,
        mock=mock_cfg,
        decoding=params,
        metrics=metrics,
        consistency_spec=data.get("consistency_spec"),
        phi_queries=float(data.get("phi_queries", 0.9)),
        phi_runs=float(data.get("phi_runs", 0.7)),
        bootstrap=boot_cfg,
        binarize_threshold=float(data.get("binarize_threshold", 1.0)),
        mae_mode=data.get("mae_mode", "fractional"),
        doc_char_budget=int(data.get("doc_char_budget", 16000)),
        concurrency=int(data.get("concurrency", 4)),
        split_iterations=int(data.get("split_iterations", 1000)),
        split_seed=int(data.get("split_seed", 0)),
        split_baseline=data.get("split_baseline"),
        out_dir=resolve(data.get("out_dir", "out")),
        cache_dir=resolve(data.get("cache_dir", "cache")),
    )
    manifest.validate()
    return manifest
