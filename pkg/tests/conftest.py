"""Shared fixtures: synthetic corpora, runs, and manifests on disk."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

TOPIC_BLOCK = """<top>
<num> Number: {num}
<title> {title}

<desc> Description:
{desc}

<narr> Narrative:
{narr}

</top>
"""


def make_topics_text(topic_ids) -> str:
    return "".join(
        TOPIC_BLOCK.format(
            num=t,
            title=f"subject {t} findings",
            desc=f"Documents describing subject {t} in detail.",
            narr=f"Relevant documents must discuss subject {t} directly.",
        )
        for t in topic_ids
    )


def build_corpus(root: Path, *, n_topics: int = 3, docs_per_topic: int = 10,
                 grades=(0, 1), n_runs: int = 0, run_depth: int = 8,
                 groups_of: int = 2) -> dict:
    """Write a synthetic corpus (topics, qrels, docs, runs) under root.

    Grades cycle through ``grades`` per document, so strata are equal-sized.
    Runs front-load a varying number of relevant documents per topic so that
    query, run, and group scores all differ.
    """
    topic_ids = list(range(301, 301 + n_topics))
    (root / "docs").mkdir(parents=True, exist_ok=True)
    (root / "topics.sgml").write_text(make_topics_text(topic_ids), "utf-8")

    qrels_lines = []
    docs_by_topic: dict[int, list[str]] = {}
    grade_of: dict[tuple[int, str], int] = {}
    for t in topic_ids:
        docs = []
        for j in range(docs_per_topic):
            doc_id = f"D{t}-{j}"
            grade = grades[j % len(grades)]
            docs.append(doc_id)
            grade_of[(t, doc_id)] = grade
            qrels_lines.append(f"{t} 0 {doc_id} {grade}")
            (root / "docs" / f"{doc_id}.txt").write_text(
                f"Text of document {doc_id} discussing subject {t}. "
                f"Grade hint {grade}.", "utf-8")
        docs_by_topic[t] = docs
    (root / "qrels.txt").write_text("\n".join(qrels_lines) + "\n", "utf-8")

    group_map = {}
    if n_runs:
        (root / "runs").mkdir(exist_ok=True)
        for r in range(n_runs):
            tag = f"run{r}"
            group_map[tag] = f"group{r // groups_of}"
            lines = []
            for ti, t in enumerate(topic_ids):
                rel = [d for d in docs_by_topic[t] if grade_of[(t, d)] >= 1]
                non = [d for d in docs_by_topic[t] if grade_of[(t, d)] == 0]
                depth = min(run_depth, len(rel) + len(non))
                k = ((ti + 1) * (r + 2)) % (depth + 1)
                k = min(k, len(rel))
                ranking = rel[:k] + non[: depth - k]
                for rank, doc in enumerate(ranking, start=1):
                    lines.append(f"{t} Q0 {doc} {rank} {100 - rank}.0 {tag}")
            (root / "runs" / f"{tag}.run").write_text("\n".join(lines) + "\n", "utf-8")

    return {
        "root": root,
        "topic_ids": topic_ids,
        "docs_by_topic": docs_by_topic,
        "grade_of": grade_of,
        "group_map": group_map,
        "stratum_size": n_topics * docs_per_topic // len(grades),
    }


def write_manifest(root: Path, corpus: dict, name: str = "manifest.json",
                   **overrides) -> Path:
    manifest = {
        "topics": "topics.sgml",
        "qrels": "qrels.txt",
        "docstore": {"kind": "dir", "path": "docs"},
        "sample": {"n_per_grade": corpus["stratum_size"], "seed": 7},
        "decoding": {"model": "mock-judge-1"},
        "mock": {"flip_rate": 0.0, "seed": 11},
        "bootstrap": {"n_resamples": 20, "level": 0.95, "seed": 5},
        "prompt_specs": ["-----"],
        "out_dir": "out",
        "cache_dir": "cache",
        "concurrency": 2,
    }
    if corpus["group_map"]:
        manifest["runs_dir"] = "runs"
        manifest["group_map"] = corpus["group_map"]
    manifest.update(overrides)
    path = root / name
    path.write_text(json.dumps(manifest, indent=2), "utf-8")
    return path


@pytest.fixture
def mini_corpus(tmp_path: Path) -> dict:
    """3 topics x 12 binary-graded docs, 4 runs in 2 groups."""
    return build_corpus(tmp_path, n_topics=3, docs_per_topic=12, grades=(0, 1),
                        n_runs=4, run_depth=8)


@pytest.fixture
def graded_corpus(tmp_path: Path) -> dict:
    """3 topics x 12 docs over grades {0, 1, 2} (no runs)."""
    return build_corpus(tmp_path, n_topics=3, docs_per_topic=12, grades=(0, 1, 2))
