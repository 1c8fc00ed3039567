"""TREC corpus handling: topics, qrels, runs, and document text.

File formats follow TREC conventions:

* topics: SGML-ish markup with ``<top>``, ``<num>``, ``<title>``, ``<desc>``,
  ``<narr>`` blocks; field labels like ``Number:`` are stripped.
* qrels: ``topic 0 docid grade`` per line, whitespace-separated.
* runs: ``topic Q0 docid rank score tag`` per line.
* document store: a directory of ``<docid>.txt`` files, or a single
  concatenated archive plus a JSON sidecar index mapping
  ``docid -> [byte_offset, byte_length]`` into the archive.
"""

from __future__ import annotations

import json
import random
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

GOLD_GRADES = (0, 1, 2)

LabelKey = tuple[int, str]


class ParseError(ValueError):
    """A topic, qrels, or run file is malformed."""


@dataclass(frozen=True)
class Topic:
    """One TREC information need: title plus optional description/narrative."""

    id: int
    title: str
    description: str | None = None
    narrative: str | None = None

    def __post_init__(self) -> None:
        if self.id <= 0:
            raise ValueError(f"topic id must be positive, got {self.id}")
        if not self.title or not self.title.strip():
            raise ValueError(f"topic {self.id} has an empty title")


@dataclass
class LabelSet:
    """Relevance labels keyed by (topic id, doc id).

    Gold label sets hold integer grades in {0, 1, 2}; model label sets hold
    rational scores in [0, 2] (means over simulated judges).
    """

    entries: dict[LabelKey, float]
    source: str = "gold"

    def __len__(self) -> int:
        return len(self.entries)

    def topics(self) -> set[int]:
        return {t for t, _ in self.entries}

    def grade_counts(self) -> Counter:
        """Counts per integer grade (model scores are not rounded; exact ints only)."""
        return Counter(int(v) if float(v).is_integer() else v for v in self.entries.values())

    def for_topic(self, topic: int) -> dict[str, float]:
        return {d: v for (t, d), v in self.entries.items() if t == topic}


class Posting(NamedTuple):
    doc_id: str
    rank: int
    score: float


@dataclass
class Run:
    """Ranked retrieval output of one system, tagged with its submitting group."""

    tag: str
    group: str
    rankings: dict[int, list[Posting]]

    def topics(self) -> set[int]:
        return set(self.rankings)

    def docs(self, topic: int) -> list[str]:
        return [p.doc_id for p in self.rankings.get(topic, [])]

    def __len__(self) -> int:
        return sum(len(v) for v in self.rankings.values())


_TOPIC_TAG = re.compile(r"<(/?)(num|title|desc|narr)>", re.IGNORECASE)
_FIELD_PREFIX = {
    "num": re.compile(r"^\s*Number:\s*", re.IGNORECASE),
    "desc": re.compile(r"^\s*Description:\s*", re.IGNORECASE),
    "narr": re.compile(r"^\s*Narrative:\s*", re.IGNORECASE),
}


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


def _normalise(s: str) -> str:
    return " ".join(s.split())


def parse_topics(text: str) -> list[Topic]:
    """Parse TREC topic markup into Topic records.

    Raises ParseError naming the byte offset and block index of any
    malformed ``<top>`` block.
    """
    blocks = list(re.finditer(r"<top>(.*?)</top>", text, re.DOTALL | re.IGNORECASE))
    opened = len(re.findall(r"<top>", text, re.IGNORECASE))
    if opened != len(blocks):
        # find the first <top> that is not the start of a matched block
        starts = {m.start() for m in blocks}
        for m in re.finditer(r"<top>", text, re.IGNORECASE):
            if m.start() not in starts:
                raise ParseError(
                    f"unterminated <top> block {len(blocks)} "
                    f"at byte offset {_byte_offset(text, m.start())}"
                )

    topics: list[Topic] = []
    seen: set[int] = set()
    for index, block in enumerate(blocks):
        body = block.group(1)
        offset = _byte_offset(text, block.start())
        fields: dict[str, str] = {}
        tags = list(_TOPIC_TAG.finditer(body))
        for i, tag in enumerate(tags):
            if tag.group(1):  # closing tag, only a boundary
                continue
            name = tag.group(2).lower()
            end = tags[i + 1].start() if i + 1 < len(tags) else len(body)
            raw = body[tag.end():end]
            prefix = _FIELD_PREFIX.get(name)
            if prefix:
                raw = prefix.sub("", raw, count=1)
            fields[name] = _normalise(raw)

        if "num" not in fields:
            raise ParseError(f"topic block {index} at byte offset {offset}: missing <num>")
        try:
            num = int(fields["num"])
        except ValueError:
            raise ParseError(
                f"topic block {index} at byte offset {offset}: "
                f"non-integer topic number {fields['num']!r}"
            ) from None
        if not fields.get("title"):
            raise ParseError(f"topic block {index} at byte offset {offset}: missing <title>")
        if num in seen:
            raise ParseError(f"topic block {index} at byte offset {offset}: duplicate topic {num}")
        seen.add(num)
        topics.append(
            Topic(
                id=num,
                title=fields["title"],
                description=fields.get("desc") or None,
                narrative=fields.get("narr") or None,
            )
        )
    return topics


def parse_qrels(text: str) -> LabelSet:
    """Parse a qrels file (``topic 0 docid grade``) into a gold LabelSet.

    Grades outside {0, 1, 2} are rejected, not clamped; duplicates are errors.
    """
    entries: dict[LabelKey, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"qrels line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            topic = int(parts[0])
        except ValueError:
            raise ParseError(f"qrels line {lineno}: non-integer topic {parts[0]!r}") from None
        try:
            grade = int(parts[3])
        except ValueError:
            raise ParseError(f"qrels line {lineno}: non-integer grade {parts[3]!r}") from None
        if grade not in GOLD_GRADES:
            raise ParseError(f"qrels line {lineno}: grade {grade} outside {GOLD_GRADES}")
        key = (topic, parts[2])
        if key in entries:
            raise ParseError(f"qrels line {lineno}: duplicate judgment for {key}")
        entries[key] = grade
    return LabelSet(entries=entries, source="gold")


def format_qrels(labels: LabelSet) -> str:
    """Serialise a LabelSet back to qrels text (sorted; round-trips parse_qrels)."""
    lines = []
    for (topic, doc) in sorted(labels.entries):
        grade = labels.entries[(topic, doc)]
        grade_s = str(int(grade)) if float(grade).is_integer() else repr(grade)
        lines.append(f"{topic} 0 {doc} {grade_s}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_run(text: str, *, group: str | None = None,
              group_map: Mapping[str, str] | None = None) -> Run:
    """Parse a TREC run file (``topic Q0 docid rank score tag``).

    Out-of-order ranks are re-sorted with a warning; a duplicate document
    within a topic is an error. The group is resolved from ``group_map``
    (or ``group``), falling back to the run tag itself.
    """
    per_topic: dict[int, list[Posting]] = {}
    seen_docs: dict[int, set[str]] = {}
    tags: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ParseError(f"run line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            topic = int(parts[0])
            rank = int(parts[3])
            score = float(parts[4])
        except ValueError:
            raise ParseError(f"run line {lineno}: non-numeric topic/rank/score") from None
        doc = parts[2]
        tags.add(parts[5])
        if doc in seen_docs.setdefault(topic, set()):
            raise ParseError(f"run line {lineno}: duplicate document {doc!r} in topic {topic}")
        seen_docs[topic].add(doc)
        per_topic.setdefault(topic, []).append(Posting(doc, rank, score))

    if len(tags) > 1:
        raise ParseError(f"run file mixes tags: {sorted(tags)}")
    tag = tags.pop() if tags else ""

    for topic, postings in per_topic.items():
        ranks = [p.rank for p in postings]
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            postings.sort(key=lambda p: p.rank)
            warnings.warn(f"run {tag!r} topic {topic}: ranks out of order, re-sorted")
            ranks = [p.rank for p in postings]
        if any(b == a for a, b in zip(ranks, ranks[1:])):
            raise ParseError(f"run {tag!r} topic {topic}: duplicate rank")
        if ranks and ranks[0] != 1:
            warnings.warn(f"run {tag!r} topic {topic}: ranking starts at rank {ranks[0]}")

    if group is None:
        group = (group_map or {}).get(tag, tag)
    return Run(tag=tag, group=group, rankings=per_topic)


def format_run(run: Run) -> str:
    """Serialise a Run back to TREC run text (round-trips parse_run)."""
    lines = []
    for topic in sorted(run.rankings):
        for p in run.rankings[topic]:
            lines.append(f"{topic} Q0 {p.doc_id} {p.rank} {p.score!r} {run.tag}")
    return "\n".join(lines) + ("\n" if lines else "")


def stratified_sample(gold: LabelSet, n_per_grade: int, seed: int) -> LabelSet:
    """Draw n_per_grade judgments per grade, uniformly without replacement.

    Deterministic for a given seed. Strata are the distinct grades present
    in ``gold``; a stratum smaller than n_per_grade is an error.
    """
    if n_per_grade < 0:
        raise ValueError("n_per_grade must be non-negative")
    strata: dict[int, list[LabelKey]] = {}
    for key, grade in gold.entries.items():
        strata.setdefault(int(grade), []).append(key)

    rng = random.Random(seed)
    chosen: list[LabelKey] = []
    for grade in sorted(strata):
        keys = sorted(strata[grade])
        if len(keys) < n_per_grade:
            raise ValueError(
                f"stratum for grade {grade} has {len(keys)} entries, need {n_per_grade}"
            )
        chosen.extend(rng.sample(keys, n_per_grade))

    entries = {k: gold.entries[k] for k in sorted(chosen)}
    return LabelSet(entries=entries, source=gold.source)


@dataclass(frozen=True)
class FetchedDoc:
    """Document text as handed to the prompt renderer."""

    doc_id: str
    text: str
    truncated: bool

    @property
    def empty(self) -> bool:
        return not self.text


def _truncate_at_whitespace(text: str, budget: int) -> tuple[str, bool]:
    if len(text) <= budget:
        return text, False
    cut = text[:budget]
    if not text[budget].isspace():
        # do not split a word: back up to the last whitespace inside the budget
        m = re.search(r"\s\S*$", cut)
        if m:
            cut = cut[: m.start()]
    return cut.rstrip(), True


class DocumentStore:
    """Read-only document text lookup with a character budget for prompts.

    Construct with :meth:`from_directory`, :meth:`from_archive`, or
    :meth:`from_mapping`. Lookups are pure after construction, so a store is
    safely shareable across threads.
    """

    def __init__(self, lookup: Callable[[str], str | None], char_budget: int = 16000):
        if char_budget < 1:
            raise ValueError("char_budget must be positive")
        self._lookup = lookup
        self.char_budget = char_budget

    @classmethod
    def from_directory(cls, path: str | Path, char_budget: int = 16000) -> "DocumentStore":
        root = Path(path)

        def lookup(doc_id: str) -> str | None:
            f = root / f"{doc_id}.txt"
            return f.read_text("utf-8") if f.is_file() else None

        return cls(lookup, char_budget)

    @classmethod
    def from_archive(cls, archive: str | Path, index: str | Path,
                     char_budget: int = 16000) -> "DocumentStore":
        """Archive = concatenated docs; index = JSON {docid: [offset, length]} in bytes."""
        archive = Path(archive)
        table: dict[str, list[int]] = json.loads(Path(index).read_text("utf-8"))

        def lookup(doc_id: str) -> str | None:
            entry = table.get(doc_id)
            if entry is None:
                return None
            offset, length = entry
            with archive.open("rb") as fh:
                fh.seek(offset)
                return fh.read(length).decode("utf-8")

        return cls(lookup, char_budget)

    @classmethod
    def from_mapping(cls, docs: Mapping[str, str], char_budget: int = 16000) -> "DocumentStore":
        return cls(lambda doc_id: docs.get(doc_id), char_budget)

    def get(self, doc_id: str) -> FetchedDoc:
        text = self._lookup(doc_id)
        if text is None:
            raise KeyError(f"unknown document id {doc_id!r}")
        cut, truncated = _truncate_at_whitespace(text, self.char_budget)
        return FetchedDoc(doc_id=doc_id, text=cut, truncated=truncated)


def get_document(store: DocumentStore, doc_id: str) -> FetchedDoc:
    """Fetch one document, truncated to the store's character budget."""
    return store.get(doc_id)


@dataclass
class CoverageReport:
    """Topics referenced by qrels/runs that do not resolve, plus zero-relevant topics."""

    unknown_qrel_topics: set[int] = field(default_factory=set)
    unknown_run_topics: dict[str, set[int]] = field(default_factory=dict)
    zero_relevant_topics: set[int] = field(default_factory=set)

    @property
    def clean(self) -> bool:
        return not self.unknown_qrel_topics and not any(self.unknown_run_topics.values())


def coverage_report(topics: Sequence[Topic], qrels: LabelSet | None = None,
                    runs: Iterable[Run] = ()) -> CoverageReport:
    """Cross-check topic references. A topic with zero relevant documents is
    legal (it loads, and scores zero on every metric) but is reported here."""
    ids = {t.id for t in topics}
    report = CoverageReport()
    if qrels is not None:
        report.unknown_qrel_topics = qrels.topics() - ids
        relevant = {t for (t, _), g in qrels.entries.items() if g >= 1}
        report.zero_relevant_topics = ids - relevant
    for run in runs:
        missing = run.topics() - ids
        if missing:
            report.unknown_run_topics[run.tag] = missing
    return report
