"""Prompt rendering for relevance labelling.

A prompt is assembled from four parts: grading instructions (with an
optional rater-role sentence), the query block (optionally expanded with
the topic description and narrative), the document block, and the step
instructions (optionally expanded with per-aspect scores and a
multiple-simulated-judges request). Five boolean flags -- R, D, N, A, M --
select the optional spans; every combination yields a well-formed prompt
that ends with the JSON-priming token sequence ``[{``.

The two instruction spans can be swapped for paraphrased wordings loaded
from a bank file. ``steps_text`` is a ``string.Template`` and must keep the
placeholders ``$aspect_steps``, ``$aspect_lead``, ``$multiple_judges`` and
``$output_example`` so the optional spans continue to land in the right
place; ``instruction_text`` is literal text.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from string import Template

from .trec import Topic

FEATURE_LETTERS = "RDNAM"
FEATURE_NAMES = ("role", "description", "narrative", "aspects", "multiple")

ROLE_SENTENCE = "You are a search quality rater evaluating the relevance of web pages."

ORIGINAL_INSTRUCTIONS = (
    "Given a query and a web page, you must provide a score on an integer scale "
    "of 0 to 2 with the following meanings:\n"
    "\n"
    "2 = highly relevant, very helpful for this query\n"
    "1 = relevant, may be partly helpful but might contain other irrelevant content\n"
    "0 = not relevant, should never be shown for this query\n"
    "\n"
    "Assume that you are writing a report on the subject of the topic. If you "
    "would use any of the information contained in the web page in such a report, "
    "mark it 1. If the web page is primarily about the topic, or contains vital "
    "information about the topic, mark it 2. Otherwise, mark it 0."
)

ORIGINAL_STEPS = (
    "Split this problem into steps:\n"
    "\n"
    "Consider the underlying intent of the search.\n"
    "\n"
    "${aspect_steps}"
    "${aspect_lead}decide on a final score (O).\n"
    "\n"
    "${multiple_judges}"
    "Produce a JSON array of scores without providing any reasoning. "
    "Example: ${output_example}"
)

ASPECT_STEPS = (
    "Measure how well the content matches a likely intent of the query (M).\n"
    "\n"
    "Measure how trustworthy the web page is (T).\n"
    "\n"
)
ASPECT_LEAD = "Consider the aspects above and the relative importance of each, and "
MULTIPLE_JUDGES = (
    "We asked five search engine raters to evaluate the relevance of the web page "
    "for the query. Each rater used their own independent judgement.\n"
    "\n"
)

# keyed by (aspects, multiple)
OUTPUT_EXAMPLES = {
    (False, False): '[{"O": 1}]',
    (False, True): '[{"O": 1}, {"O": 2 ...',
    (True, False): '[{"M": 2, "T": 1, "O": 1}]',
    (True, True): '[{"M": 2, "T": 1, "O": 1}, {"M": 1 ...',
}

STEPS_PLACEHOLDERS = ("aspect_steps", "aspect_lead", "multiple_judges", "output_example")


class PromptError(ValueError):
    """A prompt cannot be rendered or a paraphrase bank is invalid."""


@dataclass(frozen=True)
class PromptSpec:
    """The five optional-feature flags plus paraphrase variant and judge count."""

    role: bool = False
    description: bool = False
    narrative: bool = False
    aspects: bool = False
    multiple: bool = False
    paraphrase_id: str = "original"
    judge_count: int | None = None

    def __post_init__(self) -> None:
        if self.judge_count is None:
            object.__setattr__(self, "judge_count", 5 if self.multiple else 1)
        if self.judge_count < 1:
            raise ValueError("judge_count must be >= 1")
        if self.judge_count > 1 and not self.multiple:
            raise ValueError("judge_count > 1 requires the multiple-judges flag")

    @property
    def flags(self) -> tuple[bool, bool, bool, bool, bool]:
        return (self.role, self.description, self.narrative, self.aspects, self.multiple)

    @property
    def label(self) -> str:
        """Five-character form, e.g. ``-DNA-``."""
        return "".join(
            letter if on else "-" for letter, on in zip(FEATURE_LETTERS, self.flags)
        )

    @classmethod
    def from_string(cls, s: str, paraphrase_id: str = "original",
                    judge_count: int | None = None) -> "PromptSpec":
        if len(s) != 5:
            raise ValueError(f"spec string must have 5 characters, got {s!r}")
        flags = {}
        for name, letter, ch in zip(FEATURE_NAMES, FEATURE_LETTERS, s.upper()):
            if ch == letter:
                flags[name] = True
            elif ch == "-":
                flags[name] = False
            else:
                raise ValueError(f"bad character {ch!r} in spec string {s!r}")
        return cls(paraphrase_id=paraphrase_id, judge_count=judge_count, **flags)

    def __str__(self) -> str:
        return self.label


def enumerate_specs(paraphrase_id: str = "original") -> list[PromptSpec]:
    """All 32 flag combinations, grouped by feature count (the table order)."""
    specs = []
    for k in range(len(FEATURE_LETTERS) + 1):
        for combo in itertools.combinations(range(len(FEATURE_LETTERS)), k):
            flags = {name: i in combo for i, name in enumerate(FEATURE_NAMES)}
            specs.append(PromptSpec(paraphrase_id=paraphrase_id, **flags))
    return specs


@dataclass(frozen=True)
class ParaphraseVariant:
    """Replacement wordings for the two instruction spans."""

    id: str
    instruction_text: str
    steps_text: str


ORIGINAL_VARIANT = ParaphraseVariant("original", ORIGINAL_INSTRUCTIONS, ORIGINAL_STEPS)


def _validate_steps_template(steps_text: str, variant_id: str) -> None:
    sentinels = {name: f"@@{name}@@" for name in STEPS_PLACEHOLDERS}
    try:
        rendered = Template(steps_text).substitute(sentinels)
    except KeyError as e:
        raise PromptError(f"variant {variant_id!r}: unknown placeholder {e.args[0]!r}") from None
    except ValueError as e:
        raise PromptError(f"variant {variant_id!r}: bad placeholder syntax ({e})") from None
    for name, sentinel in sentinels.items():
        if sentinel not in rendered:
            raise PromptError(f"variant {variant_id!r}: steps_text drops placeholder ${name}")


def load_paraphrase_bank(path: str | Path) -> list[ParaphraseVariant]:
    """Load paraphrase variants from a JSON file.

    The file holds a list of ``{"id", "instruction_text", "steps_text"}``
    objects (or ``{"variants": [...]}``). The built-in ``original`` variant
    is always first in the returned list; an empty file yields only it.
    """
    raw = Path(path).read_text("utf-8").strip()
    data = json.loads(raw) if raw else []
    if isinstance(data, dict):
        data = data.get("variants", [])

    variants = [ORIGINAL_VARIANT]
    seen = {"original"}
    for i, entry in enumerate(data):
        vid = entry.get("id")
        if not vid:
            raise PromptError(f"variant #{i} has no id")
        if vid in seen:
            raise PromptError(f"duplicate paraphrase id {vid!r}")
        instruction = entry.get("instruction_text")
        steps = entry.get("steps_text")
        if not instruction:
            raise PromptError(f"variant {vid!r} lacks instruction_text")
        if not steps:
            raise PromptError(f"variant {vid!r} lacks steps_text")
        _validate_steps_template(steps, vid)
        seen.add(vid)
        variants.append(ParaphraseVariant(vid, instruction, steps))
    return variants


def bank_index(variants: list[ParaphraseVariant]) -> dict[str, ParaphraseVariant]:
    return {v.id: v for v in variants}


@dataclass(frozen=True)
class PromptProvenance:
    spec: PromptSpec
    topic_id: int
    doc_id: str
    paraphrase_id: str
    truncated: bool


@dataclass(frozen=True)
class PromptText:
    """A rendered prompt plus where it came from."""

    text: str
    provenance: PromptProvenance

    def __post_init__(self) -> None:
        if not self.text.endswith("[{"):
            raise ValueError("prompt must end with the priming sequence '[{'")


def render_prompt(spec: PromptSpec, topic: Topic, doc_text: str, *,
                  doc_id: str = "", truncated: bool = False,
                  variant: ParaphraseVariant | None = None,
                  bank: dict[str, ParaphraseVariant] | None = None) -> PromptText:
    """Render the labelling prompt for one (topic, document) pair.

    Rendering is deterministic: the same (spec, topic, doc_text, variant)
    always yields byte-identical text. Missing description/narrative when
    the corresponding flag is set is an error; empty document text renders
    with an empty content block and a warning.
    """
    if variant is None:
        if spec.paraphrase_id == "original":
            variant = ORIGINAL_VARIANT
        elif bank and spec.paraphrase_id in bank:
            variant = bank[spec.paraphrase_id]
        else:
            raise PromptError(f"unknown paraphrase variant {spec.paraphrase_id!r}")

    if spec.description and not topic.description:
        raise PromptError(f"spec {spec.label} needs a description; topic {topic.id} has none")
    if spec.narrative and not topic.narrative:
        raise PromptError(f"spec {spec.label} needs a narrative; topic {topic.id} has none")
    if not doc_text:
        warnings.warn(f"empty document text for topic {topic.id} doc {doc_id!r}")

    head = (ROLE_SENTENCE + " " if spec.role else "") + variant.instruction_text
    steps = Template(variant.steps_text).substitute(
        aspect_steps=ASPECT_STEPS if spec.aspects else "",
        aspect_lead=ASPECT_LEAD if spec.aspects else "",
        multiple_judges=MULTIPLE_JUDGES if spec.multiple else "",
        output_example=OUTPUT_EXAMPLES[(spec.aspects, spec.multiple)],
    )

    lines = [
        head,
        "",
        "Query",
        f"A person has typed [{topic.title}] into a search engine.",
    ]
    if spec.description or spec.narrative:
        looking = "They were looking for:"
        if spec.description:
            looking += f" {topic.description}"
        if spec.narrative:
            looking += f" {topic.narrative}"
        lines.append(looking)
    lines += [
        "",
        "Result",
        "Consider the following web page.",
        "",
        "---BEGIN WEB PAGE CONTENT---",
        doc_text,
        "---END WEB PAGE CONTENT---",
        "",
        "Instructions",
        steps,
        "",
        "Results",
        "[{",
    ]
    text = "\n".join(lines)
    if topic.title not in text:  # invariant: the query is always present
        raise PromptError(f"rendered prompt lost the query for topic {topic.id}")
    return PromptText(
        text=text,
        provenance=PromptProvenance(
            spec=spec,
            topic_id=topic.id,
            doc_id=doc_id,
            paraphrase_id=variant.id,
            truncated=truncated,
        ),
    )
