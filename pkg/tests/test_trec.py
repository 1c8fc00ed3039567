"""Parsers, sampling, and the document store."""

import random

import pytest

from llmjudge.trec import (
    DocumentStore,
    LabelSet,
    ParseError,
    coverage_report,
    format_qrels,
    format_run,
    get_document,
    parse_qrels,
    parse_run,
    parse_topics,
    stratified_sample,
)

HUBBLE_BLOCK = """<top>

<num> Number: 303
<title> Hubble Telescope Achievements

<desc> Description:
Identify positive accomplishments of the Hubble telescope since it
was launched in 1991.

<narr> Narrative:
Documents are relevant that show the Hubble telescope has produced
new data, better quality data than previously available.

</top>
"""


def test_parse_topics_hubble_block():
    topics = parse_topics(HUBBLE_BLOCK)
    assert len(topics) == 1
    t = topics[0]
    assert t.id == 303
    assert t.title == "Hubble Telescope Achievements"
    assert t.description.startswith("Identify positive accomplishments")
    assert "Number:" not in t.title
    assert "Description:" not in t.description
    assert "Narrative:" not in t.narrative
    # whitespace normalised: internal newlines collapse to single spaces
    assert "\n" not in t.description


def test_parse_topics_empty_input():
    assert parse_topics("") == []


def test_parse_topics_missing_narrative():
    text = "<top>\n<num> Number: 5\n<title> some query\n<desc> Description:\nwords\n</top>"
    (topic,) = parse_topics(text)
    assert topic.narrative is None
    assert topic.description == "words"


def test_parse_topics_malformed_block_names_offset_and_index():
    text = HUBBLE_BLOCK + "<top>\n<title> no number here\n</top>"
    with pytest.raises(ParseError) as err:
        parse_topics(text)
    assert "block 1" in str(err.value)
    assert "byte offset" in str(err.value)


def test_parse_topics_unterminated_block():
    with pytest.raises(ParseError, match="unterminated"):
        parse_topics("<top>\n<num> Number: 9\n<title> dangling")


def test_parse_topics_duplicate_id():
    with pytest.raises(ParseError, match="duplicate topic"):
        parse_topics(HUBBLE_BLOCK + HUBBLE_BLOCK)


def test_parse_qrels_single_line():
    labels = parse_qrels("303 0 FBIS3-1 2\n")
    assert labels.entries == {(303, "FBIS3-1"): 2}
    assert labels.source == "gold"


def test_parse_qrels_non_integer_grade_names_line():
    with pytest.raises(ParseError, match="line 1"):
        parse_qrels("303 0 FBIS3-1 x\n")


def test_parse_qrels_rejects_out_of_range_grades():
    with pytest.raises(ParseError, match="grade 3"):
        parse_qrels("303 0 A 3\n")
    with pytest.raises(ParseError, match="grade -1"):
        parse_qrels("303 0 A -1\n")


def test_parse_qrels_duplicate_key():
    with pytest.raises(ParseError, match="duplicate"):
        parse_qrels("303 0 A 1\n303 0 A 2\n")


def test_parse_qrels_grade_counts():
    text = "1 0 A 2\n1 0 B 1\n1 0 C 0\n2 0 A 1\n2 0 B 0\n"
    labels = parse_qrels(text)
    counts = labels.grade_counts()
    assert counts[2] == 1 and counts[1] == 2 and counts[0] == 2


def test_qrels_round_trip_identity():
    text = "5 0 B 1\n1 0 A 2\n1 0 B 0\n"
    once = parse_qrels(text)
    again = parse_qrels(format_qrels(once))
    assert again.entries == once.entries


def test_parse_run_two_lines():
    run = parse_run("303 Q0 A 1 9.5 sys\n303 Q0 B 2 8.0 sys\n")
    assert run.tag == "sys"
    assert run.docs(303) == ["A", "B"]
    assert len(run) == 2


def test_parse_run_preserves_line_count():
    lines = [f"{t} Q0 D{t}-{i} {i} {50 - i}.0 tag" for t in (1, 2) for i in range(1, 21)]
    run = parse_run("\n".join(lines))
    assert len(run) == len(lines)


def test_parse_run_out_of_order_ranks_sorted_with_warning():
    with pytest.warns(UserWarning, match="re-sorted"):
        run = parse_run("303 Q0 B 2 8.0 sys\n303 Q0 A 1 9.5 sys\n")
    assert run.docs(303) == ["A", "B"]


def test_parse_run_duplicate_doc_is_error():
    with pytest.raises(ParseError, match="duplicate document"):
        parse_run("303 Q0 A 1 9.0 sys\n303 Q0 A 2 8.0 sys\n")


def test_parse_run_mixed_tags_is_error():
    with pytest.raises(ParseError, match="mixes tags"):
        parse_run("303 Q0 A 1 9.0 sys1\n303 Q0 B 2 8.0 sys2\n")


def test_parse_run_group_from_map():
    run = parse_run("1 Q0 A 1 2.0 sys", group_map={"sys": "org-7"})
    assert run.group == "org-7"
    assert parse_run("1 Q0 A 1 2.0 sys").group == "sys"


def test_run_round_trip_identity():
    text = "2 Q0 C 1 0.125 sys\n1 Q0 A 1 9.5 sys\n1 Q0 B 2 8.25 sys\n"
    once = parse_run(text)
    again = parse_run(format_run(once))
    assert again.tag == once.tag
    assert again.rankings == once.rankings


def _random_gold(n_per_grade=40, grades=(0, 1, 2), seed=3):
    rng = random.Random(seed)
    entries = {}
    for g in grades:
        for i in range(n_per_grade):
            entries[(rng.randint(1, 30), f"G{g}-{i}")] = g
    return LabelSet(entries=entries)


def test_stratified_sample_exact_counts():
    gold = _random_gold()
    sample = stratified_sample(gold, 10, seed=1)
    counts = sample.grade_counts()
    assert counts[0] == counts[1] == counts[2] == 10
    assert set(sample.entries) <= set(gold.entries)
    for key, grade in sample.entries.items():
        assert gold.entries[key] == grade


def test_stratified_sample_zero():
    assert len(stratified_sample(_random_gold(), 0, seed=1)) == 0


def test_stratified_sample_deterministic_and_seed_sensitive():
    gold = _random_gold()
    a = stratified_sample(gold, 10, seed=5)
    b = stratified_sample(gold, 10, seed=5)
    c = stratified_sample(gold, 10, seed=6)
    assert a.entries == b.entries
    assert a.entries != c.entries


def test_stratified_sample_small_stratum_names_grade():
    gold = LabelSet(entries={(1, "A"): 0, (1, "B"): 1, (1, "C"): 0})
    with pytest.raises(ValueError, match="grade 1"):
        stratified_sample(gold, 2, seed=0)


def test_document_shorter_than_budget_unchanged():
    store = DocumentStore.from_mapping({"d": "short text"}, char_budget=100)
    doc = get_document(store, "d")
    assert doc.text == "short text"
    assert not doc.truncated


def test_document_truncated_at_whitespace():
    words = " ".join(f"w{i}" for i in range(12000))
    assert len(words) > 50000
    store = DocumentStore.from_mapping({"d": words}, char_budget=16000)
    doc = store.get("d")
    assert doc.truncated
    assert len(doc.text) <= 16000
    # the cut did not split a word: the original continues with whitespace
    assert words[len(doc.text)].isspace()


def test_document_empty_flagged():
    store = DocumentStore.from_mapping({"d": ""})
    doc = store.get("d")
    assert doc.text == ""
    assert doc.empty and not doc.truncated


def test_document_missing_is_error():
    store = DocumentStore.from_mapping({})
    with pytest.raises(KeyError):
        store.get("nope")


def test_document_store_from_directory(tmp_path):
    (tmp_path / "X-1.txt").write_text("hello world", "utf-8")
    store = DocumentStore.from_directory(tmp_path)
    assert store.get("X-1").text == "hello world"


def test_document_store_from_archive(tmp_path):
    docs = {"a": "first doc text", "b": "second doc, with more text"}
    archive = tmp_path / "docs.bin"
    index = {}
    blob = b""
    for doc_id, text in docs.items():
        raw = text.encode("utf-8")
        index[doc_id] = [len(blob), len(raw)]
        blob += raw
    archive.write_bytes(blob)
    index_path = tmp_path / "docs.idx.json"
    index_path.write_text(__import__("json").dumps(index), "utf-8")
    store = DocumentStore.from_archive(archive, index_path)
    assert store.get("a").text == docs["a"]
    assert store.get("b").text == docs["b"]
    with pytest.raises(KeyError):
        store.get("c")


def test_coverage_report_flags_unknown_and_zero_relevant():
    topics = parse_topics(HUBBLE_BLOCK)  # topic 303 only
    qrels = parse_qrels("303 0 A 0\n304 0 B 1\n")
    run = parse_run("303 Q0 A 1 1.0 s\n999 Q0 B 1 1.0 s\n")
    report = coverage_report(topics, qrels, [run])
    assert report.unknown_qrel_topics == {304}
    assert report.unknown_run_topics == {"s": {999}}
    # 303 loads but has no relevant documents: reported, not an error
    assert report.zero_relevant_topics == {303}
    assert not report.clean
