from hypothesis import given
from hypothesis import strategies as st

from decqa.gateway import LLMGateway, ScriptedBackend, ScriptEntry
from decqa.keywords import (
    KeywordExtractor,
    build_ek_dataset,
    ek_instruction,
    make_keyword_set,
    parse_keywords,
    substring_match_rate,
    validity_indicator,
)
from decqa.prompts import PromptCatalog
from decqa.records import (
    ComplexQuestion,
    DatasetRecord,
    KeywordSet,
    RewrittenQuery,
    RunRecord,
    StepTrace,
)
from decqa.retrieval import Document

import oracles


def extractor(responses: dict[str, str]) -> KeywordExtractor:
    tpl = PromptCatalog()["keywords"]
    entries = [ScriptEntry("keywords", tpl.digest({"query": q}), r) for q, r in responses.items()]
    return KeywordExtractor(LLMGateway(ScriptedBackend(entries)))


def test_parse_keywords_dedupes_and_normalizes():
    assert parse_keywords("A;  B ; a") == ["A", "B"]
    assert parse_keywords("Keywords: Craig   Newmark;\n") == ["Craig Newmark"]
    assert parse_keywords("") == []


def test_extract_craigslist():
    ks = extractor({"When was Craig Newmark born?": "Craig Newmark"}).extract(
        RewrittenQuery(2, "When was Craig Newmark born?", "")
    )
    assert ks.keywords == ("Craig Newmark",)
    assert ks.hallucinated == () and not ks.failed


def test_extract_flags_hallucinated():
    ks = extractor({"q": "q; zebra"}).extract("q")
    assert ks.keywords == ("q", "zebra") and ks.hallucinated == ("zebra",)


def test_extract_empty_output_fails_soft():
    ks = extractor({"q": "  "}).extract("q")
    assert ks.keywords == () and ks.failed


def test_transform_is_elementwise():
    ex = extractor({"a b": "a", "c d": "d"})
    assert [k.keywords for k in ex.fit_transform(["a b", "c d"])] == [("a",), ("d",)]


def test_substring_match_rate_examples():
    assert substring_match_rate([("When was Craig Newmark born?", ["Craig Newmark"])]).value == 1.0
    assert substring_match_rate([("q one", ["q"]), ("q two", ["zebra"])]).value == 0.5
    empty = substring_match_rate([])
    assert empty.value == 1.0 and empty.vacuous


def test_validity_indicator_examples():
    gold = [Document("g", "", "alpha beta")]
    assert validity_indicator(["alpha"], gold) == 1
    assert validity_indicator(["alpha", "gamma"], gold) == 0
    assert validity_indicator([], gold) == 0
    assert validity_indicator(KeywordSet(("ALPHA  beta",), "q"), gold) == 1


words = st.sampled_from("alpha beta gamma delta".split())


@given(
    st.lists(st.lists(words, min_size=1, max_size=8), min_size=1, max_size=3),
    st.lists(st.lists(words, min_size=1, max_size=2).map(" ".join), max_size=4),
    st.lists(words, min_size=1, max_size=2).map(" ".join),
)
def test_validity_matches_oracle_and_is_monotone(texts, keywords, extra):
    gold = [Document(f"g{i}", "", " ".join(t)) for i, t in enumerate(texts)]
    value = validity_indicator(keywords, gold)
    assert value == oracles.validity(keywords, [" ".join(t) for t in texts])
    if keywords:
        assert validity_indicator(keywords + [extra], gold) <= value


def _run(qid: str, keyword_sets: list[tuple[str, ...]]) -> RunRecord:
    steps = [
        StepTrace(
            index=i,
            sub_question=f"sub {i}",
            rewritten=RewrittenQuery(i, f"query {qid} {i}", ""),
            keywords=KeywordSet(kws, f"query {qid} {i}"),
            candidate_doc_ids=[],
            keyword_matched_ids=[],
            backup_ids=[],
            sub_answer="x",
            step_tokens=(0, 0),
            history_size=i - 1,
        )
        for i, kws in enumerate(keyword_sets, 1)
    ]
    return RunRecord(question=ComplexQuestion(qid, "q?"), steps=steps)


DOCS = {
    "g1": Document("g1", "Alpha", "alpha beta"),
    "g2": Document("g2", "Gamma", "gamma delta"),
    "n1": Document("n1", "Zeta", "zeta eta"),
}


def test_build_ek_dataset_filter_semantics():
    run = _run("q1", [("alpha",), ("zeta",), ("gamma delta",)])
    dataset = [DatasetRecord("q1", "q?", ("x",), gold_doc_ids=("g1", "g2"))]
    examples, stats = build_ek_dataset([run], dataset, DOCS)
    assert [e.output_keywords for e in examples] == [("alpha",), ("gamma delta",)]
    assert (stats.pairs_seen, stats.emitted, stats.skipped_runs) == (3, 2, 0)
    row = examples[0].to_dict()
    assert set(row) == {"instruction", "input", "output"}
    assert row["instruction"] == ek_instruction()


def test_build_ek_dataset_non_gold_match_only():
    run = _run("q1", [("zeta",)])
    dataset = [DatasetRecord("q1", "q?", ("x",), gold_doc_ids=("g1",))]
    assert build_ek_dataset([run], dataset, DOCS)[0] == []


def test_build_ek_dataset_without_gold_skips():
    run = _run("q1", [("alpha",)])
    examples, stats = build_ek_dataset([run], [DatasetRecord("q1", "q?", ("x",))], DOCS)
    assert examples == [] and stats.skipped_runs == 1


def test_build_ek_dataset_empty():
    examples, stats = build_ek_dataset([], [], DOCS)
    assert examples == [] and stats.pairs_seen == 0


def test_make_keyword_set_marks_hallucinations():
    ks = make_keyword_set("When was Craig Newmark born?", ["craig newmark", "Paris"])
    assert ks.hallucinated == ("Paris",)
