import pytest
from conftest import SequenceBackend, script_gateway
from hypothesis import given
from hypothesis import strategies as st

from decqa.evaluation import (
    answerability_from_labels,
    atc,
    atc_from_totals,
    cover_em,
    decomposition_fidelity,
    evaluate,
    gold_recall,
    judge_consistency,
    semantic_acc,
    token_f1,
)
from decqa.gateway import LLMGateway
from decqa.records import ComplexQuestion, DatasetRecord, RunRecord

words = st.lists(st.sampled_from("rome lazio paris region city the of".split()), min_size=1, max_size=8)


def test_cover_em_examples():
    assert cover_em("the answer is Lazio", ["Lazio"]) == 1
    assert cover_em("the answer is Lazio", ["the Lazio region"]) == 0
    assert cover_em("Rome", ["Rome"]) == 1
    assert cover_em("Paris", ["Rome", "paris!"]) == 1


def test_cover_em_needs_gold():
    with pytest.raises(ValueError):
        cover_em("x", [])


def test_token_f1_examples():
    assert token_f1("the lazio region", ["lazio"]) == pytest.approx(0.5, abs=1e-9)
    assert token_f1("rome", ["rome"]) == 1.0
    assert token_f1("rome", ["paris"]) == 0.0
    assert token_f1("", [""]) == 1.0
    assert token_f1("rome", ["", "rome city"]) == pytest.approx(2 / 3)


@given(words, words)
def test_token_f1_permutation_invariant(a, b):
    assert token_f1(" ".join(a), [" ".join(b)]) == pytest.approx(token_f1(" ".join(reversed(a)), [" ".join(b[::-1])]))


@given(words)
def test_cover_em_implies_positive_f1(a):
    text = " ".join(a)
    assert cover_em(text, [text]) == 1
    assert token_f1(text, [text]) == 1.0


JUDGE_EXAMPLES = [
    ("In which Italian region is Rome located?", "the Lazio region", "the answer is Lazio", "-Correctness: yes", 1),
    ("Which band released Apple-Kneel?", "Apple-Kneel", "a flaming volcano", "-Correctness: no", 0),
]


@pytest.mark.parametrize("question,gold,pred,verdict,expected", JUDGE_EXAMPLES)
def test_semantic_acc_examples(question, gold, pred, verdict, expected):
    gw = script_gateway([("judge", {"question": question, "answer": gold, "prediction": pred}, verdict)])
    v = semantic_acc(question, gold, pred, gw)
    assert v.correct == expected and not v.flagged


def test_semantic_acc_unparsable_twice():
    backend = SequenceBackend(["Correctness: maybe", "Correctness: maybe"])
    v = semantic_acc("q", "g", "p", LLMGateway(backend))
    assert v.correct == 0 and v.flagged and len(backend.requests) == 2


def test_answerability_perfect_case():
    r = answerability_from_labels([True] * 4, [True] * 4, [1] * 4)
    assert (r.accuracy, r.precision, r.recall, r.f1, r.c_acc, r.o_acc) == (1, 1, 1, 1, 1, 1)


def test_answerability_all_abstained():
    r = answerability_from_labels([False] * 3, [False] * 3, [0] * 3)
    assert r.tn == 3 and r.o_acc == 1.0
    assert r.recall == 0.0 and "recall_undefined" in r.flags
    assert r.tp + r.fp + r.tn + r.fn == 3


def test_answerability_needs_flags():
    from decqa.evaluation import answerability_metrics

    pair = (RunRecord(question=ComplexQuestion("a", "q")), DatasetRecord("a", "q", ("x",)))
    with pytest.raises(ValueError, match="answerable"):
        answerability_metrics([pair], [0])


def _records_with_tokens(totals):
    return [RunRecord(question=ComplexQuestion(f"q{i}", "q"), total_tokens=(t, 0)) for i, t in enumerate(totals)]


def test_atc():
    assert atc(_records_with_tokens([600, 400]), [1, 0]) == 1000.0
    assert atc(_records_with_tokens([600, 400]), [0, 0]) is None


# Rows whose reported ATC is reproduced by an integer number of correct answers.
@pytest.mark.parametrize(
    "tokens,correct,reported",
    [
        (4_882_838, 198, 24_660.80),
        (2_760_014, 218, 12_660.61),
        (2_988_310, 219, 13_645.25),
        (4_530_000, 168, 26_964.29),
        (5_117_786, 58, 88_237.69),
    ],
)
def test_atc_consistent_rows(tokens, correct, reported):
    assert atc_from_totals(tokens, correct) == pytest.approx(reported, abs=0.01)


def test_fidelity_examples():
    q = "When was the founder of craigslist born?"
    assert decomposition_fidelity(q, [q]).value == 1.0
    assert decomposition_fidelity(q, ["Who founded craigslist?"]).value == 1.0
    assert decomposition_fidelity(q, ["Who was born in Paris?"]).value == 0.5
    vacuous = decomposition_fidelity(q, ["Who was it?"])
    assert vacuous.value == 1.0 and vacuous.vacuous


def test_judge_consistency():
    assert judge_consistency([1, 0, 1], [1, 0, 1]) == 1.0
    assert judge_consistency([1, 0], [0, 1]) == 0.0
    assert judge_consistency([1] * 10, [1] * 9 + [0]) == 0.9
    with pytest.raises(ValueError):
        judge_consistency([1], [1, 0])


def test_evaluate_perfect_world(world2, runs2):
    report = evaluate(runs2, world2.dataset)
    assert report.cover_em == report.token_f1 == 1.0 and report.sqa_mean == 2.0
    assert report.acc_semantic is None and report.correctness_source == "cover_em"
    assert report.atc == report.total_tokens / 20
    assert report.gold_recall.fully_recalled_ratio == 1.0
    assert report.keyword_match_rate == 1.0
    assert len(report.per_question) == 20
    assert sum(r["cover_em"] for r in report.per_question) / 20 == report.cover_em
    assert "ACC" not in report.format_table()


def test_evaluate_with_judge_and_answerability(world_mixed):
    from conftest import make_pipeline

    runs = make_pipeline(world_mixed).run_batch(world_mixed.dataset)
    judge = LLMGateway(make_pipeline(world_mixed).gateway.backend)
    report = evaluate(runs, world_mixed.dataset, judge=judge, with_answerability=True)
    assert report.acc_semantic == 0.7 and report.correctness_source == "acc_semantic"
    a = report.answerability
    assert (a.tp, a.fp, a.tn, a.fn) == (7, 0, 3, 0)
    assert a.o_acc == 1.0 and a.c_acc == 1.0
    assert "ACC (judge)" in report.format_table()


def test_gold_recall_counts():
    rec = RunRecord(question=ComplexQuestion("a", "q"))
    assert gold_recall([rec], [DatasetRecord("a", "q", ("x",))]) is None


def test_evaluate_rejects_unknown_ids(runs2):
    with pytest.raises(ValueError, match="unknown question ids"):
        evaluate(runs2, [])
