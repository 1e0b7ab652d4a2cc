import pytest
from conftest import SequenceBackend, script_gateway

from decqa.gateway import LLMGateway
from decqa.records import EMPTY_HISTORY, ComplexQuestion, QaHistory, SubQuestion
from decqa.rewriter import RewriteError, Rewriter

Q = ComplexQuestion("q1", "When was the founder of craigslist born?")


def history_1():
    h = QaHistory()
    h.append("Who was the founder of craigslist?", "Craig Newmark")
    return h


def test_history_rendering():
    assert history_1().render() == "\nsub_question_1:Who was the founder of craigslist?, sub_answer:Craig Newmark"
    assert QaHistory().render() == EMPTY_HISTORY


def test_rewrite_resolves_referent():
    sub = SubQuestion(2, "When was him born?")
    bindings = {"question": Q.text, "history": history_1().render(), "sub_question": sub.text}
    gw = script_gateway(
        [("rewrite", bindings, "Inference_process: him is Craig Newmark\nModified_question: When was Craig Newmark born?")]
    )
    out = Rewriter(gw).rewrite(Q, sub, history_1())
    assert out.text == "When was Craig Newmark born?"
    assert out.inference_note == "him is Craig Newmark"
    assert out.sub_index == 2


def test_first_step_verbatim_without_call():
    backend = SequenceBackend([])
    result = Rewriter(LLMGateway(backend)).rewrite_traced(Q, SubQuestion(1, "Who founded craigslist?"), QaHistory())
    assert result.query.text == "Who founded craigslist?"
    assert result.query.inference_note == "None"
    assert EMPTY_HISTORY in result.prompt
    assert backend.requests == []


def test_first_step_can_be_rewritten():
    backend = SequenceBackend(["Inference_process: None\nModified_question: Who founded craigslist?"])
    out = Rewriter(LLMGateway(backend), rewrite_first_step=True).rewrite(Q, SubQuestion(1, "Who founded it?"), QaHistory())
    assert out.text == "Who founded craigslist?"
    assert EMPTY_HISTORY in backend.requests[0].user_text


def test_history_length_checked():
    with pytest.raises(ValueError):
        Rewriter(LLMGateway(SequenceBackend([]))).rewrite(Q, SubQuestion(3, "x?"), history_1())


def test_failure_after_retry():
    backend = SequenceBackend(["Answer: X", "still nothing"])
    with pytest.raises(RewriteError):
        Rewriter(LLMGateway(backend)).rewrite(Q, SubQuestion(2, "When was him born?"), history_1())
    assert len(backend.requests) == 2


def test_fallback_keeps_sub_question():
    backend = SequenceBackend(["nothing", "nothing"])
    result = Rewriter(LLMGateway(backend)).rewrite_or_fallback(Q, SubQuestion(2, "When was him born?"), history_1())
    assert result.fallback and result.query.text == "When was him born?"
    assert "sub_question_1:" in result.prompt
