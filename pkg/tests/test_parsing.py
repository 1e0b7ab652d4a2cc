import pytest
from hypothesis import given
from hypothesis import strategies as st

from decqa.parsing import (
    OutputParseError,
    format_numbered_list,
    format_rewrite,
    parse_numbered_list,
    parse_rewrite,
    parse_synthesis,
    parse_verdict,
)

line_text = st.text(
    alphabet=st.characters(whitelist_categories=("L", "N"), whitelist_characters=" ?,"), min_size=1, max_size=30
).map(str.strip).filter(lambda s: s and not s[0].isdigit())


def test_numbered_list_dot_and_paren():
    assert parse_numbered_list("1. X?\n2. Y?") == ["X?", "Y?"]
    assert parse_numbered_list("1) X?\nnote\n2) Y?") == ["X?", "Y?"]


def test_numbered_list_markdown():
    assert parse_numbered_list("Here:\n**1.** Who?\n - 2. When?") == ["Who?", "When?"]


def test_numbered_list_none_found():
    with pytest.raises(OutputParseError) as exc:
        parse_numbered_list("no list here")
    assert exc.value.raw == "no list here"


@given(st.lists(line_text, min_size=1, max_size=6))
def test_numbered_list_round_trip(items):
    assert parse_numbered_list(format_numbered_list(items)) == items


def test_parse_rewrite_basic():
    assert parse_rewrite("Inference_process: None\nModified_question: X?") == ("None", "X?")


def test_parse_rewrite_lenient():
    assert parse_rewrite("modified_question: X?") == ("", "X?")
    assert parse_rewrite("**Inference_process**: dep\n**Modified_question**: Y?") == ("dep", "Y?")


def test_parse_rewrite_last_field_wins():
    raw = "Modified_question: first?\nthinking more\nModified_question: second?"
    assert parse_rewrite(raw)[1] == "second?"


def test_parse_rewrite_missing():
    with pytest.raises(OutputParseError):
        parse_rewrite("Answer: X")


@given(line_text, line_text)
def test_rewrite_round_trip(note, question):
    assert parse_rewrite(format_rewrite(note, question)) == (note, question)


def test_parse_synthesis():
    assert parse_synthesis("Inference_process: ...\nAnswer: Animorphs") == ("...", "Animorphs")
    with pytest.raises(OutputParseError):
        parse_synthesis("Inference_process: nothing")


@pytest.mark.parametrize(
    "raw,expected",
    [("-Correctness: yes", True), ("Correctness: No.", False), ("**Correctness**: YES", True)],
)
def test_parse_verdict(raw, expected):
    assert parse_verdict(raw) is expected


@pytest.mark.parametrize("raw", ["Correctness: maybe", "yes"])
def test_parse_verdict_rejects(raw):
    with pytest.raises(OutputParseError):
        parse_verdict(raw)
