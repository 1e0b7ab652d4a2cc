"""Lenient parsers for the line-oriented formats the prompts ask models to emit."""

from __future__ import annotations

import re


class OutputParseError(ValueError):
    """Model output did not contain the expected structure. ``raw`` keeps the text."""

    def __init__(self, message: str, raw: str):
        self.raw = raw
        super().__init__(message)


_NUMBERED_RE = re.compile(r"^\s*(?:[-*]\s*)?\**\s*(\d+)\s*[.)]\s*\**\s*(.*?)\s*$")
_LINE_PREFIX = r"^[ \t\-*#>]*"


def _strip_decoration(value: str) -> str:
    value = value.strip().strip("*").strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'`":
        value = value[1:-1].strip()
    return value


def parse_numbered_list(raw: str) -> list[str]:
    """Items of lines shaped ``<k>. text`` or ``<k>) text``, in order of appearance."""
    items = []
    for line in raw.splitlines():
        m = _NUMBERED_RE.match(line)
        if not m:
            continue
        item = _strip_decoration(m.group(2))
        if item:
            items.append(item)
    if not items:
        raise OutputParseError("no numbered items found", raw)
    return items


def format_numbered_list(items: list[str]) -> str:
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, 1))


def _label_pattern(label: str) -> re.Pattern:
    words = [re.escape(w) for w in re.split(r"[_ ]", label)]
    body = r"[_ ]".join(words)
    return re.compile(_LINE_PREFIX + r"\**\s*" + body + r"\s*\**\s*:\s*\**(.*)$", re.IGNORECASE | re.MULTILINE)


def find_field(raw: str, label: str) -> str | None:
    """Value of the last ``label: value`` line, case-insensitive, markdown-tolerant."""
    matches = _label_pattern(label).findall(raw)
    if not matches:
        return None
    return _strip_decoration(matches[-1])


def parse_rewrite(raw: str) -> tuple[str, str]:
    """Return ``(inference_note, modified_question)`` from a rewrite response."""
    question = find_field(raw, "modified_question")
    if not question:
        raise OutputParseError("missing Modified_question field", raw)
    note = find_field(raw, "inference_process")
    return (note or "", question)


def format_rewrite(inference_note: str, modified_question: str) -> str:
    return f"Inference_process: {inference_note}\nModified_question: {modified_question}"


def parse_synthesis(raw: str) -> tuple[str, str]:
    """Return ``(inference, answer)`` from a synthesis response."""
    answer = find_field(raw, "answer")
    if answer is None or not answer:
        raise OutputParseError("missing Answer field", raw)
    return (find_field(raw, "inference_process") or "", answer)


_VERDICT_RE = re.compile(r"^\W*(yes|no)\W*$", re.IGNORECASE)


def parse_verdict(raw: str) -> bool:
    """Judge verdict from a ``Correctness: yes|no`` line."""
    value = find_field(raw, "correctness")
    if value is None:
        raise OutputParseError("missing Correctness field", raw)
    m = _VERDICT_RE.match(value)
    if not m:
        raise OutputParseError(f"unrecognised verdict {value!r}", raw)
    return m.group(1).lower() == "yes"
