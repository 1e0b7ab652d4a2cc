"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers
from typing import Any, Iterable

from .records import ComplexQuestion, DatasetRecord


def check_positive_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_unit_interval(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be a real number in [0, 1], got {value!r}")
    return float(value)


def check_question(q: Any, default_id: str = "q0") -> ComplexQuestion:
    """Coerce a string, mapping, dataset record or question into a :class:`ComplexQuestion`."""
    if isinstance(q, ComplexQuestion):
        return q
    if isinstance(q, DatasetRecord):
        return q.to_question()
    if isinstance(q, str):
        return ComplexQuestion(default_id, q)
    if isinstance(q, dict):
        if "question" in q:
            return ComplexQuestion(str(q.get("id", default_id)), q["question"])
        if "text" in q:
            return ComplexQuestion(str(q.get("id", default_id)), q["text"])
    raise TypeError(f"cannot interpret {type(q).__name__} as a question")


def check_questions(X: Iterable[Any]) -> list[ComplexQuestion]:
    if isinstance(X, (str, bytes)):
        raise TypeError("expected an iterable of questions, got a single string")
    questions = [check_question(q, default_id=f"q{i}") for i, q in enumerate(X)]
    ids = [q.id for q in questions]
    if len(set(ids)) != len(ids):
        raise ValueError("question ids must be unique within a batch")
    return questions


def check_consistent_length(*arrays: Iterable) -> None:
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"inputs have inconsistent lengths: {sorted(lengths)}")


def check_binary(values: Iterable[Any], name: str) -> list[int]:
    out = []
    for v in values:
        if v not in (0, 1):
            raise ValueError(f"{name} must contain only 0/1 values, got {v!r}")
        out.append(int(v))
    return out
