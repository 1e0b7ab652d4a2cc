"""Domain records passed between pipeline stages, plus JSON Lines I/O."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

RECORD_VERSION = 1
EMPTY_HISTORY = "None (no previous sub-questions)"


@dataclass(frozen=True)
class ComplexQuestion:
    id: str
    text: str

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"question {self.id!r} has empty text")


@dataclass(frozen=True)
class SubQuestion:
    index: int
    text: str

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"sub-question {self.index} has empty text")


@dataclass(frozen=True)
class ReasoningChain:
    question_id: str
    subs: tuple[SubQuestion, ...]
    truncated: bool = False

    def __post_init__(self):
        if not self.subs:
            raise ValueError("a reasoning chain needs at least one sub-question")
        if [s.index for s in self.subs] != list(range(1, len(self.subs) + 1)):
            raise ValueError("sub-question indices must be 1..n")

    @classmethod
    def from_texts(cls, question_id: str, texts: Iterable[str], truncated: bool = False) -> "ReasoningChain":
        return cls(question_id, tuple(SubQuestion(i, t) for i, t in enumerate(texts, 1)), truncated)

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.subs]

    def __len__(self) -> int:
        return len(self.subs)


@dataclass(frozen=True)
class RewrittenQuery:
    sub_index: int
    text: str
    inference_note: str = ""

    def __post_init__(self):
        if not self.text:
            raise ValueError("rewritten query must be non-empty")


class QaHistory:
    """Append-only list of (rewritten query, answer) pairs for one run."""

    def __init__(self, entries: Iterable[tuple[str, str]] = ()):
        self._entries: list[tuple[str, str]] = [tuple(e) for e in entries]

    def append(self, query: str, answer: str) -> None:
        self._entries.append((query, answer))

    @property
    def entries(self) -> tuple[tuple[str, str], ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def render(self) -> str:
        return format_history(self._entries)


def format_history(entries: Iterable[tuple[str, str]]) -> str:
    lines = [f"sub_question_{k}:{q}, sub_answer:{a}" for k, (q, a) in enumerate(entries, 1)]
    if not lines:
        return EMPTY_HISTORY
    return "\n" + "\n".join(lines)


@dataclass(frozen=True)
class KeywordSet:
    keywords: tuple[str, ...]
    source_query: str
    hallucinated: tuple[str, ...] = ()
    failed: bool = False

    def __len__(self) -> int:
        return len(self.keywords)

    def __iter__(self):
        return iter(self.keywords)


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    question: str
    answers: tuple[str, ...]
    gold_doc_ids: tuple[str, ...] | None = None
    answerable: bool | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        for key in ("id", "question", "answers"):
            if key not in d:
                raise ValueError(f"dataset record missing {key!r}")
        answers = d["answers"]
        if isinstance(answers, str) or not isinstance(answers, list):
            raise ValueError(f"dataset record {d['id']!r}: answers must be a list")
        gold = d.get("gold_doc_ids")
        return cls(
            id=str(d["id"]),
            question=d["question"],
            answers=tuple(answers),
            gold_doc_ids=tuple(str(g) for g in gold) if gold is not None else None,
            answerable=d.get("answerable"),
        )

    def to_dict(self) -> dict:
        d = {"id": self.id, "question": self.question, "answers": list(self.answers)}
        if self.gold_doc_ids is not None:
            d["gold_doc_ids"] = list(self.gold_doc_ids)
        if self.answerable is not None:
            d["answerable"] = self.answerable
        return d

    def to_question(self) -> ComplexQuestion:
        return ComplexQuestion(self.id, self.question)


@dataclass
class StepTrace:
    index: int
    sub_question: str
    rewritten: RewrittenQuery
    keywords: KeywordSet
    candidate_doc_ids: list[str]
    keyword_matched_ids: list[str]
    backup_ids: list[str]
    sub_answer: str
    step_tokens: tuple[int, int]
    history_size: int
    rewrite_prompt: str | None = None


@dataclass
class RunRecord:
    question: ComplexQuestion
    chain: ReasoningChain | None = None
    steps: list[StepTrace] = field(default_factory=list)
    final_inference: str = ""
    final_answer: str = ""
    predicted_answerable: bool = False
    total_tokens: tuple[int, int] = (0, 0)
    flags: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    config_digest: str = ""
    error: str | None = None
    record_version: int = RECORD_VERSION

    @property
    def sqa_count(self) -> int:
        return len(self.steps)

    @property
    def complete(self) -> bool:
        return self.error is None

    @property
    def tokens(self) -> int:
        return self.total_tokens[0] + self.total_tokens[1]

    def retrieved_ids(self) -> set[str]:
        ids: set[str] = set()
        for s in self.steps:
            ids.update(s.candidate_doc_ids)
        return ids

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d["sqa_count"] = self.sqa_count
        d["total_tokens"] = list(self.total_tokens)
        for s in d["steps"]:
            s["step_tokens"] = list(s["step_tokens"])
        if not timing:
            d.pop("wall_time")
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        version = d.get("record_version", RECORD_VERSION)
        if version != RECORD_VERSION:
            raise ValueError(f"unsupported record_version {version}")
        chain = None
        if d.get("chain") is not None:
            c = d["chain"]
            chain = ReasoningChain(
                c["question_id"], tuple(SubQuestion(**s) for s in c["subs"]), c.get("truncated", False)
            )
        steps = []
        for s in d.get("steps", []):
            kw = s["keywords"]
            steps.append(
                StepTrace(
                    index=s["index"],
                    sub_question=s["sub_question"],
                    rewritten=RewrittenQuery(**s["rewritten"]),
                    keywords=KeywordSet(
                        tuple(kw["keywords"]), kw["source_query"], tuple(kw.get("hallucinated", ())), kw.get("failed", False)
                    ),
                    candidate_doc_ids=list(s["candidate_doc_ids"]),
                    keyword_matched_ids=list(s.get("keyword_matched_ids", [])),
                    backup_ids=list(s.get("backup_ids", [])),
                    sub_answer=s["sub_answer"],
                    step_tokens=tuple(s["step_tokens"]),
                    history_size=s["history_size"],
                    rewrite_prompt=s.get("rewrite_prompt"),
                )
            )
        return cls(
            question=ComplexQuestion(**d["question"]),
            chain=chain,
            steps=steps,
            final_inference=d.get("final_inference", ""),
            final_answer=d.get("final_answer", ""),
            predicted_answerable=d.get("predicted_answerable", False),
            total_tokens=tuple(d.get("total_tokens", (0, 0))),
            flags=list(d.get("flags", [])),
            wall_time=d.get("wall_time", 0.0),
            config_digest=d.get("config_digest", ""),
            error=d.get("error"),
            record_version=version,
        )


def read_jsonl(path: str | Path, strict: bool = True) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` per non-blank line.

    With ``strict=False`` undecodable lines (e.g. a torn final write) are skipped.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                if strict:
                    raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
                continue
            if not isinstance(obj, dict):
                if strict:
                    raise ValueError(f"{path}:{lineno}: expected a JSON object")
                continue
            yield lineno, obj


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> int:
    """Atomically write ``rows`` as JSON Lines; returns the row count."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    n = 0
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    os.replace(tmp, path)
    return n


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    records = []
    seen = set()
    for lineno, obj in read_jsonl(path):
        try:
            rec = DatasetRecord.from_dict(obj)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if rec.id in seen:
            raise ValueError(f"{path}:{lineno}: duplicate question id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def load_runs(path: str | Path, strict: bool = True) -> list[RunRecord]:
    return [RunRecord.from_dict(obj) for _, obj in read_jsonl(path, strict=strict)]


@dataclass(frozen=True)
class Rate:
    """A ratio with its counts; ``vacuous`` marks a 0/0 case reported by convention."""

    value: float
    numerator: int
    denominator: int
    vacuous: bool = False

    def __float__(self) -> float:
        return self.value
