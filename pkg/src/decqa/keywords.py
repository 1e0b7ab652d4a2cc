"""Discriminative keyword extraction and EK training-data construction."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .gateway import LLMGateway
from .prompts import KEYWORDS, PromptCatalog
from .records import DatasetRecord, KeywordSet, Rate, RewrittenQuery, RunRecord
from .retrieval import Document
from .text import collapse_whitespace, phrase_in, tokenize

logger = logging.getLogger(__name__)

DELIMITER = "; "
_SPLIT_RE = re.compile(r"[;\n]")
_LABEL_RE = re.compile(r"^\s*\**\s*keywords?\s*\**\s*:\s*", re.IGNORECASE)


def parse_keywords(raw: str) -> list[str]:
    """Split a delimiter-separated keyword line into normalized, deduplicated phrases."""
    out: list[str] = []
    seen: set[str] = set()
    for part in _SPLIT_RE.split(_LABEL_RE.sub("", raw.strip())):
        kw = collapse_whitespace(part.strip().lstrip("-*•").strip().strip("\"'`"))
        if not kw or not tokenize(kw):
            continue
        key = kw.casefold()
        if key in seen:
            continue
        seen.add(key)
        out.append(kw)
    return out


def make_keyword_set(query: str, keywords: Iterable[str], failed: bool = False) -> KeywordSet:
    kws = tuple(keywords)
    q_terms = tokenize(query)
    hallucinated = tuple(k for k in kws if not phrase_in(k, q_terms))
    return KeywordSet(kws, query, hallucinated, failed)


class KeywordExtractor(BaseEstimator, TransformerMixin):
    """Prompts the EK model for the distinctive keywords of a rewritten query.

    Keywords that are not phrases of the query are kept but listed in
    ``KeywordSet.hallucinated``. An empty response after one retry yields an
    empty set with ``failed=True``.
    """

    def __init__(self, gateway: LLMGateway | None = None, role: str = "ek"):
        self.gateway = gateway
        self.role = role

    def fit(self, X=None, y=None) -> "KeywordExtractor":
        return self

    def extract(self, query: RewrittenQuery | str) -> KeywordSet:
        text = query.text if isinstance(query, RewrittenQuery) else query
        if self.gateway is None:
            raise ValueError("KeywordExtractor needs a gateway")
        request = self.gateway.build_request("keywords", {"query": text}, role=self.role)
        for _ in range(2):
            keywords = parse_keywords(self.gateway.complete(request).text)
            if keywords:
                return make_keyword_set(text, keywords)
        logger.info("no keywords extracted for %r", text)
        return make_keyword_set(text, (), failed=True)

    def transform(self, X: Iterable[Any]) -> list[KeywordSet]:
        return [self.extract(q) for q in X]


def substring_match_rate(pairs: Iterable[tuple[str, Iterable[str]]]) -> Rate:
    """Share of keywords that occur as a contiguous token phrase of their own query."""
    matched = total = 0
    for query, keywords in pairs:
        q_terms = tokenize(query)
        for kw in keywords:
            total += 1
            matched += phrase_in(kw, q_terms)
    if total == 0:
        return Rate(1.0, 0, 0, vacuous=True)
    return Rate(matched / total, matched, total)


def validity_indicator(keywords: Iterable[str], gold_docs: Iterable[Document]) -> int:
    """1 if some gold document contains every keyword, else 0 (and 0 for no keywords)."""
    kws = list(keywords)
    if not kws:
        return 0
    return int(any(doc.contains_all(kws) for doc in gold_docs))


@dataclass(frozen=True)
class EkTrainingExample:
    instruction: str
    input_query: str
    output_keywords: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"instruction": self.instruction, "input": self.input_query, "output": DELIMITER.join(self.output_keywords)}


@dataclass
class EkBuildStats:
    pairs_seen: int = 0
    emitted: int = 0
    skipped_runs: int = 0


def ek_instruction(catalog: PromptCatalog | None = None) -> str:
    body = (catalog or PromptCatalog())[KEYWORDS.name].body
    return body.rsplit("Query: {query}", 1)[0].strip()


def build_ek_dataset(
    runs: Iterable[RunRecord],
    dataset: Sequence[DatasetRecord],
    documents: Mapping[str, Document],
    catalog: PromptCatalog | None = None,
) -> tuple[list[EkTrainingExample], EkBuildStats]:
    """Keep every (rewritten query, keywords) pair whose keywords validate against a gold document.

    Runs whose dataset record has no gold ids resolvable in ``documents`` are
    skipped and counted in ``stats.skipped_runs``.
    """
    by_id = {r.id: r for r in dataset}
    instruction = ek_instruction(catalog)
    stats = EkBuildStats()
    examples: list[EkTrainingExample] = []
    for run in runs:
        rec = by_id.get(run.question.id)
        gold = [documents[g] for g in (rec.gold_doc_ids or ()) if g in documents] if rec else []
        if not gold:
            stats.skipped_runs += 1
            continue
        for step in run.steps:
            stats.pairs_seen += 1
            if validity_indicator(step.keywords.keywords, gold):
                examples.append(EkTrainingExample(instruction, step.rewritten.text, step.keywords.keywords))
    stats.emitted = len(examples)
    if stats.skipped_runs:
        logger.warning("skipped %d run(s) without resolvable gold documents", stats.skipped_runs)
    return examples, stats
