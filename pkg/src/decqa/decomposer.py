"""Question decomposition into an ordered chain of atomic sub-questions."""

from __future__ import annotations

import logging
from typing import Any, Iterable

from sklearn.base import BaseEstimator, TransformerMixin

from .gateway import LLMGateway
from .parsing import OutputParseError, parse_numbered_list
from .records import ComplexQuestion, ReasoningChain, SubQuestion
from .validation import check_positive_int, check_question

logger = logging.getLogger(__name__)


class DecompositionError(OutputParseError):
    pass


def parse_chain(raw: str) -> list[SubQuestion]:
    """Sub-questions from a numbered-list model response.

    >>> [s.text for s in parse_chain("1) X?\\nnote\\n2) Y?")]
    ['X?', 'Y?']
    """
    return [SubQuestion(i, t) for i, t in enumerate(parse_numbered_list(raw), 1)]


class Decomposer(BaseEstimator, TransformerMixin):
    """Turns a complex question into a :class:`ReasoningChain` with one model call.

    Stateless: ``fit`` is a no-op kept for pipeline composition.
    """

    def __init__(self, gateway: LLMGateway | None = None, max_chain_length: int = 6):
        self.gateway = gateway
        self.max_chain_length = max_chain_length

    def fit(self, X=None, y=None) -> "Decomposer":
        return self

    def decompose(self, question: ComplexQuestion | str) -> ReasoningChain:
        question = check_question(question)
        limit = check_positive_int(self.max_chain_length, "max_chain_length")
        if self.gateway is None:
            raise ValueError("Decomposer needs a gateway")
        raw = ""
        for attempt in range(2):
            raw = self.gateway.prompt("decompose", {"question": question.text}).text
            try:
                texts = parse_numbered_list(raw)
                break
            except OutputParseError:
                logger.info("decomposition of %s unparsable (attempt %d)", question.id, attempt + 1)
        else:
            raise DecompositionError(f"could not parse a chain for question {question.id!r}", raw)
        if len(texts) == 1:
            # A single-hop question is its own chain.
            texts = [question.text]
        truncated = len(texts) > limit
        return ReasoningChain.from_texts(question.id, texts[:limit], truncated=truncated)

    def transform(self, X: Iterable[Any]) -> list[ReasoningChain]:
        return [self.decompose(check_question(q, default_id=f"q{i}")) for i, q in enumerate(X)]
