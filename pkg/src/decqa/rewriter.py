"""Context-aware rewriting of sub-questions using the accumulated QA history."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .gateway import LLMGateway
from .parsing import OutputParseError, format_rewrite, parse_rewrite
from .records import ComplexQuestion, QaHistory, RewrittenQuery, SubQuestion

logger = logging.getLogger(__name__)

__all__ = ["Rewriter", "RewriteError", "RewriteResult", "parse_rewrite", "format_rewrite"]


class RewriteError(OutputParseError):
    pass


@dataclass(frozen=True)
class RewriteResult:
    """Outcome of one rewrite: the query, the rendered rewrite prompt, and whether it fell back.

    ``prompt`` is recorded even when no model call was made, so the history
    each step saw can be audited from the run record.
    """

    query: RewrittenQuery
    prompt: str
    fallback: bool = False


class Rewriter:
    """Rewrites sub-question ``i`` into a self-contained query given the ``i - 1`` prior QA pairs.

    With ``rewrite_first_step=False`` (default) a sub-question with empty
    history is returned verbatim without a model call, since there is nothing
    to resolve against.
    """

    def __init__(self, gateway: LLMGateway, rewrite_first_step: bool = False):
        self.gateway = gateway
        self.rewrite_first_step = rewrite_first_step

    def bindings(self, question: ComplexQuestion, sub: SubQuestion, history: QaHistory) -> dict[str, str]:
        return {"question": question.text, "history": history.render(), "sub_question": sub.text}

    def rewrite(self, question: ComplexQuestion, sub: SubQuestion, history: QaHistory) -> RewrittenQuery:
        return self.rewrite_traced(question, sub, history).query

    def rewrite_traced(self, question: ComplexQuestion, sub: SubQuestion, history: QaHistory) -> RewriteResult:
        if len(history) != sub.index - 1:
            raise ValueError(f"sub-question {sub.index} expects {sub.index - 1} history entries, got {len(history)}")
        bindings = self.bindings(question, sub, history)
        if not history and not self.rewrite_first_step:
            prompt = self.gateway.catalog["rewrite"].render(bindings)
            return RewriteResult(RewrittenQuery(sub.index, sub.text, "None"), prompt)
        request = self.gateway.build_request("rewrite", bindings)
        raw = ""
        for attempt in range(2):
            raw = self.gateway.complete(request).text
            try:
                note, modified = parse_rewrite(raw)
                return RewriteResult(RewrittenQuery(sub.index, modified, note), request.user_text)
            except OutputParseError:
                logger.info("rewrite of step %d unparsable (attempt %d)", sub.index, attempt + 1)
        raise RewriteError(f"no Modified_question in rewrite of step {sub.index}", raw)

    def rewrite_or_fallback(self, question: ComplexQuestion, sub: SubQuestion, history: QaHistory) -> RewriteResult:
        """Like :meth:`rewrite_traced` but degrades to the unrewritten sub-question on parse failure."""
        try:
            return self.rewrite_traced(question, sub, history)
        except RewriteError:
            prompt = self.gateway.catalog["rewrite"].render(self.bindings(question, sub, history))
            return RewriteResult(RewrittenQuery(sub.index, sub.text, ""), prompt, fallback=True)
