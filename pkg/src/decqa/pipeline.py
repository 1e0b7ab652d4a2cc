"""The DEC loop: decompose, then rewrite / extract / recall / answer per step, then synthesize."""

from __future__ import annotations

import contextvars
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable

from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .decomposer import Decomposer, DecompositionError
from .gateway import GatewayError, LLMGateway, track_usage
from .keywords import KeywordExtractor
from .parsing import OutputParseError, parse_synthesis
from .records import ComplexQuestion, QaHistory, RewrittenQuery, RunRecord, StepTrace
from .retrieval import BM25Retriever, EnhancedCandidateSet, RetrievalError, hybrid_recall
from .rewriter import Rewriter
from .text import normalize_answer
from .validation import check_positive_int, check_question, check_questions

logger = logging.getLogger(__name__)

NO_INFORMATION = "no information found"
NO_DOCUMENTS = "No relevant documents found."


class SynthesisError(OutputParseError):
    pass


class RunAborted(RuntimeError):
    """An unrecoverable failure; ``record`` holds the partial trace with ``error`` set."""

    def __init__(self, record: RunRecord):
        self.record = record
        super().__init__(record.error)


class StepError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        self.step = step
        super().__init__(f"step {step}: {cause}")


def format_context(candidates: EnhancedCandidateSet) -> str:
    if not len(candidates):
        return NO_DOCUMENTS
    return "\n".join(f"Title: {sd.doc.title}\n{sd.doc.text}" for sd in candidates)


def _first_line(text: str) -> str:
    for line in text.splitlines():
        line = line.strip()
        if line:
            if line.lower().startswith("answer:"):
                line = line[len("answer:"):].strip()
            return line
    return ""


class DECPipeline(BaseEstimator):
    """Multi-hop question answering with a pre-decomposed reasoning chain.

    ``fit`` indexes a corpus (or adopts an already fitted ``retriever``);
    ``predict`` returns final answers; ``run`` returns the full
    :class:`RunRecord` trace for one question.

    Parameters
    ----------
    gateway : LLMGateway
        Model access for every stage.
    retriever : estimator with ``retrieve(query, top_n)``, optional
        Defaults to a fresh :class:`BM25Retriever`.
    top_n : int
        Documents retrieved per step before keyword filtering.
    backup_k : int
        Highest-scoring documents always kept as relevance backup.
    max_chain_length : int
        Longer decompositions are truncated and flagged.
    unanswerable_token : str
        Final answer meaning "abstain".
    rewrite_first_step : bool
        Send step 1 through the rewriter even though its history is empty.
    parallelism : int
        Default worker count for :meth:`run_batch`.
    config_digest : str
        Provenance stamp copied into every record.
    """

    def __init__(
        self,
        gateway: LLMGateway | None = None,
        retriever: Any = None,
        top_n: int = 10,
        backup_k: int = 2,
        max_chain_length: int = 6,
        unanswerable_token: str = "unanswerable",
        rewrite_first_step: bool = False,
        parallelism: int = 1,
        config_digest: str = "",
    ):
        self.gateway = gateway
        self.retriever = retriever
        self.top_n = top_n
        self.backup_k = backup_k
        self.max_chain_length = max_chain_length
        self.unanswerable_token = unanswerable_token
        self.rewrite_first_step = rewrite_first_step
        self.parallelism = parallelism
        self.config_digest = config_digest

    def fit(self, X: Iterable[Any] | None = None, y=None) -> "DECPipeline":
        if self.gateway is None:
            raise ValueError("DECPipeline needs a gateway")
        check_positive_int(self.top_n, "top_n")
        check_positive_int(self.backup_k, "backup_k")
        if X is not None:
            base = self.retriever if self.retriever is not None else BM25Retriever(top_n=self.top_n)
            self.retriever_ = clone(base).fit(X)
        elif self.retriever is not None:
            check_is_fitted(self.retriever)
            self.retriever_ = self.retriever
        else:
            raise ValueError("fit needs documents or an already fitted retriever")
        self.decomposer_ = Decomposer(self.gateway, self.max_chain_length)
        self.rewriter_ = Rewriter(self.gateway, self.rewrite_first_step)
        self.extractor_ = KeywordExtractor(self.gateway)
        return self

    def answer_sub_question(self, query: RewrittenQuery, candidates: EnhancedCandidateSet) -> str:
        """One model call answering ``query`` from the candidate documents, trimmed to one line."""
        bindings = {"sub_question": query.text, "rel_text": format_context(candidates)}
        try:
            raw = self.gateway.prompt("sub_answer", bindings).text
        except GatewayError as exc:
            raise StepError(query.sub_index, exc) from exc
        return _first_line(raw)

    def synthesize_final(self, question: ComplexQuestion, history: QaHistory) -> tuple[str, str, bool]:
        """Return ``(inference, answer, answerable)`` from the completed QA history."""
        bindings = {
            "question": question.text,
            "history": history.render(),
            "unanswerable_token": self.unanswerable_token,
        }
        request = self.gateway.build_request("synthesize", bindings)
        raw = ""
        for _ in range(2):
            raw = self.gateway.complete(request).text
            try:
                inference, answer = parse_synthesis(raw)
            except OutputParseError:
                continue
            answerable = normalize_answer(answer) != normalize_answer(self.unanswerable_token)
            return inference, answer, answerable
        raise SynthesisError(f"no Answer field in synthesis for question {question.id!r}", raw)

    def run(self, question: ComplexQuestion | str | dict) -> RunRecord:
        """Execute the full chain for one question.

        Raises :class:`RunAborted` (carrying the partial record) on backend or
        retrieval failures; content-level problems are flagged instead.
        """
        check_is_fitted(self, "retriever_")
        question = check_question(question)
        record = RunRecord(question=question, config_digest=self.config_digest)
        start = time.perf_counter()
        with track_usage() as ledger:
            try:
                self._run_into(record, ledger)
            except (GatewayError, RetrievalError, DecompositionError, StepError) as exc:
                record.error = f"{type(exc).__name__}: {exc}"
            finally:
                record.total_tokens = ledger.snapshot()
                if ledger.estimated:
                    record.flags.append("token_counts_estimated")
                record.wall_time = time.perf_counter() - start
        if record.error is not None:
            raise RunAborted(record)
        return record

    def _run_into(self, record: RunRecord, ledger) -> None:
        question = record.question
        chain = self.decomposer_.decompose(question)
        record.chain = chain
        if chain.truncated:
            record.flags.append("chain_truncated")
        history = QaHistory()
        for sub in chain.subs:
            before = ledger.snapshot()
            history_size = len(history)
            rewrite = self.rewriter_.rewrite_or_fallback(question, sub, history)
            if rewrite.fallback:
                record.flags.append(f"rewrite_fallback:step{sub.index}")
            query = rewrite.query
            keywords = self.extractor_.extract(query)
            if not keywords.keywords:
                record.flags.append(f"empty_keywords:step{sub.index}")
            candidates = hybrid_recall(self.retriever_, query.text, keywords, self.top_n, self.backup_k)
            if not len(candidates):
                record.flags.append(f"empty_retrieval:step{sub.index}")
            answer = self.answer_sub_question(query, candidates)
            if not answer:
                record.flags.append(f"sub_answer_failed:step{sub.index}")
                answer = NO_INFORMATION
            after = ledger.snapshot()
            record.steps.append(
                StepTrace(
                    index=sub.index,
                    sub_question=sub.text,
                    rewritten=query,
                    keywords=keywords,
                    candidate_doc_ids=candidates.ids,
                    keyword_matched_ids=sorted(candidates.keyword_matched_ids),
                    backup_ids=sorted(candidates.backup_ids),
                    sub_answer=answer,
                    step_tokens=(after[0] - before[0], after[1] - before[1]),
                    history_size=history_size,
                    rewrite_prompt=rewrite.prompt,
                )
            )
            history.append(query.text, answer)
        try:
            inference, answer, answerable = self.synthesize_final(question, history)
        except SynthesisError:
            record.flags.append("synthesis_failed")
            inference, answer, answerable = "", "", False
        record.final_inference = inference
        record.final_answer = answer
        record.predicted_answerable = answerable

    def _run_safe(self, question: ComplexQuestion) -> RunRecord:
        try:
            return self.run(question)
        except RunAborted as exc:
            logger.warning("question %s aborted: %s", question.id, exc.record.error)
            return exc.record
        except Exception as exc:  # batch isolation: one bad question never kills the batch
            logger.exception("question %s failed", question.id)
            return RunRecord(question=question, config_digest=self.config_digest, error=f"{type(exc).__name__}: {exc}")

    def run_batch(
        self,
        X: Iterable[Any],
        parallelism: int | None = None,
        callback: Callable[[RunRecord], None] | None = None,
    ) -> list[RunRecord]:
        """One record per question, in input order; failures become records with ``error`` set.

        ``callback`` sees each record as soon as it finishes (from a worker
        thread when ``parallelism > 1``), which lets callers persist progress.
        """
        check_is_fitted(self, "retriever_")
        questions = check_questions(X)
        workers = check_positive_int(self.parallelism if parallelism is None else parallelism, "parallelism")

        def one(q: ComplexQuestion) -> RunRecord:
            record = self._run_safe(q)
            if callback is not None:
                callback(record)
            return record

        if workers == 1 or len(questions) <= 1:
            return [one(q) for q in questions]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(contextvars.copy_context().run, one, q) for q in questions]
            return [f.result() for f in futures]

    def predict(self, X: Iterable[Any]) -> list[str]:
        return [r.final_answer for r in self.run_batch(X)]

    def score(self, X: Iterable[Any], y: Iterable[Iterable[str]]) -> float:
        """Mean CoverEM of the predictions against gold answer lists."""
        from .evaluation import cover_em

        preds = self.predict(X)
        golds = [list(g) for g in y]
        if len(preds) != len(golds):
            raise ValueError("X and y have different lengths")
        if not preds:
            return 0.0
        return sum(cover_em(p, g) for p, g in zip(preds, golds)) / len(preds)
