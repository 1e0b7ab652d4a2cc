"""Answer-quality, answerability, cost and fidelity metrics over run records."""

from __future__ import annotations

import collections
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from ._stopwords import STOPWORDS
from .gateway import GatewayError, LLMGateway
from .keywords import substring_match_rate
from .parsing import OutputParseError, parse_verdict
from .records import ComplexQuestion, DatasetRecord, Rate, ReasoningChain, RunRecord
from .text import answer_tokens, normalize_answer, similarity, tokenize
from .validation import check_binary, check_consistent_length

logger = logging.getLogger(__name__)

FUZZY_THRESHOLD = 0.8


def cover_em(prediction: str, gold_answers: Iterable[str]) -> int:
    """1 if some normalized gold answer is a contiguous substring of the normalized prediction."""
    golds = list(gold_answers)
    if not golds:
        raise ValueError("cover_em needs at least one gold answer")
    pred = normalize_answer(prediction)
    for gold in golds:
        g = normalize_answer(gold)
        # An all-article/punctuation gold only matches an equally empty prediction.
        if (g and g in pred) or (not g and not pred):
            return 1
    return 0


def _f1(prediction: str, gold: str) -> float:
    pred_tokens = answer_tokens(prediction)
    gold_tokens = answer_tokens(gold)
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = collections.Counter(pred_tokens) & collections.Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, gold_answers: Iterable[str]) -> float:
    """Token F1 over word counts, maximized over the gold answers.

    Unlike :func:`cover_em`, articles are kept: "the lazio region" against
    "lazio" scores P=1/3, R=1, F1=0.5.
    """
    golds = list(gold_answers)
    if not golds:
        raise ValueError("token_f1 needs at least one gold answer")
    return max(_f1(prediction, g) for g in golds)


def judge_gold_text(answers: Sequence[str]) -> str:
    return " or ".join(answers)


@dataclass(frozen=True)
class JudgeVerdict:
    correct: int
    flagged: bool = False
    raw: str = ""


def semantic_acc(question: str, gold: str, prediction: str, gateway: LLMGateway, role: str = "judge") -> JudgeVerdict:
    """LLM-judged equivalence of ``prediction`` and ``gold``.

    An unparsable verdict is retried once, then scored 0 and flagged.
    """
    request = gateway.build_request("judge", {"question": question, "answer": gold, "prediction": prediction}, role)
    raw = ""
    for _ in range(2):
        raw = gateway.complete(request).text
        try:
            return JudgeVerdict(int(parse_verdict(raw)), raw=raw)
        except OutputParseError:
            continue
    return JudgeVerdict(0, flagged=True, raw=raw)


def _ratio(num: float, den: float, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(f"{name}_undefined")
        return 0.0
    return num / den


@dataclass
class AnswerabilityReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    c_acc: float
    o_acc: float
    tp_correct: int
    flags: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def answerability_from_labels(
    predicted: Sequence[bool], actual: Sequence[bool], correctness: Sequence[int]
) -> AnswerabilityReport:
    """Confusion metrics with "answerable" as the positive class.

    ``correctness`` is aligned with the inputs and only consulted for true
    positives. Conditional accuracy excludes false positives (their answers
    have no gold to be checked against), so its denominator is TP.
    Undefined ratios are reported as 0 and listed in ``flags``.
    """
    check_consistent_length(predicted, actual, correctness)
    correctness = check_binary(correctness, "correctness")
    tp = fp = tn = fn = tp_correct = 0
    for p, a, c in zip(predicted, actual, correctness):
        if p and a:
            tp += 1
            tp_correct += c
        elif p:
            fp += 1
        elif a:
            fn += 1
        else:
            tn += 1
    n = tp + fp + tn + fn
    flags: list[str] = []
    precision = _ratio(tp, tp + fp, "precision", flags)
    recall = _ratio(tp, tp + fn, "recall", flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
    return AnswerabilityReport(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        accuracy=_ratio(tp + tn, n, "accuracy", flags),
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=_ratio(tn, tn + fp, "specificity", flags),
        c_acc=_ratio(tp_correct, tp, "c_acc", flags),
        o_acc=_ratio(tn + tp_correct, n, "o_acc", flags),
        tp_correct=tp_correct,
        flags=flags,
    )


def answerability_metrics(
    pairs: Sequence[tuple[RunRecord, DatasetRecord]], correctness: Sequence[int]
) -> AnswerabilityReport:
    missing = [d.id for _, d in pairs if d.answerable is None]
    if missing:
        raise ValueError(f"dataset records lack the answerable flag: {', '.join(missing[:5])}")
    return answerability_from_labels(
        [r.predicted_answerable for r, _ in pairs], [bool(d.answerable) for _, d in pairs], correctness
    )


def atc(records: Sequence[RunRecord], correctness: Sequence[int]) -> float | None:
    """Average token consumption per correct answer; ``None`` when nothing is correct."""
    check_consistent_length(records, correctness)
    return atc_from_totals(sum(r.tokens for r in records), sum(check_binary(correctness, "correctness")))


def atc_from_totals(total_tokens: int, n_correct: int) -> float | None:
    if n_correct == 0:
        return None
    return total_tokens / n_correct


def core_words(text: str) -> list[str]:
    return [w for w in tokenize(text) if w not in STOPWORDS]


def decomposition_fidelity(original: ComplexQuestion | str, chain: ReasoningChain | Iterable[str]) -> Rate:
    """Share of the chain's non-stopword tokens that fuzzily match a word of the original question."""
    original_text = original.text if isinstance(original, ComplexQuestion) else original
    texts = chain.texts if isinstance(chain, ReasoningChain) else list(chain)
    vocabulary = set(tokenize(original_text))
    words = [w for t in texts for w in core_words(t)]
    if not words:
        return Rate(1.0, 0, 0, vacuous=True)
    matched = 0
    for w in words:
        if w in vocabulary or any(similarity(w, v) > FUZZY_THRESHOLD for v in vocabulary):
            matched += 1
    return Rate(matched / len(words), matched, len(words))


def judge_consistency(verdicts_a: Sequence[int], verdicts_b: Sequence[int]) -> float:
    """Fraction of positions where two judges agree."""
    if len(verdicts_a) != len(verdicts_b):
        raise ValueError(f"verdict lists differ in length ({len(verdicts_a)} vs {len(verdicts_b)})")
    if not verdicts_a:
        return 1.0
    return sum(int(a) == int(b) for a, b in zip(verdicts_a, verdicts_b)) / len(verdicts_a)


@dataclass
class RecallReport:
    total_docs: int
    matched_docs: int
    doc_match_ratio: float
    questions: int
    fully_recalled: int
    fully_recalled_ratio: float


def gold_recall(records: Sequence[RunRecord], dataset: Sequence[DatasetRecord]) -> RecallReport | None:
    """Gold-document coverage of the candidates each run actually used.

    A question is fully recalled when every gold id appears among the
    candidate documents of at least one of its steps.
    """
    by_id = {r.question.id: r for r in records}
    total = matched = questions = full = 0
    for rec in dataset:
        if not rec.gold_doc_ids or rec.id not in by_id:
            continue
        got = by_id[rec.id].retrieved_ids()
        gold = set(rec.gold_doc_ids)
        hits = len(gold & got)
        total += len(gold)
        matched += hits
        questions += 1
        full += hits == len(gold)
    if questions == 0:
        return None
    return RecallReport(total, matched, matched / total, questions, full, full / questions)


@dataclass
class MetricReport:
    n: int
    cover_em: float
    token_f1: float
    sqa_mean: float
    acc_semantic: float | None = None
    atc: float | None = None
    correctness_source: str = "cover_em"
    answerability: AnswerabilityReport | None = None
    gold_recall: RecallReport | None = None
    keyword_match_rate: float | None = None
    decomposition_fidelity: float | None = None
    total_tokens: int = 0
    per_question: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    config_digest: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def format_table(self) -> str:
        rows = [
            ("questions", f"{self.n}"),
            ("CoverEM", f"{100 * self.cover_em:.2f}"),
            ("F1", f"{100 * self.token_f1:.2f}"),
        ]
        if self.acc_semantic is not None:
            rows.append(("ACC (judge)", f"{100 * self.acc_semantic:.2f}"))
        rows.append(("#SQA", f"{self.sqa_mean:.2f}"))
        rows.append(("tokens", f"{self.total_tokens}"))
        rows.append((f"ATC ({self.correctness_source})", "n/a" if self.atc is None else f"{self.atc:.2f}"))
        if self.gold_recall is not None:
            g = self.gold_recall
            rows.append(("doc match ratio", f"{100 * g.doc_match_ratio:.2f} ({g.matched_docs}/{g.total_docs})"))
            rows.append(("fully recalled", f"{100 * g.fully_recalled_ratio:.2f} ({g.fully_recalled}/{g.questions})"))
        if self.keyword_match_rate is not None:
            rows.append(("keyword match rate", f"{100 * self.keyword_match_rate:.2f}"))
        if self.decomposition_fidelity is not None:
            rows.append(("decomposition fidelity", f"{100 * self.decomposition_fidelity:.2f}"))
        if self.answerability is not None:
            a = self.answerability
            for name in ("accuracy", "precision", "recall", "f1", "specificity", "c_acc", "o_acc"):
                rows.append((f"answerability {name}", f"{100 * getattr(a, name):.2f}"))
        width = max(len(k) for k, _ in rows)
        lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
        if self.flags:
            lines.append(f"{'flags'.ljust(width)}  {', '.join(self.flags)}")
        return "\n".join(lines)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def evaluate(
    records: Sequence[RunRecord],
    dataset: Sequence[DatasetRecord],
    judge: LLMGateway | None = None,
    with_answerability: bool = False,
    parallelism: int = 4,
) -> MetricReport:
    """Score run records against their dataset records (matched by question id).

    Correctness for ATC and answerability comes from the judge when one is
    given, otherwise from CoverEM.
    """
    by_id = {d.id: d for d in dataset}
    unknown = [r.question.id for r in records if r.question.id not in by_id]
    if unknown:
        raise ValueError(f"run records for unknown question ids: {', '.join(unknown[:5])}")
    flags: list[str] = []
    seen = {r.question.id for r in records}
    missing = sum(1 for d in dataset if d.id not in seen)
    if missing:
        flags.append(f"missing_runs:{missing}")
    pairs = [(r, by_id[r.question.id]) for r in records]

    rows = []
    for r, d in pairs:
        row = {"id": d.id, "prediction": r.final_answer, "sqa": r.sqa_count, "tokens": r.tokens, "error": r.error}
        if d.answers:
            row["cover_em"] = cover_em(r.final_answer, d.answers)
            row["token_f1"] = token_f1(r.final_answer, d.answers)
        else:
            row["cover_em"], row["token_f1"] = 0, 0.0
            flags.append(f"no_gold_answers:{d.id}")
        rows.append(row)

    acc_semantic = None
    source = "cover_em"
    if judge is not None:
        def _judge(pair):
            r, d = pair
            if not d.answers or r.error is not None:
                return JudgeVerdict(0)
            try:
                return semantic_acc(d.question, judge_gold_text(d.answers), r.final_answer, judge)
            except GatewayError as exc:
                logger.warning("judge failed on %s: %s", d.id, exc)
                return JudgeVerdict(0, flagged=True)

        with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            verdicts = list(pool.map(_judge, pairs))
        for row, v in zip(rows, verdicts):
            row["acc_semantic"] = v.correct
            if v.flagged:
                flags.append(f"judge_unparsable:{row['id']}")
        acc_semantic = _mean([row["acc_semantic"] for row in rows])
        source = "acc_semantic"
    correctness = [row[source] for row in rows]
    for row, c in zip(rows, correctness):
        row["correct"] = c

    atc_value = atc([r for r, _ in pairs], correctness)
    if atc_value is None:
        flags.append("atc_undefined")
    if any("token_counts_estimated" in r.flags for r, _ in pairs):
        flags.append("token_counts_estimated")

    answerability = None
    if with_answerability:
        answerability = answerability_metrics(pairs, correctness)

    kw_pairs = [(s.rewritten.text, s.keywords.keywords) for r, _ in pairs for s in r.steps]
    kw_rate = substring_match_rate(kw_pairs)
    fidelities = [decomposition_fidelity(r.question, r.chain).value for r, _ in pairs if r.chain is not None]

    return MetricReport(
        n=len(pairs),
        cover_em=_mean([row["cover_em"] for row in rows]),
        token_f1=_mean([row["token_f1"] for row in rows]),
        sqa_mean=_mean([r.sqa_count for r, _ in pairs]),
        acc_semantic=acc_semantic,
        atc=atc_value,
        correctness_source=source,
        answerability=answerability,
        gold_recall=gold_recall([r for r, _ in pairs], dataset),
        keyword_match_rate=None if kw_rate.vacuous else kw_rate.value,
        decomposition_fidelity=_mean(fidelities) if fidelities else None,
        total_tokens=sum(r.tokens for r, _ in pairs),
        per_question=rows,
        flags=flags,
        config_digest=next((r.config_digest for r, _ in pairs if r.config_digest), ""),
    )
