"""Synthetic multi-hop worlds: corpus, dataset and a complete script for the scripted backend.

Every fact lives in its own document, names are invented (so no question can
be answered from prior knowledge), and distractor documents reuse the surface
terms of the gold ones. The script answers every call the pipeline makes for
each question, so a run over a generated world exercises orchestration,
recall, parsing and accounting without a model.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .evaluation import judge_gold_text
from .gateway import ScriptEntry
from .keywords import DELIMITER
from .parsing import format_numbered_list, format_rewrite
from .prompts import PromptCatalog
from .records import DatasetRecord, format_history
from .retrieval import Document

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st", "tr", "vl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "", "n", "r", "s", "x", "th", "l"]
_ORG_SUFFIX = ["Industries", "Labs", "Systems", "Works", "Dynamics"]
_PRODUCT_KIND = ["Phone", "Engine", "Console", "Tablet", "Drone"]
_CITY_FORM = ["{}ville", "Port {}", "{} Falls", "New {}"]
_JOBS = ["engineer", "inventor", "architect", "astronomer", "economist"]


@dataclass(frozen=True)
class Step:
    sub_question: str
    rewritten: str
    inference: str
    keywords: tuple[str, ...]
    answer: str


@dataclass(frozen=True)
class PlannedQuestion:
    id: str
    question: str
    steps: tuple[Step, ...]
    final_answer: str
    gold_doc_ids: tuple[str, ...]
    answerable: bool = True
    gold_answer: str = ""

    @property
    def answers(self) -> tuple[str, ...]:
        return (self.gold_answer or self.final_answer,)


@dataclass
class SyntheticWorld:
    seed: int
    hops: int
    corpus: list[Document]
    questions: list[PlannedQuestion]
    script: list[ScriptEntry] = field(default_factory=list)

    @property
    def dataset(self) -> list[DatasetRecord]:
        out = []
        for q in self.questions:
            out.append(
                DatasetRecord(
                    id=q.id,
                    question=q.question,
                    answers=q.answers,
                    gold_doc_ids=q.gold_doc_ids if q.answerable else (),
                    answerable=q.answerable,
                )
            )
        return out

    @property
    def expected_answers(self) -> dict[str, str]:
        return {q.id: q.final_answer for q in self.questions}

    def corpus_without(self, doc_ids: Iterable[str]) -> list[Document]:
        drop = set(doc_ids)
        return [d for d in self.corpus if d.id not in drop]

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write ``corpus.jsonl``, ``dataset.jsonl`` and ``script.jsonl`` into ``directory``."""
        from .records import write_jsonl

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {name: directory / f"{name}.jsonl" for name in ("corpus", "dataset", "script")}
        write_jsonl(paths["corpus"], (d.to_dict() for d in self.corpus))
        write_jsonl(paths["dataset"], (r.to_dict() for r in self.dataset))
        write_jsonl(paths["script"], (e.to_dict() for e in self.script))
        return paths


class _Namer:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def word(self) -> str:
        while True:
            n = self.rng.choice((2, 2, 3))
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) for _ in range(n))
            w = (w + self.rng.choice(_CODAS)).capitalize()
            if w.lower() not in self.used:
                self.used.add(w.lower())
                return w

    def person(self) -> str:
        return f"{self.word()} {self.word()}"

    def org(self) -> str:
        return f"{self.word()} {self.rng.choice(_ORG_SUFFIX)}"

    def product(self) -> str:
        return f"{self.word()} {self.rng.choice(_PRODUCT_KIND)}"

    def city(self) -> str:
        return self.rng.choice(_CITY_FORM).format(self.word())

    def film(self) -> str:
        return f"{self.word()} Rising"

    def year(self) -> str:
        return str(self.rng.randint(1900, 1999))


class _Builder:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.names = _Namer(rng)
        self.docs: list[Document] = []
        self._n = 0

    def doc(self, title: str, text: str) -> str:
        self._n += 1
        doc_id = f"d{self._n:04d}"
        self.docs.append(Document(doc_id, title, text))
        return doc_id

    def person_doc(self, person: str, *, born_year: str | None = None, born_city: str | None = None) -> str:
        job = self.rng.choice(_JOBS)
        if born_year:
            return self.doc(person, f"{person} is an {job} who was born in {born_year}.")
        return self.doc(person, f"{person} is an {job} who was born in {born_city}.")

    def distractors(self, person: str, anchor: str) -> None:
        # One doc sharing the anchor entity's name, one sharing the person's first name.
        year = self.names.year()
        self.doc(f"{anchor} Arena", f"{anchor} Arena is a stadium that opened in {year}.")
        other = f"{person.split()[0]} {self.names.word()}"
        self.doc(other, f"{other} is an {self.rng.choice(_JOBS)} who was born in {self.names.city()}.")

    def founder_year(self, qid: str) -> PlannedQuestion:
        org, person, year = self.names.org(), self.names.person(), self.names.year()
        g1 = self.doc(org, f"{org} is a company that was founded by {person}.")
        g2 = self.person_doc(person, born_year=year)
        self.distractors(person, org)
        return PlannedQuestion(
            qid,
            f"When was the founder of {org} born?",
            (
                Step(f"Who founded {org}?", f"Who founded {org}?", "None", (org,), person),
                Step(
                    "When was that founder born?",
                    f"When was {person} born?",
                    f'"that founder" refers to the answer of sub-question_1, {person}.',
                    (person,),
                    year,
                ),
            ),
            year,
            (g1, g2),
        )

    def director_city(self, qid: str) -> PlannedQuestion:
        film, person, city = self.names.film(), self.names.person(), self.names.city()
        g1 = self.doc(film, f"{film} is a film that was directed by {person}.")
        g2 = self.person_doc(person, born_city=city)
        self.distractors(person, film)
        return PlannedQuestion(
            qid,
            f"Where was the director of {film} born?",
            (
                Step(f"Who directed {film}?", f"Who directed {film}?", "None", (film,), person),
                Step(
                    "Where was that director born?",
                    f"Where was {person} born?",
                    f'"that director" refers to the answer of sub-question_1, {person}.',
                    (person,),
                    city,
                ),
            ),
            city,
            (g1, g2),
        )

    def product_founder_city(self, qid: str) -> PlannedQuestion:
        product, org, person, city = self.names.product(), self.names.org(), self.names.person(), self.names.city()
        g1 = self.doc(product, f"{product} is a device made by {org}.")
        g2 = self.doc(org, f"{org} is a company that was founded by {person}.")
        g3 = self.person_doc(person, born_city=city)
        self.distractors(person, product)
        return PlannedQuestion(
            qid,
            f"Where was the founder of the company that makes {product} born?",
            (
                Step(f"Which company makes {product}?", f"Which company makes {product}?", "None", (product,), org),
                Step(
                    "Who founded that company?",
                    f"Who founded {org}?",
                    f'"that company" refers to the answer of sub-question_1, {org}.',
                    (org,),
                    person,
                ),
                Step(
                    "Where was that founder born?",
                    f"Where was {person} born?",
                    f'"that founder" refers to the answer of sub-question_2, {person}.',
                    (person,),
                    city,
                ),
            ),
            city,
            (g1, g2, g3),
        )

    def film_director_year(self, qid: str) -> PlannedQuestion:
        film, studio, person, year = self.names.film(), self.names.org(), self.names.person(), self.names.year()
        g1 = self.doc(film, f"{film} is a film produced by {studio}.")
        g2 = self.doc(studio, f"{studio} is a studio that was founded by {person}.")
        g3 = self.person_doc(person, born_year=year)
        self.distractors(person, studio)
        return PlannedQuestion(
            qid,
            f"When was the founder of the studio that produced {film} born?",
            (
                Step(f"Which studio produced {film}?", f"Which studio produced {film}?", "None", (film,), studio),
                Step(
                    "Who founded that studio?",
                    f"Who founded {studio}?",
                    f'"that studio" refers to the answer of sub-question_1, {studio}.',
                    (studio,),
                    person,
                ),
                Step(
                    "When was that founder born?",
                    f"When was {person} born?",
                    f'"that founder" refers to the answer of sub-question_2, {person}.',
                    (person,),
                    year,
                ),
            ),
            year,
            (g1, g2, g3),
        )


def _unanswerable(planned: PlannedQuestion, token: str) -> PlannedQuestion:
    """Same question with the gold evidence withheld: every sub-answer is 'unknown'."""
    steps = []
    for i, s in enumerate(planned.steps):
        rewritten = s.sub_question if i else s.rewritten
        steps.append(Step(s.sub_question, rewritten, "None", s.keywords[:1] if i == 0 else (), "unknown"))
    return PlannedQuestion(
        planned.id, planned.question, tuple(steps), token, (), answerable=False, gold_answer=planned.final_answer
    )


def build_script(
    questions: Iterable[PlannedQuestion],
    catalog: PromptCatalog | None = None,
    unanswerable_token: str = "unanswerable",
) -> list[ScriptEntry]:
    """Scripted responses for every call the pipeline makes on ``questions``."""
    catalog = catalog or PromptCatalog()
    entries: dict[tuple[str, str], ScriptEntry] = {}

    def add(template: str, bindings: dict, text: str) -> None:
        digest = catalog[template].digest(bindings)
        entries[(template, digest)] = ScriptEntry(template, digest, text)

    for q in questions:
        subs = [s.sub_question for s in q.steps]
        add("decompose", {"question": q.question}, format_numbered_list(subs))
        history: list[tuple[str, str]] = []
        for i, s in enumerate(q.steps):
            if i:
                add(
                    "rewrite",
                    {"question": q.question, "history": format_history(history), "sub_question": s.sub_question},
                    format_rewrite(s.inference, s.rewritten),
                )
            add("keywords", {"query": s.rewritten}, DELIMITER.join(s.keywords))
            add("sub_answer", {"sub_question": s.rewritten}, s.answer)
            history.append((s.rewritten, s.answer))
        if q.answerable:
            inference = "Combining the sub-answers: " + "; ".join(a for _, a in history) + "."
        else:
            inference = "The evidence does not identify the answer."
        add(
            "synthesize",
            {"question": q.question, "history": format_history(history), "unanswerable_token": unanswerable_token},
            f"Inference_process: {inference}\nAnswer: {q.final_answer}",
        )
        add(
            "judge",
            {"question": q.question, "answer": judge_gold_text(q.answers), "prediction": q.final_answer},
            "-Correctness: yes" if q.answerable else "-Correctness: no",
        )
    return list(entries.values())


def generate_world(
    seed: int,
    n_questions: int,
    hops: int = 2,
    n_unanswerable: int = 0,
    unanswerable_token: str = "unanswerable",
) -> SyntheticWorld:
    """Deterministically generate a world of ``n_questions`` questions with ``hops`` steps each.

    The last ``n_unanswerable`` questions have their gold documents withheld
    from the corpus and are scripted to abstain.
    """
    if hops not in (2, 3):
        raise ValueError("hops must be 2 or 3")
    if n_questions < 1:
        raise ValueError("n_questions must be positive")
    if not 0 <= n_unanswerable <= n_questions:
        raise ValueError("n_unanswerable must be between 0 and n_questions")
    rng = random.Random(seed)
    builder = _Builder(rng)
    makers = (
        (builder.founder_year, builder.director_city)
        if hops == 2
        else (builder.product_founder_city, builder.film_director_year)
    )
    questions = []
    withheld: set[str] = set()
    for i in range(n_questions):
        planned = makers[i % len(makers)](f"q{i + 1:03d}")
        if i >= n_questions - n_unanswerable:
            withheld.update(planned.gold_doc_ids)
            planned = _unanswerable(planned, unanswerable_token)
        questions.append(planned)
    corpus = [d for d in builder.docs if d.id not in withheld]
    rng.shuffle(corpus)
    world = SyntheticWorld(seed, hops, corpus, questions)
    world.script = build_script(questions, unanswerable_token=unanswerable_token)
    return world
