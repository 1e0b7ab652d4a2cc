"""Prompt templates and the default catalog used by every pipeline stage.

Templates use ``{name}`` placeholders. Rendering is a single regex pass, so
braces inside bound values are never re-expanded.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class TemplateError(ValueError):
    """Raised when a template cannot be rendered."""


@dataclass(frozen=True)
class PromptTemplate:
    """A named prompt body with ``{placeholder}`` slots.

    ``key_fields`` selects which bindings identify a request for the scripted
    backend. ``None`` means all placeholders.
    """

    name: str
    body: str
    key_fields: tuple[str, ...] | None = None
    system: str = ""

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for m in _PLACEHOLDER_RE.finditer(self.body):
            seen.setdefault(m.group(1))
        return tuple(seen)

    def render(self, bindings: Mapping[str, str]) -> str:
        return render(self, bindings)

    def digest(self, bindings: Mapping[str, str]) -> str:
        keys = self.key_fields if self.key_fields is not None else self.placeholders
        missing = [k for k in keys if k not in bindings]
        if missing:
            raise TemplateError(f"template {self.name!r}: unbound placeholder(s) {', '.join(missing)}")
        return binding_digest({k: str(bindings[k]) for k in keys})


def binding_digest(bindings: Mapping[str, str]) -> str:
    payload = json.dumps(dict(bindings), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    missing = [p for p in template.placeholders if p not in bindings]
    if missing:
        raise TemplateError(f"template {template.name!r}: unbound placeholder(s) {', '.join(missing)}")
    return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), template.body)


DECOMPOSE = PromptTemplate(
    name="decompose",
    body="""You are a question decomposition assistant. Break the complex question below into a logically coherent chain of atomic sub-questions.
Follow these rules:
1. Each sub-question asks for exactly one fact.
2. Order the sub-questions so that each one can be answered after the ones before it.
3. When a sub-question needs the answer of an earlier one, refer to it with a pronoun or a short description (for example "that person") instead of guessing the answer.
4. Together, the answers to the sub-questions must be sufficient to answer the complex question.
5. If the question is already atomic, output it unchanged as the only item.
### Format your output as a numbered list, one sub-question per line, and nothing else:
1. <first sub-question>
2. <second sub-question>
##Example:
Complex_Question: When was the founder of craigslist born?
1. Who was the founder of craigslist?
2. When was him born?
Now decompose the following question. Please be sure to output in the agreed format.
Complex_Question: {question}
Model output:
""",
)

REWRITE = PromptTemplate(
    name="rewrite",
    body="""You are an auxiliary query assistant who modifies queries to better find answers to solve problems.
Follow these precise steps:
1. **Dependency Check**: For each sub-question, identify if it depends on the answer to any previous sub-question.
   - State the dependency reason if it exists, otherwise, state "None".
2. **Dynamic Adjustment**: Modify the sub-question to include necessary information if a dependency is present.
   - If no change is required, keep the original sub-question.
### Input Data:
- Key_Question:The key question that ultimately needs to be answered. The modified sub-questions should be queries that can provide crucial information for answering this question.
- Previous_QA_History: "The question-and-answer history of previous sub-questions, which provides crucial information for solving the key question and for the rewriting of subsequent sub-questions.
- Modifiable_Question: The sub-questions that need to be modified.
### Format your output as follows:
Inference_process: Dependency reason or 'None' if not dependent
Modified_question: Modified sub-question or original if no changes are required
##Example:
- Key_Question:When was the founder of craigslist born?
- Previous_QA_History:
sub_question_1:Who was the founder of craigslist?, sub_answer:Craigslist was founded by Craig Newmark.
- Modifiable_Question:"When was him born?"
Inference_process: The sub-question "When was him born?" depends on the answer to sub-question_1 because "him" refers to the previously identified founder, Craig Newmark.
Modified_question: When was Craig Newmark born?
Now analyze the following question. Please be sure to output in the agreed format.
User input:
- Key_Question:{question}
- Previous_QA_History:{history}
- Modifiable_Question:{sub_question}
Model output:
""",
)

KEYWORDS = PromptTemplate(
    name="keywords",
    body="""You are a keyword extraction assistant for document retrieval.
Extract the most distinctive keywords from the query: the names, titles, dates and specific terms that are likely to appear in the documents answering it and rarely in unrelated documents.
Rules:
- Copy every keyword exactly as it appears in the query; do not paraphrase or add words.
- Skip question words and generic words such as "who", "when", "year" or "born".
- Output the keywords on one line separated by semicolons, and nothing else.
##Example:
Query: When was Craig Newmark born?
Keywords: Craig Newmark
Now extract the keywords for the following query.
Query: {query}
Keywords:""",
)

SUB_ANSWER = PromptTemplate(
    name="sub_answer",
    body="""Answer the following question briefly based on relevant information:
Question: {sub_question}
Context: {rel_text}""",
    key_fields=("sub_question",),
)

SYNTHESIZE = PromptTemplate(
    name="synthesize",
    body="""Synthesize an answer to the original question based on the answers to sub-questions:
"Your reasoning process should be separated into two fields from the answer. In the answer field, please provide the answer as concisely as possible. The answer should be given in the form of words or phrases as much as possible.
If the evidence is not sufficient to answer the original question, give the answer "{unanswerable_token}".
### Input Data:
- Original_Question:The key question that ultimately needs to be answered.
- Evidence:Question-and-answer pairs of the sub-questions split from the original question, which are used to answer the final original question.
### Format your output as follows:
Inference_process: Your reasoning process
Answer: Modified Provide answers as concisely as possible
##Output Example:
Inference_process: Based on the sub-questions and answers, I identified the series that matches the description as Animorphs, a science fantasy young adult series told in first person. The series has companion books that narrate the stories of enslaved worlds and alien species, which aligns with the nature of the companion books in the Square Enix series.
Answer: Animorphs
Now analyze the following question. Please be sure to output in the agreed format.
User input:
- Original_Question:{question}
- Evidence:{history}
Model output:
""",
    key_fields=("question", "history"),
)

JUDGE = PromptTemplate(
    name="judge",
    body="""You are an experienced linguist who is responsible for evaluating the correctness of the generated responses.
You are provided with question, the generated responses and the corresponding ground truth answer.
Your task is to compare the generated responses with the ground truth responses and evaluate the correctness of the generated responses.
##Example:
Example_1:
User input:
-Question: The city where Alex Shevelev died is the capital of what region?
-Ground-truth Answer: the Lazio region
-Prediction: the answer is Lazio
Model output:
-Correctness: yes
Example_2:
User input:
-Question: Which drink is larger, the Apple-Kneel or the Flaming volcano?
-Ground-truth Answer: The flaming volcano
-Prediction: The Apple-Kneel
Model output:
-Correctness: no
Now analyze the following question.Please be sure to output in the agreed format.
User input:
-Question: {question}
-Ground-truth Answer: {answer}
-Prediction: {prediction}
Model output:
""",
)

DEFAULT_TEMPLATES = (DECOMPOSE, REWRITE, KEYWORDS, SUB_ANSWER, SYNTHESIZE, JUDGE)


@dataclass(frozen=True)
class PromptCatalog:
    templates: Mapping[str, PromptTemplate] = field(
        default_factory=lambda: {t.name: t for t in DEFAULT_TEMPLATES}
    )

    def __getitem__(self, name: str) -> PromptTemplate:
        try:
            return self.templates[name]
        except KeyError:
            raise TemplateError(f"unknown template {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.templates

    def with_overrides(self, bodies: Mapping[str, str]) -> "PromptCatalog":
        """Return a catalog whose named bodies are replaced; key fields are kept."""
        templates = dict(self.templates)
        for name, body in bodies.items():
            base = self[name]
            templates[name] = PromptTemplate(name, body, base.key_fields, base.system)
        return PromptCatalog(templates)

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptCatalog":
        with open(path, encoding="utf-8") as fh:
            bodies = json.load(fh)
        if not isinstance(bodies, dict):
            raise TemplateError(f"{path}: prompt overrides must be a JSON object of name -> body")
        return cls().with_overrides(bodies)
