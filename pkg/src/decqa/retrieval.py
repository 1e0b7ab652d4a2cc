"""Document retrieval: a local BM25 index, a remote retriever client, and hybrid recall.

Hybrid recall keeps, out of the top-N retrieved documents, every document that
contains the whole keyword set plus the ``backup_k`` highest-scoring ones.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

import requests
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .records import KeywordSet
from .text import all_phrases_in, term_string, tokenize
from .validation import check_positive_int

logger = logging.getLogger(__name__)

INDEX_FORMAT = "decqa-bm25/1"


class CorpusError(ValueError):
    """Malformed corpus input."""


class RetrievalError(RuntimeError):
    pass


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    terms: tuple[str, ...] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.terms is None:
            object.__setattr__(self, "terms", tuple(tokenize(f"{self.title} {self.text}")))

    @cached_property
    def term_string(self) -> str:
        return term_string(self.terms)

    def contains_all(self, keywords: Iterable[str]) -> bool:
        return all_phrases_in(keywords, self.term_string)

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "text": self.text}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Document":
        if "id" not in d:
            raise CorpusError("document record missing 'id'")
        title, text = d.get("title", ""), d.get("text", "")
        if not isinstance(title, str) or not isinstance(text, str):
            raise CorpusError(f"document {d['id']!r}: title and text must be strings")
        return cls(str(d["id"]), title, text)


def as_document(obj: Any) -> Document:
    if isinstance(obj, Document):
        return obj
    if isinstance(obj, Mapping):
        return Document.from_dict(obj)
    raise TypeError(f"cannot interpret {type(obj).__name__} as a document")


def read_corpus(path: str | Path) -> list[Document]:
    """Load a JSON Lines corpus of ``{id, title, text}`` records."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise CorpusError("expected a JSON object")
                doc = Document.from_dict(obj)
            except (json.JSONDecodeError, CorpusError) as exc:
                msg = exc.msg if isinstance(exc, json.JSONDecodeError) else str(exc)
                raise CorpusError(f"{path}:{lineno}: unreadable record ({msg})") from None
            if doc.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


@dataclass(frozen=True)
class ScoredDocument:
    doc: Document
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite score for document {self.doc.id!r}")

    @property
    def id(self) -> str:
        return self.doc.id


@dataclass(frozen=True)
class EnhancedCandidateSet:
    docs: tuple[ScoredDocument, ...]
    keyword_matched_ids: frozenset[str]
    backup_ids: frozenset[str]

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.docs]

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)


def _rank_key(sd: ScoredDocument) -> tuple[float, str]:
    return (-sd.score, sd.id)


class BM25Retriever(BaseEstimator):
    """Okapi BM25 over an in-memory inverted index.

    Parameters
    ----------
    k1, b : float
        BM25 term-frequency saturation and length normalization.
    top_n : int
        Default number of documents returned by :meth:`retrieve`.

    Documents sharing no term with the query score 0 and are still returned
    (in id order) when ``top_n`` exceeds the number of matching documents.
    """

    def __init__(self, k1: float = 1.2, b: float = 0.75, top_n: int = 10):
        self.k1 = k1
        self.b = b
        self.top_n = top_n

    def fit(self, X: Iterable[Any], y=None) -> "BM25Retriever":
        docs: dict[str, Document] = {}
        for obj in X:
            doc = as_document(obj)
            if doc.id in docs:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            docs[doc.id] = doc
        postings: dict[str, list[tuple[str, int]]] = {}
        for doc_id in sorted(docs):
            for term, tf in sorted(Counter(docs[doc_id].terms).items()):
                postings.setdefault(term, []).append((doc_id, tf))
        self._set_state(docs, dict(sorted(postings.items())))
        return self

    def _set_state(self, docs: dict[str, Document], postings: dict[str, list[tuple[str, int]]]) -> None:
        self.docs_ = docs
        self.postings_ = postings
        self.doc_len_ = {i: len(d.terms) for i, d in docs.items()}
        self.n_docs_ = len(docs)
        self.avgdl_ = sum(self.doc_len_.values()) / self.n_docs_ if self.n_docs_ else 0.0
        self.sorted_ids_ = sorted(docs)

    @property
    def stats(self) -> dict:
        check_is_fitted(self, "docs_")
        return {"n_docs": self.n_docs_, "avg_len": self.avgdl_, "n_terms": len(self.postings_)}

    def idf(self, term: str) -> float:
        df = len(self.postings_.get(term, ()))
        return math.log(1.0 + (self.n_docs_ - df + 0.5) / (df + 0.5))

    def retrieve(self, query: str, top_n: int | None = None) -> list[ScoredDocument]:
        check_is_fitted(self, "docs_")
        top_n = check_positive_int(self.top_n if top_n is None else top_n, "top_n")
        q_terms = tokenize(query)
        if not q_terms or not self.n_docs_:
            return []
        scores: dict[str, float] = {}
        avgdl = self.avgdl_ or 1.0
        for term in q_terms:
            plist = self.postings_.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for doc_id, tf in plist:
                norm = tf + self.k1 * (1.0 - self.b + self.b * self.doc_len_[doc_id] / avgdl)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (self.k1 + 1.0) / norm
        ranked = heapq.nsmallest(top_n, scores.items(), key=lambda kv: (-kv[1], kv[0]))
        out = [ScoredDocument(self.docs_[i], s) for i, s in ranked]
        if len(out) < top_n:
            for doc_id in self.sorted_ids_:
                if doc_id not in scores:
                    out.append(ScoredDocument(self.docs_[doc_id], 0.0))
                    if len(out) == top_n:
                        break
        return out

    def predict(self, X: Iterable[str]) -> list[list[str]]:
        """Ranked document ids for each query in ``X``."""
        return [[sd.id for sd in self.retrieve(q)] for q in X]

    def get_document(self, doc_id: str) -> Document:
        check_is_fitted(self, "docs_")
        return self.docs_[doc_id]

    def save(self, path: str | Path) -> None:
        check_is_fitted(self, "docs_")
        payload = {
            "format": INDEX_FORMAT,
            "params": self.get_params(),
            "stats": {"n_docs": self.n_docs_, "avg_len": self.avgdl_},
            "documents": [self.docs_[i].to_dict() for i in self.sorted_ids_],
            "postings": {t: [[d, tf] for d, tf in pl] for t, pl in self.postings_.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "BM25Retriever":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != INDEX_FORMAT:
            raise CorpusError(f"{path}: not a {INDEX_FORMAT} index file")
        est = cls(**payload["params"])
        docs = {d["id"]: Document.from_dict(d) for d in payload["documents"]}
        postings = {t: [(d, tf) for d, tf in pl] for t, pl in payload["postings"].items()}
        est._set_state(docs, postings)
        return est


class RemoteRetriever(BaseEstimator):
    """Client for a dense retrieval service.

    The service receives ``POST {"query": ..., "top_k": ...}`` and answers with a
    JSON list of ``{"id": ..., "score": ...}``. Ids are hydrated against the
    documents passed to :meth:`fit`.
    """

    def __init__(self, url: str = "", top_n: int = 10, timeout: float = 30.0):
        self.url = url
        self.top_n = top_n
        self.timeout = timeout

    def fit(self, X: Iterable[Any], y=None) -> "RemoteRetriever":
        docs: dict[str, Document] = {}
        for obj in X:
            doc = as_document(obj)
            if doc.id in docs:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            docs[doc.id] = doc
        self.docs_ = docs
        return self

    def _post(self, payload: dict) -> requests.Response:
        last_exc: Exception | None = None
        for _ in range(2):
            try:
                return requests.post(self.url, json=payload, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
        raise RetrievalError(f"cannot reach retriever at {self.url}: {last_exc}")

    def retrieve(self, query: str, top_n: int | None = None) -> list[ScoredDocument]:
        check_is_fitted(self, "docs_")
        top_n = check_positive_int(self.top_n if top_n is None else top_n, "top_n")
        if not tokenize(query):
            return []
        resp = self._post({"query": query, "top_k": top_n})
        if resp.status_code >= 400:
            raise RetrievalError(f"retriever at {self.url} returned HTTP {resp.status_code}")
        try:
            hits = resp.json()
            pairs = [(str(h["id"]), float(h["score"])) for h in hits]
        except (ValueError, KeyError, TypeError):
            raise RetrievalError(f"malformed response from retriever at {self.url}") from None
        out = []
        for doc_id, score in pairs:
            if doc_id not in self.docs_:
                raise RetrievalError(f"retriever returned unknown document id {doc_id!r}")
            out.append(ScoredDocument(self.docs_[doc_id], score))
        out.sort(key=_rank_key)
        return out[:top_n]

    def predict(self, X: Iterable[str]) -> list[list[str]]:
        return [[sd.id for sd in self.retrieve(q)] for q in X]

    def get_document(self, doc_id: str) -> Document:
        check_is_fitted(self, "docs_")
        return self.docs_[doc_id]


def select_candidates(
    retrieved: list[ScoredDocument], keywords: KeywordSet | Iterable[str], backup_k: int = 2
) -> EnhancedCandidateSet:
    """Build the enhanced candidate set from an already-retrieved list.

    An empty keyword set selects no keyword matches, so the result is just the
    ``backup_k`` best documents.
    """
    backup_k = check_positive_int(backup_k, "backup_k")
    kws = list(keywords)
    ranked = sorted(retrieved, key=_rank_key)
    matched = [sd for sd in ranked if kws and sd.doc.contains_all(kws)]
    backups = ranked[:backup_k]
    matched_ids = {sd.id for sd in matched}
    docs = matched + [sd for sd in backups if sd.id not in matched_ids]
    return EnhancedCandidateSet(tuple(docs), frozenset(matched_ids), frozenset(sd.id for sd in backups))


def hybrid_recall(
    retriever: BM25Retriever | RemoteRetriever,
    query: str,
    keywords: KeywordSet | Iterable[str],
    top_n: int = 10,
    backup_k: int = 2,
) -> EnhancedCandidateSet:
    """Retrieve ``top_n`` documents for ``query`` and keep keyword matches plus ``backup_k`` backups."""
    return select_candidates(retriever.retrieve(query, top_n), keywords, backup_k)
