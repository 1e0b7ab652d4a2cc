"""Text normalization shared by retrieval, keyword matching and metrics."""

from __future__ import annotations

import re
import string
from typing import Iterable, Sequence

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)
_WS_RE = re.compile(r"\s+")
_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase and split ``text`` into Unicode word tokens, dropping punctuation."""
    return _WORD_RE.findall(text.lower())


def collapse_whitespace(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def term_string(terms: Sequence[str]) -> str:
    # Space-padded join: a phrase is contiguous in ``terms`` iff " p1 p2 " is a substring.
    return " " + " ".join(terms) + " "


def phrase_in(phrase: str, terms: Sequence[str] | str) -> bool:
    """Return True if the normalized tokens of ``phrase`` occur contiguously in ``terms``.

    ``terms`` may be a token sequence or a precomputed :func:`term_string`.
    A phrase that normalizes to no tokens never matches.
    """
    tokens = tokenize(phrase)
    if not tokens:
        return False
    haystack = terms if isinstance(terms, str) else term_string(terms)
    return term_string(tokens) in haystack


def all_phrases_in(phrases: Iterable[str], terms: Sequence[str] | str) -> bool:
    """Containment of a whole keyword set. The empty set is *not* contained."""
    haystack = terms if isinstance(terms, str) else term_string(terms)
    phrases = list(phrases)
    if not phrases:
        return False
    return all(phrase_in(p, haystack) for p in phrases)


def normalize_answer(s: str) -> str:
    """SQuAD answer normalization: lowercase, strip punctuation and articles, collapse spaces."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES_RE.sub(" ", s)
    return " ".join(s.split())


def answer_tokens(s: str) -> list[str]:
    """Tokens for answer F1: lowercase, punctuation stripped, articles kept."""
    return "".join(ch for ch in s.lower() if ch not in _PUNCT).split()


def edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """Character-level similarity ``1 - levenshtein / max(len)``; 1.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest
