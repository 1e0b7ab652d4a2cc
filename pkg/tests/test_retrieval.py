import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decqa.records import KeywordSet
from decqa.retrieval import (
    BM25Retriever,
    CorpusError,
    Document,
    RemoteRetriever,
    RetrievalError,
    ScoredDocument,
    hybrid_recall,
    read_corpus,
    select_candidates,
)

import oracles

CRAIG = [
    Document("a", "Craig Newmark", "craig newmark founded craigslist"),
    Document("b", "Craig Silverstein", "worked at google"),
    Document("c", "Newmark Hall", "is a building"),
]

# Frozen from oracles.bm25_scores over the title + text of CRAIG.
CRAIG_SCORES = {"a": 1.2486134151, "b": 0.482336086, "c": 0.482336086}


def test_document_terms_include_title():
    assert Document("x", "Paris Opera", "A building.").terms == ("paris", "opera", "a", "building")


def test_postings_list_both_ids():
    est = BM25Retriever().fit([Document("1", "", "Paris is big"), Document("2", "", "paris again")])
    assert [d for d, _ in est.postings_["paris"]] == ["1", "2"]


def test_bm25_frozen_oracle_values():
    ranked = BM25Retriever().fit(CRAIG).retrieve("craig newmark", 3)
    assert [sd.id for sd in ranked] == ["a", "b", "c"]  # b/c tie broken by id
    for sd in ranked:
        assert sd.score == pytest.approx(CRAIG_SCORES[sd.id], abs=1e-9)


vocab = "alpha beta gamma delta river stone north castle".split()


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.lists(st.sampled_from(vocab), min_size=1, max_size=10), min_size=1, max_size=15),
    st.lists(st.sampled_from(vocab), min_size=1, max_size=4),
    st.integers(1, 20),
)
def test_bm25_matches_exhaustive_scoring(texts, query_words, top_n):
    docs = [Document(f"d{i:02d}", "", " ".join(t)) for i, t in enumerate(texts)]
    query = " ".join(query_words)
    got = BM25Retriever().fit(docs).retrieve(query, top_n)
    expected = oracles.bm25_scores({d.id: d.text for d in docs}, query)
    assert [sd.id for sd in got] == oracles.ranked(expected, top_n)
    for sd in got:
        assert sd.score == pytest.approx(expected[sd.id], abs=1e-9)


def test_top_n_larger_than_corpus_returns_all():
    assert len(BM25Retriever().fit(CRAIG).retrieve("craig", 50)) == 3


def test_empty_query_and_empty_corpus():
    assert BM25Retriever().fit(CRAIG).retrieve("?!", 5) == []
    assert BM25Retriever().fit([]).retrieve("craig", 5) == []


def test_duplicate_id_rejected():
    with pytest.raises(CorpusError, match="'a'"):
        BM25Retriever().fit([CRAIG[0], CRAIG[0]])


def test_retrieve_is_deterministic():
    est = BM25Retriever().fit(CRAIG)
    assert est.retrieve("craig newmark") == est.retrieve("craig newmark")


def test_save_load_byte_identical(tmp_path):
    est = BM25Retriever(k1=1.5).fit(CRAIG)
    est.save(tmp_path / "a.json")
    loaded = BM25Retriever.load(tmp_path / "a.json")
    loaded.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert loaded.k1 == 1.5
    assert loaded.retrieve("craig newmark") == est.retrieve("craig newmark")


def test_read_corpus_reports_line_numbers(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "1", "title": "t", "text": "x"}\n{broken\n')
    with pytest.raises(CorpusError, match=":2:"):
        read_corpus(path)
    path.write_text('{"id": "1", "title": "t", "text": "x"}\n{"id": "1", "title": "t", "text": "y"}\n')
    with pytest.raises(CorpusError, match="duplicate document id '1'"):
        read_corpus(path)


def _scored(n):
    # Scores descending with the id: d1 best.
    return [ScoredDocument(Document(f"d{i}", "", f"doc {i} text"), float(100 - i)) for i in range(1, n + 1)]


def test_select_candidates_worked_example():
    retrieved = _scored(10)
    docs = {sd.id: sd for sd in retrieved}
    # Make d3 and d7 the only ones containing the keyword.
    for i in (3, 7):
        old = docs[f"d{i}"]
        docs[f"d{i}"] = ScoredDocument(Document(old.id, "", "doc with the key phrase"), old.score)
    retrieved = [docs[f"d{i}"] for i in range(1, 11)]
    cands = select_candidates(retrieved, ["key phrase"], backup_k=2)
    assert set(cands.ids) == {"d1", "d2", "d3", "d7"}
    assert cands.ids == ["d3", "d7", "d1", "d2"]  # matches first, then backups
    assert cands.keyword_matched_ids == {"d3", "d7"}
    assert cands.backup_ids == {"d1", "d2"}


def test_select_candidates_overlapping_backup():
    retrieved = _scored(10)
    retrieved[0] = ScoredDocument(Document("d1", "", "key"), retrieved[0].score)
    retrieved[6] = ScoredDocument(Document("d7", "", "key"), retrieved[6].score)
    assert set(select_candidates(retrieved, ["key"]).ids) == {"d1", "d2", "d7"}


def test_empty_keywords_give_top_backups():
    cands = select_candidates(_scored(10), KeywordSet((), "q"))
    assert cands.ids == ["d1", "d2"]
    assert not cands.keyword_matched_ids


def test_keywords_matching_nothing():
    cands = select_candidates(_scored(10), ["zebra"])
    assert cands.ids == ["d1", "d2"] and not cands.keyword_matched_ids


def test_single_retrieved_doc_keeps_one():
    assert len(select_candidates(_scored(1), ["zebra"])) == 1
    assert len(select_candidates([], ["zebra"])) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hybrid_recall_matches_brute_force(seed):
    rng = random.Random(seed)
    docs = [
        Document(f"d{i:02d}", rng.choice(vocab), " ".join(rng.choices(vocab, k=rng.randint(3, 9))))
        for i in range(rng.randint(1, 50))
    ]
    est = BM25Retriever().fit(docs)
    query = " ".join(rng.choices(vocab, k=3))
    keywords = [" ".join(rng.choices(vocab, k=rng.randint(1, 2))) for _ in range(rng.randint(0, 4))]
    top_n, backup_k = rng.choice((5, 10)), rng.choice((1, 2, 3))
    got = hybrid_recall(est, query, keywords, top_n, backup_k)
    retrieved = [(sd.id, sd.score, f"{sd.doc.title} {sd.doc.text}") for sd in est.retrieve(query, top_n)]
    assert set(got.ids) == oracles.hybrid_recall_ids(retrieved, keywords, backup_k)
    assert len(got) >= min(backup_k, len(retrieved))


class _RetrieverHandler(BaseHTTPRequestHandler):
    hits = [{"id": "b", "score": 0.5}, {"id": "a", "score": 0.9}]
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _RetrieverHandler.seen.append(body)
        data = json.dumps(self.hits).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def retriever_url():
    httpd = HTTPServer(("127.0.0.1", 0), _RetrieverHandler)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/search"
    httpd.shutdown()
    _RetrieverHandler.hits = [{"id": "b", "score": 0.5}, {"id": "a", "score": 0.9}]


def test_remote_retriever_hydrates_and_sorts(retriever_url):
    est = RemoteRetriever(retriever_url, top_n=5).fit(CRAIG)
    got = est.retrieve("craig")
    assert [sd.id for sd in got] == ["a", "b"]
    assert got[0].doc is est.docs_["a"]
    assert _RetrieverHandler.seen[-1] == {"query": "craig", "top_k": 5}


def test_remote_retriever_unknown_id(retriever_url):
    _RetrieverHandler.hits = [{"id": "zz", "score": 1.0}]
    with pytest.raises(RetrievalError, match="zz"):
        RemoteRetriever(retriever_url).fit(CRAIG).retrieve("craig")


def test_remote_retriever_unreachable():
    with pytest.raises(RetrievalError, match="127.0.0.1:9"):
        RemoteRetriever("http://127.0.0.1:9/search", timeout=0.5).fit(CRAIG).retrieve("craig")
