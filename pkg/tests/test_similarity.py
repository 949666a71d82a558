import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from helpers import index_docs, random_docs, random_table, table_dict
from knnrank.model1 import TranslationTable
from knnrank.similarity import (OOV_PROB, Bm25Params, EmbeddingSet, EmptyQueryWarning, ModelWeights, bm25,
                                build_query_context, combined_score, embed_average, embed_cosine, idf,
                                idf_array, load_embeddings, model1_log_score, normalized_tf,
                                query_tfidf_vector, tfidf_cosine, SparseVector)
from knnrank.forward_index import doc_tfidf_vector


# -- IDF / BM25 ----------------------------------------------------------

def test_idf_values():
    assert idf(100, 9) == pytest.approx(math.log(1 + 91.5 / 9.5), abs=1e-15)
    assert idf(1, 1) == pytest.approx(0.2877, abs=1e-4)
    assert idf(1, 1) == pytest.approx(math.log(1 + 0.5 / 1.5), abs=1e-15)
    for D in (1, 7, 1000):
        assert idf(D, D) == pytest.approx(math.log(1 + 0.5 / (D + 0.5))) and idf(D, D) > 0
    assert np.allclose(idf_array(100, np.array([1, 9, 100])), [idf(100, 1), idf(100, 9), idf(100, 100)])


@pytest.mark.parametrize("D, d", [(0, 0), (5, 0), (5, 6), (-1, 1)])
def test_idf_domain(D, d):
    with pytest.raises(ValueError):
        idf(D, d)


def test_normalized_tf_hand_value():
    assert normalized_tf(2, 10.0, 10.0, Bm25Params(1.2, 0.75)) == pytest.approx(4.4 / 3.2, abs=1e-12)
    assert abs(normalized_tf(2, 10.0, 10.0) - 1.375) <= 1e-12


def test_bm25_params_validation():
    with pytest.raises(ValueError):
        Bm25Params(k1=-1)
    with pytest.raises(ValueError):
        Bm25Params(b=1.5)


def test_bm25_examples():
    fwd = index_docs([["a", "b", "b"], ["c"], ["a", "c", "c", "d"]])
    assert bm25(["zzz", "d"], 0, fwd) == 0.0
    # single-term query: the IDF cancels
    tf_b = normalized_tf(2, 3, fwd.avg_len)
    assert bm25(["b"], 0, fwd) == pytest.approx(tf_b, abs=1e-12)


def test_bm25_empty_query_warns():
    fwd = index_docs([["a"]])
    with pytest.warns(EmptyQueryWarning):
        assert bm25([], 0, fwd) == 0.0


def test_bm25_matches_oracle(rng):
    docs = random_docs(rng, 60, 40)
    fwd = index_docs(docs)
    for _ in range(100):
        q = [f"w{t}" for t in rng.integers(0, 45, size=int(rng.integers(1, 6)))]
        d = int(rng.integers(0, 60))
        assert bm25(q, d, fwd) == pytest.approx(oracles.bm25(q, docs[d], docs), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_bm25_monotone_in_tf(seed):
    """Raising one term's TF in a document never lowers its score (collection fixed)."""
    rng = np.random.default_rng(seed)
    docs = random_docs(rng, 12, 15)
    fwd = index_docs(docs)
    doc = int(rng.integers(0, len(docs)))
    ids, tf = fwd.doc_terms(doc)
    j = int(rng.integers(0, len(ids)))
    params = Bm25Params(float(rng.uniform(0, 3)), float(rng.uniform(0, 1)))
    length = float(fwd.lengths[doc])
    base = normalized_tf(float(tf[j]), length, fwd.avg_len, params)
    bumped = normalized_tf(float(tf[j]) + 1, length + 1, fwd.avg_len, params)
    assert bumped >= base - 1e-12


# -- TF-IDF cosine -------------------------------------------------------

def test_cosine_examples():
    v = SparseVector(np.array([1, 3]), np.array([0.5, 2.0]))
    assert tfidf_cosine(v, v) == pytest.approx(1.0, abs=1e-9)
    assert tfidf_cosine(v, SparseVector(np.array([0, 2]), np.array([1.0, 1.0]))) == 0.0
    q = SparseVector.from_dict({0: 1.0})
    d = SparseVector.from_dict({0: 1.0, 1: 1.0})
    assert tfidf_cosine(q, d) == pytest.approx(1 / math.sqrt(2), abs=1e-6)
    assert tfidf_cosine(SparseVector.from_dict({}), d) == 0.0


def test_cosine_matches_oracle(rng):
    docs = random_docs(rng, 40, 30)
    fwd = index_docs(docs)
    for _ in range(50):
        q = [f"w{t}" for t in rng.integers(0, 35, size=int(rng.integers(1, 6)))]
        d = int(rng.integers(0, 40))
        got = tfidf_cosine(query_tfidf_vector(q, fwd.vocab), doc_tfidf_vector(d, fwd))
        assert got == pytest.approx(oracles.tfidf_cosine(q, docs[d], docs), abs=1e-12)


# -- embeddings ----------------------------------------------------------

def test_embed_average_examples():
    emb = EmbeddingSet(["u", "v"], [[1.0, 2.0], [3.0, -1.0]])
    assert np.allclose(embed_average(["u"], emb, {"u": 1.0}), [1.0, 2.0])
    assert np.allclose(embed_average(["x", "y"], emb, {"x": 1.0}), [0.0, 0.0])
    w = 0.7
    assert np.allclose(embed_average(["u", "v"], emb, {"u": w, "v": w}), w * (emb["u"] + emb["v"]) / 2)


def test_embed_cosine_examples():
    v = np.array([0.3, -2.0, 1.0])
    assert embed_cosine(v, v) == pytest.approx(1.0)
    assert embed_cosine(v, -v) == pytest.approx(-1.0)
    assert embed_cosine([1, 0], [0, 1]) == 0.0
    assert embed_cosine([0, 0], [0, 1]) == 0.0
    with pytest.raises(ValueError):
        embed_cosine([1, 0], [1, 0, 0])


def test_embedding_file_round_trip(tmp_path):
    emb = EmbeddingSet(["a", "b"], [[0.1, 0.2], [1e-17, -3.5]])
    emb.save_text(tmp_path / "e.txt")
    back = load_embeddings(tmp_path / "e.txt")
    assert back.terms == emb.terms and np.array_equal(back.vectors, emb.vectors)
    (tmp_path / "h.txt").write_text("a 1 2\nb 3 4\n")
    assert load_embeddings(tmp_path / "h.txt").dim == 2
    (tmp_path / "bad.txt").write_text("a 1 2\nb 3\n")
    with pytest.raises(ValueError, match="bad.txt:2"):
        load_embeddings(tmp_path / "bad.txt")


# -- Model 1 -------------------------------------------------------------

def test_model1_hand_value():
    fwd = index_docs([["a1", "a2"], ["q"] * 49 + ["z"] * 51])
    table = TranslationTable.from_terms({"a1": {"q": 0.4, "x": 0.6}, "a2": {"q": 0.2, "y": 0.8}})
    ctx = build_query_context(["q"], table, fwd.vocab, lam=0.1)
    # P(q|C) from collection frequencies: 49 of 102 tokens; force 0.01 to match the worked example
    ctx.coll_prob[:] = 0.01
    assert model1_log_score(ctx, 0, fwd) == pytest.approx(math.log(0.271), abs=1e-9)


def test_model1_degenerate_cases():
    fwd = index_docs([["w"]])
    table = TranslationTable.from_terms({"w": {"w": 1.0}})
    assert model1_log_score(build_query_context(["w"], table, fwd.vocab, lam=0.0), 0, fwd) == 0.0
    # lambda = 0, term unknown to table and collection: clamped at the OOV floor
    ctx = build_query_context(["zz"], table, fwd.vocab, lam=0.0)
    assert model1_log_score(ctx, 0, fwd) == pytest.approx(math.log(OOV_PROB))


def test_query_context_structure():
    fwd = index_docs([["a", "b"], ["c"]])
    table = TranslationTable.from_terms({"a": {"q": 0.5, "r": 0.5}, "b": {"q": 1.0}})
    ctx = build_query_context(["q", "nope", "q"], table, fwd.vocab, lam=0.2)
    assert ctx.entries(fwd.vocab.get("a")) == [(0, 0.5), (2, 0.5)]
    assert ctx.entries(fwd.vocab.get("b")) == [(0, 1.0), (2, 1.0)]
    assert ctx.entries(fwd.vocab.get("c")) == []
    assert np.all(ctx.coll_prob == OOV_PROB)
    with pytest.raises(ValueError):
        build_query_context(["q"], table, fwd.vocab, lam=1.0)


def test_model1_matches_oracle(rng):
    docs = random_docs(rng, 80, 60)
    fwd = index_docs(docs)
    table = random_table(rng, 60, extra_terms=10)
    rows = table_dict(table)
    for _ in range(100):
        q = [f"w{t}" for t in rng.integers(0, 75, size=int(rng.integers(1, 6)))]
        d = int(rng.integers(0, 80))
        lam = float(rng.uniform(0, 0.9))
        got = model1_log_score(build_query_context(q, table, fwd.vocab, lam), d, fwd)
        assert abs(got - oracles.model1(q, docs[d], docs, rows, lam)) <= 1e-10


def test_model1_empty_doc_and_query():
    fwd = index_docs([[], ["a"]])
    table = TranslationTable.from_terms({"a": {"a": 1.0}})
    with pytest.raises(ValueError):
        model1_log_score(build_query_context(["a"], table, fwd.vocab), 0, fwd)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert model1_log_score(build_query_context([], table, fwd.vocab), 1, fwd) == 0.0
    assert any(issubclass(x.category, EmptyQueryWarning) for x in w)


# -- combination ---------------------------------------------------------

def test_combined_score():
    assert combined_score(ModelWeights(0.7, 0.3), 0.5, -2.0) == pytest.approx(-0.25, abs=1e-12)
    assert combined_score(ModelWeights(1, 0), 0.4, -9.0) == 0.4
    assert combined_score(ModelWeights(0, 1), 0.4, -9.0) == -9.0
    with pytest.raises(ValueError):
        ModelWeights(0, 0)
    with pytest.raises(ValueError):
        combined_score(ModelWeights(), float("nan"), 0.0)


@given(st.floats(0.01, 100), st.floats(-5, 5), st.floats(-5, 5), st.floats(-50, 0), st.floats(-50, 0))
def test_positive_scaling_preserves_order(c, w1, w2, m1, m2):
    if w1 == 0 and w2 == 0:
        return
    w = ModelWeights(w1, w2)
    ws = ModelWeights(c * w1, c * w2)
    a, b = combined_score(w, 0.3, m1), combined_score(w, 0.6, m2)
    sa, sb = combined_score(ws, 0.3, m1), combined_score(ws, 0.6, m2)
    if abs(a - b) > 1e-9 * max(1.0, abs(a), abs(b)):
        assert (a > b) == (sa > sb)
