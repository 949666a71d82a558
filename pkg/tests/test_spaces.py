import numpy as np
import pytest

import oracles
from helpers import index_docs, random_docs, random_table, table_dict
from knnrank.forward_index import doc_tfidf_vector
from knnrank.similarity import (Bm25Params, EmbeddingSet, ModelWeights, bm25, build_query_context,
                                embed_average, model1_log_score, query_tfidf_vector, tfidf_cosine)
from knnrank.spaces import (Bm25Space, CallCounter, CombinedSpace, DenseCosineSpace, EmbedCosineSpace,
                            Model1Space, TfidfCosineSpace, tf_rows)


@pytest.fixture
def corpus(rng):
    docs = random_docs(rng, 50, 30)
    return docs, index_docs(docs)


def _queries(rng, n=20, vocab=35):
    return [[f"w{t}" for t in rng.integers(0, vocab, size=int(rng.integers(1, 6)))] for _ in range(n)]


def test_bm25_space_matches_scalar(corpus, rng):
    docs, fwd = corpus
    params = Bm25Params(0.9, 0.4)
    space = Bm25Space.from_index(fwd, params=params)
    for q in _queries(rng):
        got = space.score(space.prepare(q))
        want = [bm25(q, d, fwd, params) for d in range(len(docs))]
        assert np.allclose(got, want, atol=1e-12)


def test_tfidf_space_matches_scalar(corpus, rng):
    docs, fwd = corpus
    space = TfidfCosineSpace.from_index(fwd)
    for q in _queries(rng):
        qv = query_tfidf_vector(q, fwd.vocab)
        want = [tfidf_cosine(qv, doc_tfidf_vector(d, fwd)) for d in range(len(docs))]
        assert np.allclose(space.score(space.prepare(q)), want, atol=1e-12)


@pytest.mark.parametrize("precompute", [False, True])
def test_model1_space_matches_scalar(corpus, rng, precompute):
    docs, fwd = corpus
    table = random_table(rng, 30, extra_terms=5)
    space = Model1Space(fwd.vocab, fwd.tf_matrix(), table, lam=0.2, precompute=precompute)
    rows = table_dict(table)
    for q in _queries(rng):
        got = space.score(space.prepare(q))
        ctx = build_query_context(q, table, fwd.vocab, 0.2)
        want = [model1_log_score(ctx, d, fwd) for d in range(len(docs))]
        assert np.abs(got - want).max() <= 1e-10
        assert abs(got[3] - oracles.model1(q, docs[3], docs, rows, 0.2)) <= 1e-10


def test_combined_space(corpus, rng):
    docs, fwd = corpus
    table = random_table(rng, 30)
    b = Bm25Space.from_index(fwd)
    m = Model1Space(fwd.vocab, fwd.tf_matrix(), table)
    comb = CombinedSpace(b, m, ModelWeights(0.7, 0.3))
    q = _queries(rng, 1)[0]
    pq = comb.prepare(q)
    f = comb.features(pq)
    assert np.allclose(comb.score(pq), 0.7 * f[:, 0] + 0.3 * f[:, 1], atol=1e-12)
    assert np.allclose(f[:, 0], b.score(b.prepare(q)))


def test_call_counting(corpus, rng):
    _, fwd = corpus
    counter = CallCounter()
    space = Bm25Space.from_index(fwd, counter=counter)
    q = space.prepare(["w1", "w2"])
    space.score(q)
    assert counter.calls == fwd.n_docs
    space.score(q, [3, 4, 5])
    assert counter.calls == fwd.n_docs + 3
    space.score_batch(space.prepare_docs([0, 1]), [7, 8, 9])
    assert counter.calls == fwd.n_docs + 9


def test_derived_space_keeps_statistics(corpus):
    _, fwd = corpus
    space = Bm25Space.from_index(fwd)
    piv = space.derive([np.array([0, 1, 2]), np.array([5])])
    assert piv.n_docs == 2
    assert np.array_equal(piv._idf, space._idf)
    assert piv.counter is space.counter


def test_point_in_query_role(corpus):
    docs, fwd = corpus
    space = Bm25Space.from_index(fwd)
    got = space.score(space.prepare_doc(4))
    assert np.allclose(got, space.score(space.prepare(docs[4])))
    assert np.allclose(space.score_batch(space.prepare_docs([4]))[0], got)


def test_tf_rows():
    from knnrank.forward_index import Vocabulary
    v = Vocabulary(["a", "b", "c"], np.array([1, 1, 1]), np.array([1, 1, 1]), 1, 3)
    m = tf_rows(v, [np.array([0, 0, 2]), np.array([], dtype=np.int64)])
    assert m.toarray().tolist() == [[2, 0, 1], [0, 0, 0]]


def test_dense_cosine_space(rng):
    x = rng.standard_normal((20, 4))
    x[3] = 0
    space = DenseCosineSpace(x)
    q = rng.standard_normal(4)
    got = space.score(space.prepare(q))
    want = [0.0 if not np.any(v) else v @ q / np.linalg.norm(v) / np.linalg.norm(q) for v in x]
    assert np.allclose(got, want)
    with pytest.raises(ValueError):
        space.prepare(np.zeros(3))


def test_embed_space_uses_idf_weights():
    fwd = index_docs([["a", "b"], ["b"], ["c"]])
    emb = EmbeddingSet(["a", "b", "zz"], [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    space = EmbedCosineSpace(fwd, emb)
    idf = dict(zip(fwd.vocab.terms, fwd.vocab.idf()))
    v0 = embed_average(["a", "b"], emb, idf)
    assert np.allclose(space.unit[0], v0 / np.linalg.norm(v0))
    # document without any embedded term is a zero vector
    assert not np.any(space.unit[2])
    # OOV query terms take the IDF of a single-document term
    q = space.prepare(["zz"])
    assert np.allclose(q, np.array([1.0, 1.0]) / np.sqrt(2))
