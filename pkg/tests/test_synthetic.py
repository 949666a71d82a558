import numpy as np

from knnrank.synthetic import dense_collection, qa_corpus, sparse_collection


def test_sparse_collection_seeded():
    a = sparse_collection(50, 5, vocab_size=500, n_topics=10, topic_size=20, seed=1)
    b = sparse_collection(50, 5, vocab_size=500, n_topics=10, topic_size=20, seed=1)
    assert a == b
    docs, queries = a
    assert len(docs) == 50 and len(queries) == 5
    assert all(len(d) >= 3 for d in docs) and all(len(q) >= 1 for q in queries)


def test_dense_collection_shapes():
    x, q = dense_collection(30, 4, dim=8, n_words=100, n_topics=5, topic_size=10, seed=2)
    assert x.shape == (30, 8) and q.shape == (4, 8)
    y, _ = dense_collection(30, 4, dim=8, n_words=100, n_topics=5, topic_size=10, seed=2)
    assert np.array_equal(x, y)


def test_qa_corpus_splits_and_mismatch():
    pairs = qa_corpus(200, seed=3)
    assert len(pairs) == 200 and len({p.pair_id for p in pairs}) == 200
    counts = {s: sum(p.split == s for p in pairs) for s in ("tran", "train", "dev", "test")}
    assert counts == {"tran": 120, "train": 40, "dev": 20, "test": 20}
    # paraphrase terms appear only in questions
    assert not any(w.startswith("q") for p in pairs for w in p.answer.split())
    assert any(w.startswith("q") for p in pairs for w in p.question.split())
    assert pairs == qa_corpus(200, seed=3)
