"""Seeded synthetic collections for tests, benchmarks and demos.

* :func:`sparse_collection` - topical bag-of-words documents and queries.
* :func:`dense_collection` - IDF-free averages of random word vectors drawn
  from a low-rank (rank ``rank`` plus isotropic noise) embedding table.
* :func:`qa_corpus` - QA pairs where questions restate answer concepts with
  paraphrase terms that never occur in answers, so a term-matching model
  misses them and a translation model can learn them.
"""

from __future__ import annotations

import numpy as np

from .text import QaPair


def _zipf(n: int, s: float = 1.0) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def _topics(rng, n_topics: int, pool: int, size: int) -> np.ndarray:
    return np.stack([rng.choice(pool, size=size, replace=False) for _ in range(n_topics)])


def sparse_collection(n_docs: int, n_queries: int, vocab_size: int = 20000, n_topics: int = 500,
                      topic_size: int = 100, doc_len: int = 30, query_len: int = 6,
                      topic_share: float = 0.9, seed: int = 0) -> tuple[list[list[str]], list[list[str]]]:
    """Documents and queries as term lists over terms ``t0 .. t{vocab_size-1}``.

    Each text picks one topic; a ``topic_share`` fraction of its tokens come
    from that topic's terms (Zipf-weighted), the rest from a Zipf background.
    """
    rng = np.random.default_rng(seed)
    topics = _topics(rng, n_topics, vocab_size, topic_size)
    back = _zipf(vocab_size)
    inner = _zipf(topic_size, 0.8)
    names = np.array([f"t{i}" for i in range(vocab_size)], dtype=object)

    def texts(n, mean_len, min_len):
        lens = np.maximum(min_len, rng.poisson(mean_len, size=n))
        tops = rng.integers(0, n_topics, size=n)
        total = int(lens.sum())
        from_topic = rng.random(total) < topic_share
        topic_tok = topics[np.repeat(tops, lens), rng.choice(topic_size, size=total, p=inner)]
        back_tok = rng.choice(vocab_size, size=total, p=back)
        tok = np.where(from_topic, topic_tok, back_tok)
        bounds = np.concatenate(([0], np.cumsum(lens)))
        return [names[tok[bounds[i]:bounds[i + 1]]].tolist() for i in range(n)]

    return texts(n_docs, doc_len, 3), texts(n_queries, query_len, 1)


def dense_collection(n: int, n_queries: int, dim: int = 100, n_words: int = 5000, rank: int = 20,
                     noise: float = 0.3, words_per_doc: int = 20, n_topics: int = 100,
                     topic_size: int = 200, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Averaged-embedding style vectors (data, queries), not normalized.

    Half of each text's words come from one topic, half from a Zipf
    background; word vectors are ``G @ A / sqrt(rank) + noise * N(0, 1)``.
    """
    rng = np.random.default_rng(seed)
    if rank > 0:
        words = rng.standard_normal((n_words, rank)) @ rng.standard_normal((rank, dim)) / np.sqrt(rank)
        words += noise * rng.standard_normal((n_words, dim))
    else:
        words = rng.standard_normal((n_words, dim))
    topics = _topics(rng, n_topics, n_words, topic_size)
    back = _zipf(n_words)
    half = words_per_doc // 2

    def vectors(m):
        out = np.empty((m, dim))
        for lo in range(0, m, 10000):
            hi = min(m, lo + 10000)
            k = hi - lo
            tops = rng.integers(0, n_topics, size=k)
            w1 = topics[tops[:, None], rng.integers(0, topic_size, size=(k, half))]
            w2 = rng.choice(n_words, size=(k, words_per_doc - half), p=back)
            out[lo:hi] = words[np.concatenate([w1, w2], axis=1)].mean(axis=1)
        return out

    return vectors(n), vectors(n_queries)


def qa_corpus(n_pairs: int = 5000, split_sizes: dict[str, int] | None = None, n_concepts: int = 3000,
              n_topics: int = 60, concepts_per_topic: int = 80, n_background: int = 1500,
              focus: int = 6, asked: int = 3, paraphrase_prob: float = 0.6,
              seed: int = 0) -> list[QaPair]:
    """QA pairs with controlled vocabulary mismatch.

    Concept ``c`` is written ``a<c>`` in answers and, with probability
    ``paraphrase_prob`` per mention, ``q<c>`` in questions.  An answer mentions
    ``focus`` concepts of its topic (repeated), other topic concepts and
    background words; its question asks about ``asked`` of the focus concepts.
    """
    rng = np.random.default_rng(seed)
    if split_sizes is None:
        split_sizes = {"tran": int(n_pairs * 0.6), "train": int(n_pairs * 0.2),
                       "dev": int(n_pairs * 0.1)}
        split_sizes["test"] = n_pairs - sum(split_sizes.values())
    if sum(split_sizes.values()) != n_pairs:
        raise ValueError("split sizes must add up to n_pairs")
    topics = _topics(rng, n_topics, n_concepts, concepts_per_topic)
    inner = _zipf(concepts_per_topic, 0.7)
    back = _zipf(n_background)
    splits = np.concatenate([[s] * c for s, c in split_sizes.items()])
    splits = splits[rng.permutation(n_pairs)]
    pairs = []
    for i in range(n_pairs):
        t = rng.integers(n_topics)
        concepts = topics[t, rng.choice(concepts_per_topic, size=focus, replace=False, p=inner)]
        answer = []
        for c in concepts:
            answer += [f"a{c}"] * int(rng.integers(1, 4))
        others = topics[t, rng.choice(concepts_per_topic, size=int(rng.integers(6, 14)), p=inner)]
        answer += [f"a{c}" for c in others]
        answer += [f"b{w}" for w in rng.choice(n_background, size=int(rng.integers(8, 20)), p=back)]
        rng.shuffle(answer)
        question = []
        for c in rng.choice(concepts, size=asked, replace=False):
            question.append(f"q{c}" if rng.random() < paraphrase_prob else f"a{c}")
        question += [f"b{w}" for w in rng.choice(n_background, size=int(rng.integers(2, 5)), p=back)]
        rng.shuffle(question)
        pairs.append(QaPair(f"p{i}", str(splits[i]), " ".join(question), " ".join(answer)))
    return pairs
