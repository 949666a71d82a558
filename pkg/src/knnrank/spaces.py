"""Vectorized similarity spaces used as black boxes by the k-NN methods.

A space owns a collection of objects in the *document* role and scores
prepared queries against any subset of them.  Higher scores are better.
Every pairwise evaluation is counted on the space's ``counter`` so that
search methods can be compared by the number of scorer calls they issue.

Collection elements can also be placed in the *query* role
(:meth:`Space.prepare_doc`), which is how the graph and pivot indices compare
data points with each other and with pivots.  :meth:`Space.derive` builds a
space of the same model over a different set of document-role objects
(pivots) while keeping collection statistics such as IDF.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .forward_index import ForwardIndex, Vocabulary
from .model1 import TranslationTable
from .similarity import (
    OOV_PROB,
    Bm25Params,
    EmbeddingSet,
    ModelWeights,
    QueryContext,
    build_query_context,
    embed_average,
    idf_array,
    warn_empty_query,
)


class CallCounter:
    __slots__ = ("calls",)

    def __init__(self) -> None:
        self.calls = 0

    def add(self, n: int) -> None:
        self.calls += int(n)


class Space(ABC):
    """Black-box similarity over a fixed document collection."""

    name = "space"
    field: str | None = None

    def __init__(self, counter: CallCounter | None = None):
        self.counter = counter if counter is not None else CallCounter()

    @property
    @abstractmethod
    def n_docs(self) -> int: ...

    @abstractmethod
    def prepare(self, raw):
        """Turn an external object (term list or vector) into a query."""

    @abstractmethod
    def prepare_doc(self, doc: int):
        """Put collection element ``doc`` in the query role."""

    @abstractmethod
    def _score(self, query, ids: np.ndarray | None) -> np.ndarray: ...

    @abstractmethod
    def derive(self, docs) -> "Space":
        """Same model and statistics over another document-role collection."""

    def score(self, query, ids=None) -> np.ndarray:
        if ids is not None:
            ids = np.asarray(ids, dtype=np.int64)
        out = self._score(query, ids)
        self.counter.add(len(out))
        return out

    def prepare_docs(self, docs: Sequence[int]):
        return [self.prepare_doc(int(d)) for d in docs]

    def score_batch(self, queries, ids=None) -> np.ndarray:
        """Score every query in a batch from ``prepare_docs``; rows are queries."""
        rows = [self.score(q, ids) for q in queries]
        n = self.n_docs if ids is None else len(ids)
        return np.vstack(rows) if rows else np.zeros((0, n))

    def doc_object(self, doc: int):
        """External representation of a collection element (dense spaces)."""
        raise NotImplementedError(f"{self.name} has no external document objects")


# -- sparse bag-of-words spaces ------------------------------------------

def tf_rows(vocab: Vocabulary, bags: Sequence[Sequence[int]] | sp.csr_matrix) -> sp.csr_matrix:
    """Documents x vocabulary term-count matrix from term-id bags."""
    if sp.issparse(bags):
        return sp.csr_matrix(bags, dtype=np.float64)
    rows, cols = [], []
    for i, bag in enumerate(bags):
        bag = np.asarray(bag, dtype=np.int64)
        rows.append(np.full(len(bag), i, dtype=np.int64))
        cols.append(bag)
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    m = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(len(bags), len(vocab)))
    m.sum_duplicates()
    m.sort_indices()
    return m


def _row_normalize(m: sp.csr_matrix, norms: np.ndarray) -> sp.csr_matrix:
    inv = np.zeros_like(norms)
    nz = norms > 0
    inv[nz] = 1.0 / norms[nz]
    return sp.csr_matrix(sp.diags(inv) @ m)


class SparseSpace(Space):
    """Shared plumbing for models over term-count documents."""

    def __init__(self, vocab: Vocabulary, docs_tf: sp.csr_matrix, field: str | None = None,
                 counter: CallCounter | None = None):
        super().__init__(counter)
        self.vocab = vocab
        self.docs_tf = sp.csr_matrix(docs_tf, dtype=np.float64)
        self.docs_tf.sort_indices()
        self.field = field
        self.lengths = np.asarray(self.docs_tf.sum(axis=1)).ravel()
        self.avg_len = float(self.lengths.mean()) if len(self.lengths) else 0.0
        self._idf = vocab.idf()

    @classmethod
    def from_index(cls, index: ForwardIndex, **kw):
        return cls(index.vocab, index.tf_matrix(), field=index.field, **kw)

    @property
    def n_docs(self) -> int:
        return self.docs_tf.shape[0]

    def query_tf(self, terms: Sequence[str]) -> sp.csr_matrix:
        ids = self.vocab.lookup(terms)
        ids = ids[ids >= 0]
        m = sp.csr_matrix((np.ones(len(ids)), (np.zeros(len(ids), dtype=np.int64), ids)),
                          shape=(1, len(self.vocab)))
        m.sum_duplicates()
        return m

    def doc_bag(self, doc: int) -> list[str]:
        row = self.docs_tf.getrow(doc)
        terms = self.vocab.terms
        return [terms[t] for t, c in zip(row.indices, row.data) for _ in range(int(c))]


class BilinearSpace(SparseSpace):
    """score = <query weights, document weights>, both sparse."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.doc_weights = self._doc_weights(self.docs_tf)
        self._doc_weights_csc = None

    @abstractmethod
    def _doc_weights(self, tf: sp.csr_matrix) -> sp.csr_matrix: ...

    @abstractmethod
    def _query_weights(self, tf: sp.csr_matrix) -> sp.csr_matrix: ...

    def prepare(self, raw: Sequence[str]) -> sp.csr_matrix:
        if len(raw) == 0:
            warn_empty_query()
        return self._query_weights(self.query_tf(raw))

    def prepare_doc(self, doc: int) -> sp.csr_matrix:
        return self._query_weights(self.docs_tf[doc])

    def prepare_docs(self, docs: Sequence[int]) -> sp.csr_matrix:
        return self._query_weights(self.docs_tf[np.asarray(docs, dtype=np.int64)])

    def _score(self, query: sp.csr_matrix, ids):
        if ids is None:
            return np.asarray((self.doc_weights @ query.T).todense()).ravel()
        if len(ids) == 0:
            return np.zeros(0)
        return np.asarray((self.doc_weights[ids] @ query.T).todense()).ravel()

    def score_batch(self, queries: sp.csr_matrix, ids=None) -> np.ndarray:
        docs = self.doc_weights if ids is None else self.doc_weights[np.asarray(ids, dtype=np.int64)]
        out = np.asarray((queries @ docs.T).todense())
        self.counter.add(out.size)
        return out

    def derive(self, docs) -> "BilinearSpace":
        return type(self)(self.vocab, tf_rows(self.vocab, docs), field=self.field,
                          counter=self.counter, **self._extra())

    def _extra(self) -> dict:
        return {}


class Bm25Space(BilinearSpace):
    """BM25 normalized by the sum of query-term IDFs."""

    name = "bm25"

    def __init__(self, vocab, docs_tf, field=None, counter=None, params: Bm25Params = Bm25Params()):
        self.params = params
        super().__init__(vocab, docs_tf, field=field, counter=counter)

    def _extra(self):
        return {"params": self.params}

    def _doc_weights(self, tf):
        k1, b = self.params.k1, self.params.b
        w = tf.copy()
        if w.nnz == 0:
            return w
        row_len = np.repeat(self.lengths, np.diff(w.indptr))
        avg = self.avg_len if self.avg_len > 0 else 1.0
        w.data = w.data * (k1 + 1.0) / (w.data + k1 * (1.0 - b + b * row_len / avg))
        return w

    def _query_weights(self, tf):
        w = sp.csr_matrix(tf.multiply(self._idf[np.newaxis, :]))
        w.sort_indices()
        return _row_normalize(w, np.asarray(w.sum(axis=1)).ravel())


class TfidfCosineSpace(BilinearSpace):
    """Cosine between unnormalized-TF x IDF vectors."""

    name = "tfidf_cosine"

    def _doc_weights(self, tf):
        return self._unit_tfidf(tf)

    def _query_weights(self, tf):
        return self._unit_tfidf(tf)

    def _unit_tfidf(self, tf):
        w = sp.csr_matrix(tf.multiply(self._idf[np.newaxis, :]))
        w.sort_indices()
        norms = np.sqrt(np.asarray(w.multiply(w).sum(axis=1)).ravel())
        return _row_normalize(w, norms)


class Model1Space(SparseSpace):
    """Length-normalized log IBM Model 1 probability of the query given a document.

    With ``precompute=True`` (used for pivot collections) the per-document
    sums ``sum_a T(q|a) P(a|A)`` are materialized for every table target term,
    giving a document-side inverted index keyed by query term.
    """

    name = "model1"

    def __init__(self, vocab, docs_tf, table: TranslationTable, lam: float = 0.1,
                 field=None, counter=None, oov_prob: float = OOV_PROB, precompute: bool = False):
        super().__init__(vocab, docs_tf, field=field, counter=counter)
        if not 0.0 <= lam < 1.0:
            raise ValueError("lambda must satisfy 0 <= lambda < 1")
        self.table = table
        self.lam = lam
        self.oov_prob = oov_prob
        inv = np.zeros_like(self.lengths)
        nz = self.lengths > 0
        inv[nz] = 1.0 / self.lengths[nz]
        self.doc_probs = sp.csr_matrix(sp.diags(inv) @ self.docs_tf)
        self.translated = None
        if precompute:
            self.translated = sp.csc_matrix(self.doc_probs @ self._vocab_table())

    def _vocab_table(self) -> sp.csr_matrix:
        """Vocabulary (answer term) x table lexicon (question term) matrix of T(q|a)."""
        t = self.table
        to_vocab = t.lexicon_to_vocab(self.vocab)
        src = np.repeat(np.arange(len(t.lexicon)), np.diff(t.indptr))
        rows = to_vocab[src]
        keep = rows >= 0
        return sp.csr_matrix((t.probs[keep], (rows[keep], t.targets[keep].astype(np.int64))),
                             shape=(len(self.vocab), len(t.lexicon)))

    def prepare(self, raw: Sequence[str]) -> QueryContext:
        if len(raw) == 0:
            warn_empty_query()
        return build_query_context(raw, self.table, self.vocab, self.lam, self.oov_prob)

    def prepare_doc(self, doc: int) -> QueryContext:
        return build_query_context(self.doc_bag(doc), self.table, self.vocab, self.lam, self.oov_prob)

    def _channel(self, ctx: QueryContext, ids) -> np.ndarray:
        """sum_a T(q|a) P(a|A) for each (document, query position)."""
        if self.translated is not None:
            cols = np.where(ctx.table_ids >= 0, ctx.table_ids, 0)
            m = self.translated if ids is None else self.translated[ids]
            out = np.asarray(m[:, cols].todense())
            out[:, ctx.table_ids < 0] = 0.0
            return out
        m = self.doc_probs if ids is None else self.doc_probs[ids]
        return np.asarray((m @ ctx.translations).todense())

    def _score(self, ctx: QueryContext, ids):
        n = self.n_docs if ids is None else len(ids)
        if len(ctx) == 0 or n == 0:
            return np.zeros(n)
        p = (1.0 - ctx.lam) * self._channel(ctx, ids) + ctx.lam * ctx.coll_prob[np.newaxis, :]
        p[p <= 0.0] = ctx.oov_prob
        return np.log(p).sum(axis=1) / len(ctx)

    def derive(self, docs) -> "Model1Space":
        return Model1Space(self.vocab, tf_rows(self.vocab, docs), self.table, self.lam,
                           field=self.field, counter=self.counter, oov_prob=self.oov_prob,
                           precompute=True)


class CombinedSpace(Space):
    """``w_bm25 * BM25 + w_model1 * Model1`` over the same documents."""

    name = "bm25_model1"

    def __init__(self, bm25: Bm25Space, model1: Model1Space, weights: ModelWeights,
                 counter: CallCounter | None = None):
        super().__init__(counter)
        if bm25.n_docs != model1.n_docs:
            raise ValueError("component spaces index different collections")
        self.bm25 = bm25
        self.model1 = model1
        self.weights = weights
        self.field = bm25.field

    @property
    def n_docs(self) -> int:
        return self.bm25.n_docs

    def prepare(self, raw):
        return (self.bm25.prepare(raw), self.model1.prepare(raw))

    def prepare_doc(self, doc):
        return (self.bm25.prepare_doc(doc), self.model1.prepare_doc(doc))

    def features(self, query, ids=None) -> np.ndarray:
        """(n, 2) matrix of raw BM25 and Model 1 scores; not counted."""
        return np.column_stack([self.bm25._score(query[0], ids), self.model1._score(query[1], ids)])

    def _score(self, query, ids):
        w = self.weights
        out = 0.0
        if w.w_bm25 != 0.0:
            out = w.w_bm25 * self.bm25._score(query[0], ids)
        if w.w_model1 != 0.0:
            out = out + w.w_model1 * self.model1._score(query[1], ids)
        return np.asarray(out, dtype=np.float64)

    def derive(self, docs) -> "CombinedSpace":
        return CombinedSpace(self.bm25.derive(docs), self.model1.derive(docs), self.weights,
                             counter=self.counter)


# -- dense spaces --------------------------------------------------------

def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


class DenseCosineSpace(Space):
    """Cosine similarity between dense vectors (zero vectors score 0)."""

    name = "dense_cosine"

    def __init__(self, vectors, counter: CallCounter | None = None, field: str | None = None):
        super().__init__(counter)
        self.raw = np.asarray(vectors, dtype=np.float64)
        if self.raw.ndim != 2:
            raise ValueError("vectors must be a 2-d array")
        self.unit = np.ascontiguousarray(_unit_rows(self.raw))
        self.field = field

    @property
    def n_docs(self) -> int:
        return self.unit.shape[0]

    @property
    def dim(self) -> int:
        return self.unit.shape[1]

    def prepare(self, raw) -> np.ndarray:
        v = np.asarray(raw, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: expected ({self.dim},), got {v.shape}")
        return _unit_rows(v)

    def prepare_doc(self, doc: int) -> np.ndarray:
        return self.unit[doc]

    def prepare_docs(self, docs) -> np.ndarray:
        return self.unit[np.asarray(docs, dtype=np.int64)]

    def doc_object(self, doc: int) -> np.ndarray:
        return self.raw[doc]

    def _score(self, query, ids):
        m = self.unit if ids is None else self.unit[ids]
        return m @ query

    def score_batch(self, queries, ids=None) -> np.ndarray:
        m = self.unit if ids is None else self.unit[np.asarray(ids, dtype=np.int64)]
        out = np.asarray(queries) @ m.T
        self.counter.add(out.size)
        return out

    def derive(self, docs) -> "DenseCosineSpace":
        return DenseCosineSpace(np.asarray(docs), counter=self.counter, field=self.field)


class EmbedCosineSpace(DenseCosineSpace):
    """Cosine between IDF-weighted averaged word embeddings of term lists.

    Terms absent from the collection vocabulary get the IDF of a term seen in
    a single document.
    """

    name = "embed_cosine"

    def __init__(self, index: ForwardIndex, emb: EmbeddingSet, counter: CallCounter | None = None):
        self.emb = emb
        self.vocab = index.vocab
        idfs = index.vocab.idf()
        self._oov_idf = float(idf_array(index.vocab.n_docs, 1))
        self._idf = {t: float(w) for t, w in zip(index.vocab.terms, idfs)}
        vecs = np.vstack([self.embed(index.doc_tokens(d)) for d in range(index.n_docs)]) \
            if index.n_docs else np.zeros((0, emb.dim))
        super().__init__(vecs, counter=counter, field=index.field)

    def embed(self, terms: Sequence[str]) -> np.ndarray:
        return embed_average(terms, self.emb, lambda t: self._idf.get(t, self._oov_idf))

    def prepare(self, raw) -> np.ndarray:
        if isinstance(raw, np.ndarray):
            return super().prepare(raw)
        return _unit_rows(self.embed(raw))

    def derive(self, docs) -> DenseCosineSpace:
        return DenseCosineSpace(np.asarray(docs), counter=self.counter, field=self.field)
