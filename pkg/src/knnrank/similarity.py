"""Reference (per query, per document) implementations of the similarity models.

These are the readable definitions.  ``knnrank.spaces`` holds the vectorized
scorers used by the search code and is tested against the functions here.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

if TYPE_CHECKING:
    from .forward_index import ForwardIndex, Vocabulary
    from .model1 import TranslationTable

OOV_PROB = 1e-9


class EmptyQueryWarning(UserWarning):
    """A query had no usable terms; its score is defined as 0."""


def warn_empty_query() -> None:
    warnings.warn("empty query scored as 0", EmptyQueryWarning, stacklevel=3)


# -- IDF / BM25 ----------------------------------------------------------

def idf(D: int, d: int) -> float:
    """Lucene-style IDF: ``ln(1 + (D - d + 0.5) / (d + 0.5))``."""
    if d < 1 or d > D:
        raise ValueError(f"idf requires 1 <= d <= D, got D={D}, d={d}")
    return math.log1p((D - d + 0.5) / (d + 0.5))


def idf_array(D: int, d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 1) or np.any(d > D):
        raise ValueError("idf requires 1 <= d <= D")
    return np.log1p((D - d + 0.5) / (d + 0.5))


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


def normalized_tf(tf, doc_len, avg_len, params: Bm25Params = Bm25Params()):
    """Saturating, length-normalized term frequency used by BM25."""
    k1, b = params.k1, params.b
    return tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len / avg_len))


def bm25(query: Sequence[str], doc: int, index: "ForwardIndex",
         params: Bm25Params = Bm25Params()) -> float:
    """BM25 of ``doc`` for ``query`` divided by the sum of query-term IDFs.

    Query terms are counted with multiplicity.  Terms missing from the
    vocabulary cannot match and are left out of the normalizer too.
    """
    ids, tfs = index.doc_terms(doc)
    if not query:
        warn_empty_query()
        return 0.0
    vocab = index.vocab
    doc_tf = dict(zip(ids.tolist(), tfs.tolist()))
    doc_len = float(index.lengths[doc])
    total = 0.0
    idf_sum = 0.0
    for term in query:
        t = vocab.get(term)
        if t < 0:
            continue
        w = idf(vocab.n_docs, int(vocab.doc_freq[t]))
        idf_sum += w
        tf = doc_tf.get(t)
        if tf:
            total += w * normalized_tf(tf, doc_len, index.avg_len, params)
    if idf_sum == 0.0:
        return 0.0
    return total / idf_sum


# -- sparse vectors / TF-IDF cosine --------------------------------------

@dataclass(frozen=True)
class SparseVector:
    ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.ids) != len(self.values):
            raise ValueError("ids and values differ in length")

    def __len__(self) -> int:
        return len(self.ids)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    @classmethod
    def from_dict(cls, d: Mapping[int, float]) -> "SparseVector":
        keys = sorted(d)
        return cls(np.array(keys, dtype=np.int64), np.array([d[k] for k in keys], dtype=np.float64))


def query_tfidf_vector(query: Sequence[str], vocab: "Vocabulary") -> SparseVector:
    ids = vocab.lookup(query)
    ids = ids[ids >= 0]
    uniq, tf = np.unique(ids, return_counts=True)
    return SparseVector(uniq, tf * idf_array(vocab.n_docs, vocab.doc_freq[uniq]))


def tfidf_cosine(qv: SparseVector, dv: SparseVector) -> float:
    if len(qv) == 0 or len(dv) == 0:
        return 0.0
    nq, nd = qv.norm(), dv.norm()
    if nq == 0.0 or nd == 0.0:
        return 0.0
    _, iq, id_ = np.intersect1d(qv.ids, dv.ids, assume_unique=True, return_indices=True)
    return float(np.dot(qv.values[iq], dv.values[id_]) / (nq * nd))


# -- embeddings ----------------------------------------------------------

class EmbeddingSet:
    """Term -> dense vector lookup of fixed dimension."""

    def __init__(self, terms: Sequence[str], vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(terms):
            raise ValueError("need one row per term")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        self.terms = list(terms)
        self.vectors = vectors
        self.index = {t: i for i, t in enumerate(self.terms)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def __getitem__(self, term: str) -> np.ndarray:
        return self.vectors[self.index[term]]

    def save_text(self, path: str | Path) -> None:
        from .binio import atomic_write_text
        lines = [f"{len(self.terms)} {self.dim}\n"]
        for t, v in zip(self.terms, self.vectors):
            lines.append(t + " " + " ".join(repr(float(x)) for x in v) + "\n")
        atomic_write_text(path, "".join(lines))


def load_embeddings(path: str | Path) -> EmbeddingSet:
    """Read ``term v1 ... vm`` lines, with an optional ``count dim`` header."""
    terms: list[str] = []
    rows: list[list[float]] = []
    dim = None
    with open(path, encoding="utf-8", errors="replace") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            if dim is None:
                dim = len(vec)
            if len(vec) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            terms.append(parts[0])
            rows.append(vec)
    if dim is None:
        raise ValueError(f"{path}: no embeddings found")
    return EmbeddingSet(terms, np.array(rows, dtype=np.float64).reshape(len(rows), dim))


def embed_average(terms: Sequence[str], emb: EmbeddingSet,
                  idf_weights: Mapping[str, float] | Callable[[str], float | None]) -> np.ndarray:
    """IDF-weighted sum of term vectors over the number of contributing terms.

    Terms without a vector or without a weight are skipped.
    """
    get = idf_weights if callable(idf_weights) else idf_weights.get
    acc = np.zeros(emb.dim)
    n = 0
    for t in terms:
        row = emb.index.get(t)
        if row is None:
            continue
        w = get(t)
        if w is None:
            continue
        acc += w * emb.vectors[row]
        n += 1
    return acc / n if n else acc


def embed_cosine(q, d) -> float:
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q.shape != d.shape:
        raise ValueError(f"dimension mismatch: {q.shape} vs {d.shape}")
    nq, nd = np.linalg.norm(q), np.linalg.norm(d)
    if nq == 0.0 or nd == 0.0:
        return 0.0
    return float(np.clip(np.dot(q, d) / (nq * nd), -1.0, 1.0))


# -- IBM Model 1 ---------------------------------------------------------

@dataclass
class QueryContext:
    """Per-query state for Model 1 scoring.

    ``translations`` is the query-local inverted index: a CSR matrix whose
    row ``a`` (answer TermId) lists ``(query position, T(q|a))``.
    ``table_ids`` maps each position to the translation table lexicon
    (``-1`` when the table has no entries for that term).
    """

    terms: list[str]
    term_ids: np.ndarray
    idf: np.ndarray
    idf_sum: float
    translations: sp.csr_matrix
    table_ids: np.ndarray
    coll_prob: np.ndarray
    lam: float
    oov_prob: float = OOV_PROB

    def __len__(self) -> int:
        return len(self.terms)

    def entries(self, answer_term: int) -> list[tuple[int, float]]:
        m = self.translations
        lo, hi = m.indptr[answer_term], m.indptr[answer_term + 1]
        return list(zip(m.indices[lo:hi].tolist(), m.data[lo:hi].tolist()))


def build_query_context(query: Sequence[str], table: "TranslationTable", stats: "Vocabulary",
                        lam: float = 0.1, oov_prob: float = OOV_PROB) -> QueryContext:
    if not 0.0 <= lam < 1.0:
        raise ValueError("lambda must satisfy 0 <= lambda < 1")
    terms = list(query)
    term_ids = stats.lookup(terms)
    known = term_ids >= 0
    idfs = np.zeros(len(terms))
    if known.any():
        idfs[known] = idf_array(stats.n_docs, stats.doc_freq[term_ids[known]])
    coll = np.full(len(terms), oov_prob)
    if known.any():
        coll[known] = stats.coll_freq[term_ids[known]] / stats.n_tokens
    table_ids = np.array([table.term_id(t) for t in terms], dtype=np.int64)
    to_vocab = table.lexicon_to_vocab(stats)
    rows, cols, vals = [], [], []
    for pos, tid in enumerate(table_ids):
        if tid < 0:
            continue
        src, prob = table.column(tid)
        src_v = to_vocab[src]
        keep = src_v >= 0
        rows.append(src_v[keep])
        cols.append(np.full(int(keep.sum()), pos, dtype=np.int64))
        vals.append(prob[keep])
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    mat = sp.csr_matrix((v, (r, c)), shape=(len(stats), len(terms)))
    mat.sort_indices()
    return QueryContext(terms, term_ids, idfs, float(idfs.sum()), mat, table_ids, coll, lam, oov_prob)


def model1_log_score(ctx: QueryContext, doc: int, index: "ForwardIndex") -> float:
    """``log P(Q|A) / |Q|`` with one inverted-index lookup per answer term."""
    if len(ctx) == 0:
        warn_empty_query()
        return 0.0
    ids, tfs = index.doc_terms(doc)
    length = float(tfs.sum())
    if length <= 0:
        raise ValueError(f"document {doc} is empty")
    m = ctx.translations
    acc = np.zeros(len(ctx))
    for a, tf in zip(ids, tfs):
        lo, hi = m.indptr[a], m.indptr[a + 1]
        if lo != hi:
            acc[m.indices[lo:hi]] += m.data[lo:hi] * (tf / length)
    p = (1.0 - ctx.lam) * acc + ctx.lam * ctx.coll_prob
    p[p <= 0.0] = ctx.oov_prob
    return float(np.log(p).sum() / len(ctx))


# -- linear combination --------------------------------------------------

@dataclass(frozen=True)
class ModelWeights:
    w_bm25: float = 1.0
    w_model1: float = 0.0

    def __post_init__(self):
        if self.w_bm25 == 0.0 and self.w_model1 == 0.0:
            raise ValueError("at least one weight must be nonzero")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_bm25, self.w_model1])


def combined_score(w: ModelWeights, bm25_score: float, m1log: float) -> float:
    if not (math.isfinite(bm25_score) and math.isfinite(m1log)):
        raise ValueError("scores must be finite")
    return w.w_bm25 * bm25_score + w.w_model1 * m1log
