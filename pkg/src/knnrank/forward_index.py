"""Vocabulary, forward index and their binary serialization.

File layout (all integers little-endian)::

    magic "KNRFWD\\0\\0", version <u4>
    field name                      str
    vocabulary terms                str list (TermId order)
    document frequency              <i8 array
    collection frequency            <i8 array
    document external ids           str list (DocId order)
    row pointers                    <i8 array, n_docs + 1
    term ids                        <i4 array
    in-document frequencies         <i4 array
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import binio
from .similarity import SparseVector, idf_array
from .text import QaPair, TextProcessor

MAGIC = b"KNRFWD\x00\x00"
VERSION = 1


class EmptyCorpusError(ValueError):
    pass


@dataclass
class Vocabulary:
    terms: list[str]
    doc_freq: np.ndarray
    coll_freq: np.ndarray
    n_docs: int
    n_tokens: int
    term_ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.term_ids = {t: i for i, t in enumerate(self.terms)}
        if len(self.term_ids) != len(self.terms):
            raise ValueError("duplicate terms in vocabulary")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.term_ids

    def get(self, term: str, default: int = -1) -> int:
        return self.term_ids.get(term, default)

    def lookup(self, terms: Iterable[str]) -> np.ndarray:
        """Term ids, ``-1`` for out-of-vocabulary terms."""
        return np.array([self.term_ids.get(t, -1) for t in terms], dtype=np.int64)

    def idf(self) -> np.ndarray:
        return idf_array(self.n_docs, self.doc_freq)

    def coll_prob(self) -> np.ndarray:
        """Maximum-likelihood P(term | collection)."""
        return self.coll_freq / max(self.n_tokens, 1)

    def terms_by_frequency(self) -> np.ndarray:
        """Term ids ordered by collection frequency desc, then TermId asc."""
        return np.lexsort((np.arange(len(self.terms)), -self.coll_freq))


class ForwardIndex:
    """Per-document sorted (TermId, frequency) lists plus collection stats."""

    def __init__(self, vocab: Vocabulary, doc_ids: Sequence[str], indptr: np.ndarray,
                 term_ids: np.ndarray, freqs: np.ndarray, field: str = "lemma"):
        self.vocab = vocab
        self.doc_ids = list(doc_ids)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.term_ids = np.asarray(term_ids, dtype=np.int32)
        self.freqs = np.asarray(freqs, dtype=np.int32)
        self.field = field
        csum = np.concatenate(([0], np.cumsum(self.freqs, dtype=np.int64)))
        self.lengths = csum[self.indptr[1:]] - csum[self.indptr[:-1]]
        self.avg_len = float(self.lengths.sum()) / len(self.doc_ids) if self.doc_ids else 0.0
        self._pos = {d: i for i, d in enumerate(self.doc_ids)}
        self._tf_matrix = None

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def doc_index(self, doc_id: str) -> int:
        return self._pos[doc_id]

    def doc_terms(self, doc: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= doc < self.n_docs:
            raise KeyError(f"unknown DocId {doc}")
        lo, hi = self.indptr[doc], self.indptr[doc + 1]
        return self.term_ids[lo:hi], self.freqs[lo:hi]

    def doc_tokens(self, doc: int) -> list[str]:
        """Bag of terms with multiplicity, in TermId order."""
        ids, tf = self.doc_terms(doc)
        terms = self.vocab.terms
        return [terms[t] for t, c in zip(ids, tf) for _ in range(c)]

    def tf_matrix(self) -> sp.csr_matrix:
        """Documents x terms matrix of raw in-document frequencies."""
        if self._tf_matrix is None:
            self._tf_matrix = sp.csr_matrix(
                (self.freqs.astype(np.float64), self.term_ids, self.indptr),
                shape=(self.n_docs, len(self.vocab)))
        return self._tf_matrix

    # -- serialization -------------------------------------------------

    def to_bytes(self) -> bytes:
        f = io.BytesIO()
        binio.write_header(f, MAGIC, VERSION)
        binio.write_str(f, self.field)
        binio.write_str_list(f, self.vocab.terms)
        binio.write_array(f, self.vocab.doc_freq, "i8")
        binio.write_array(f, self.vocab.coll_freq, "i8")
        binio.write_str_list(f, self.doc_ids)
        binio.write_array(f, self.indptr, "i8")
        binio.write_array(f, self.term_ids, "i4")
        binio.write_array(f, self.freqs, "i4")
        return f.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ForwardIndex":
        f = io.BytesIO(data)
        binio.read_header(f, MAGIC, VERSION)
        fld = binio.read_str(f)
        terms = binio.read_str_list(f)
        df = binio.read_array(f, "i8")
        cf = binio.read_array(f, "i8")
        doc_ids = binio.read_str_list(f)
        indptr = binio.read_array(f, "i8")
        term_ids = binio.read_array(f, "i4")
        freqs = binio.read_array(f, "i4")
        if len(df) != len(terms) or len(cf) != len(terms) or len(indptr) != len(doc_ids) + 1:
            raise binio.FormatError("inconsistent forward index sections")
        vocab = Vocabulary(terms, df, cf, len(doc_ids), int(freqs.astype(np.int64).sum()))
        return cls(vocab, doc_ids, indptr, term_ids, freqs, field=fld)

    def save(self, path: str | Path) -> None:
        binio.atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ForwardIndex":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def index_term_lists(docs: Iterable[tuple[str, list[str]]], field: str = "lemma") -> ForwardIndex:
    """Build a forward index from ``(external id, terms)`` documents.

    TermIds are assigned in first-occurrence order over the stream.
    """
    term_ids: dict[str, int] = {}
    terms: list[str] = []
    doc_ids: list[str] = []
    indptr = [0]
    all_ids: list[np.ndarray] = []
    all_tf: list[np.ndarray] = []
    for ext_id, toks in docs:
        ids = np.empty(len(toks), dtype=np.int64)
        for i, t in enumerate(toks):
            tid = term_ids.get(t)
            if tid is None:
                tid = term_ids[t] = len(terms)
                terms.append(t)
            ids[i] = tid
        uniq, counts = np.unique(ids, return_counts=True)
        all_ids.append(uniq)
        all_tf.append(counts)
        doc_ids.append(ext_id)
        indptr.append(indptr[-1] + len(uniq))
    if not doc_ids:
        raise EmptyCorpusError("empty corpus")
    flat_ids = np.concatenate(all_ids).astype(np.int32)
    flat_tf = np.concatenate(all_tf).astype(np.int32)
    df = np.bincount(flat_ids, minlength=len(terms)).astype(np.int64)
    cf = np.bincount(flat_ids, weights=flat_tf, minlength=len(terms)).astype(np.int64)
    vocab = Vocabulary(terms, df, cf, len(doc_ids), int(flat_tf.astype(np.int64).sum()))
    return ForwardIndex(vocab, doc_ids, np.array(indptr, dtype=np.int64), flat_ids, flat_tf, field=field)


def build_forward_index(corpus: Iterable[QaPair], processor: TextProcessor | None = None,
                        field: str = "lemma") -> tuple[Vocabulary, ForwardIndex]:
    """Index the answer side of every QA pair, one document per pair."""
    processor = processor or TextProcessor()
    fwd = index_term_lists(((p.pair_id, processor.terms(p.answer, field)) for p in corpus), field)
    return fwd.vocab, fwd


def doc_tfidf_vector(doc: int, index: ForwardIndex) -> SparseVector:
    """Unnormalized TF times IDF for one document, sorted by TermId."""
    ids, tf = index.doc_terms(doc)
    weights = idf_array(index.vocab.n_docs, index.vocab.doc_freq[ids])
    return SparseVector(ids.astype(np.int64), tf * weights)
