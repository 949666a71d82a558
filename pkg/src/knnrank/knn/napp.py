"""Neighborhood APProximation (NAPP) pivot index.

Each data point is posted to the pivots it ranks among its
``num_pivot_index`` most similar.  A query ranks the pivots the same way and
takes as candidates the points that appear in at least ``num_pivot_search``
of its top pivots' posting lists.

Orientation: pivots always play the *document* role, while indexed points and
queries play the *query* role, so both sides rank pivots with the same
(possibly asymmetric) similarity.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from ..forward_index import Vocabulary
from ..spaces import DenseCosineSpace, Space
from .base import KnnIndex
from .ranked import RankedList

log = logging.getLogger(__name__)


class ParameterError(ValueError):
    pass


def generate_pivots_sparse(stats: Vocabulary, num_pivots: int, K: int = 1000, M: int = 50000,
                           seed: int = 0, weighted: bool = False) -> list[np.ndarray]:
    """Pseudo-documents of ``K`` distinct terms drawn from the ``M`` most frequent.

    Draws are uniform without replacement; ``weighted=True`` draws
    proportionally to collection frequency instead.
    """
    if num_pivots < 1:
        raise ParameterError("num_pivots must be >= 1")
    if M > len(stats):
        warnings.warn(f"M={M} exceeds vocabulary size {len(stats)}; clamping", stacklevel=2)
        M = len(stats)
    if not 1 <= K <= M:
        raise ParameterError(f"need 1 <= K <= M, got K={K}, M={M}")
    top = stats.terms_by_frequency()[:M]
    p = None
    if weighted:
        p = stats.coll_freq[top].astype(np.float64)
        p /= p.sum()
    rng = np.random.default_rng(seed)
    return [np.sort(rng.choice(top, size=K, replace=False, p=p)) for _ in range(num_pivots)]


def sample_pivots_dense(space: DenseCosineSpace, num_pivots: int, seed: int = 0) -> list[np.ndarray]:
    """Pivots drawn at random from the data points themselves."""
    if not 1 <= num_pivots <= space.n_docs:
        raise ParameterError("num_pivots must be between 1 and the collection size")
    rng = np.random.default_rng(seed)
    ids = np.sort(rng.choice(space.n_docs, size=num_pivots, replace=False))
    return [space.doc_object(int(i)) for i in ids]


def _closest_pivots(scores: np.ndarray, n: int) -> np.ndarray:
    """Per row, the ``n`` highest-scoring pivot indices (ties: lower index)."""
    return np.argsort(-scores, axis=-1, kind="stable")[..., :n]


class NappIndex(KnnIndex):
    method = "napp"

    def __init__(self, space: Space, pivots: list, num_pivot_index: int, num_pivot_search: int,
                 post_indptr: np.ndarray | None = None, post_docs: np.ndarray | None = None):
        super().__init__(space)
        if not 1 <= num_pivot_index <= len(pivots):
            raise ParameterError("num_pivot_index must be between 1 and the number of pivots")
        self.pivots = pivots
        self.num_pivot_index = num_pivot_index
        self.num_pivot_search = num_pivot_search
        self.pivot_space = space.derive(pivots)
        self._check_search_param(num_pivot_search)
        if post_indptr is None:
            post_indptr, post_docs = self._build()
        self.post_indptr = np.asarray(post_indptr, dtype=np.int64)
        self.post_docs = np.asarray(post_docs, dtype=np.int32)

    def _check_search_param(self, nps: int) -> None:
        if not 1 <= nps <= self.num_pivot_index:
            raise ParameterError(
                f"num_pivot_search={nps} must be between 1 and num_pivot_index={self.num_pivot_index}")

    @property
    def num_pivots(self) -> int:
        return len(self.pivots)

    def _build(self, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        n = self.space.n_docs
        npi = self.num_pivot_index
        closest = np.empty((n, npi), dtype=np.int32)
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            queries = self.space.prepare_docs(np.arange(lo, hi))
            scores = self.pivot_space.score_batch(queries)
            closest[lo:hi] = _closest_pivots(scores, npi)
        flat_piv = closest.ravel()
        flat_doc = np.repeat(np.arange(n, dtype=np.int32), npi)
        order = np.argsort(flat_piv, kind="stable")
        counts = np.bincount(flat_piv, minlength=self.num_pivots)
        indptr = np.concatenate(([0], np.cumsum(counts)))
        log.info("NAPP: %d points posted to %d pivots", n, self.num_pivots)
        return indptr, flat_doc[order]

    def posting_list(self, pivot: int) -> np.ndarray:
        return self.post_docs[self.post_indptr[pivot]:self.post_indptr[pivot + 1]]

    def candidates(self, query, num_pivot_search: int | None = None) -> np.ndarray:
        nps = self.num_pivot_search if num_pivot_search is None else num_pivot_search
        self._check_search_param(nps)
        pivot_scores = self.pivot_space.score(query)
        top = _closest_pivots(pivot_scores, self.num_pivot_index)
        lists = [self.posting_list(int(p)) for p in top]
        merged = np.concatenate(lists) if lists else np.zeros(0, dtype=np.int32)
        counts = np.bincount(merged, minlength=self.space.n_docs)
        return np.flatnonzero(counts >= nps)

    def search_prepared(self, query, k: int, num_pivot_search: int | None = None) -> RankedList:
        if k < 1:
            raise ValueError("k must be >= 1")
        cands = self.candidates(query, num_pivot_search)
        if len(cands) == 0:
            return RankedList.empty()
        return RankedList.from_scores(cands, self.space.score(query, cands), k)

    def search(self, query, k: int, num_pivot_search: int | None = None) -> RankedList:
        return self.search_prepared(self.space.prepare(query), k, num_pivot_search)

    def params(self) -> dict:
        return {"num_pivots": self.num_pivots, "num_pivot_index": self.num_pivot_index,
                "num_pivot_search": self.num_pivot_search}


def napp_build(space: Space, pivots: list, num_pivot_index: int, num_pivot_search: int = 1) -> NappIndex:
    return NappIndex(space, pivots, num_pivot_index, num_pivot_search)


def napp_search(index: NappIndex, query, k: int, num_pivot_search: int | None = None) -> RankedList:
    return index.search(query, k, num_pivot_search)
