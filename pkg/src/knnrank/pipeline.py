"""Retrieve-then-rerank and learning of the BM25 + Model 1 weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .knn.base import KnnIndex
from .knn.ranked import RankedList
from .similarity import ModelWeights
from .spaces import CombinedSpace, Space

log = logging.getLogger(__name__)

DEFAULT_POOL_DEPTH = 500
DEFAULT_TRAIN_N = 15
DEFAULT_RESTARTS = 10
# candidate coordinate values: 0 and +/- 2^e
WEIGHT_GRID = np.concatenate(([0.0], 2.0 ** np.arange(-10, 11), -(2.0 ** np.arange(-10, 11))))


class TrainingError(ValueError):
    pass


def retrieve_then_rerank(query, retriever: KnnIndex, pool_depth: int, rerank: Space | None,
                         n: int, rerank_query=None) -> RankedList:
    """Fetch ``pool_depth`` candidates, rescore them, keep the best ``n``.

    ``rerank_query`` is the query as the rerank space expects it (for example
    lemmas when the retriever works on original terms); defaults to ``query``.
    """
    if n > pool_depth:
        raise ValueError(f"n={n} exceeds pool depth {pool_depth}")
    pool = retriever.search(query, pool_depth)
    if rerank is None or len(pool) == 0:
        return pool.top(n)
    q = rerank.prepare(query if rerank_query is None else rerank_query)
    return RankedList.from_scores(pool.ids, rerank.score(q, pool.ids), n)


@dataclass
class TrainingPool:
    """Per-query candidate groups with binary labels and [bm25, model1] features."""

    query_ids: list[str]
    offsets: np.ndarray
    doc_ids: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.query_ids)

    def group(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))


def build_training_pool(queries: Mapping[str, Sequence[str]], qrels: Mapping[str, int],
                        retriever: KnnIndex, features: CombinedSpace,
                        n: int = DEFAULT_TRAIN_N) -> TrainingPool:
    """Top-``n`` candidates per query; queries whose answer was missed are dropped."""
    qids, offsets, docs, labels, feats = [], [0], [], [], []
    dropped = 0
    for qid, terms in queries.items():
        relevant = qrels[qid]
        cands = retriever.search(terms, n)
        if relevant not in cands.ids:
            dropped += 1
            continue
        f = features.features(features.prepare(terms), cands.ids)
        qids.append(qid)
        docs.append(cands.ids)
        labels.append((cands.ids == relevant).astype(np.int8))
        feats.append(f)
        offsets.append(offsets[-1] + len(cands))
    if not qids:
        raise TrainingError("no query retrieved its relevant answer; training pool is empty")
    log.info("training pool: %d queries kept, %d dropped", len(qids), dropped)
    return TrainingPool(qids, np.array(offsets), np.concatenate(docs), np.concatenate(labels),
                        np.vstack(feats), dropped)


def pool_metrics(pool: TrainingPool, w) -> tuple[float, float]:
    """(P@1, MRR) of the positives when candidates are ranked by ``features @ w``.

    Ties are broken by DocId ascending, as in every ranked list.
    """
    scores = pool.features @ np.asarray(w, dtype=np.float64)
    n_q = len(pool)
    group = np.repeat(np.arange(n_q), np.diff(pool.offsets))
    pos = np.flatnonzero(pool.labels == 1)
    pos_score = scores[pos][group]
    pos_doc = pool.doc_ids[pos][group]
    beats = (scores > pos_score) | ((scores == pos_score) & (pool.doc_ids < pos_doc))
    rank = 1 + np.bincount(group, weights=beats, minlength=n_q)
    return float(np.mean(rank == 1)), float(np.mean(1.0 / rank))


@dataclass(frozen=True)
class TrainedWeights:
    weights: ModelWeights
    p_at_1: float
    mrr: float
    degenerate: bool = False


def _is_degenerate(pool: TrainingPool) -> bool:
    """True when every positive strictly beats its rivals on both features."""
    for i in range(len(pool)):
        g = pool.group(i)
        f, lab = pool.features[g], pool.labels[g]
        others = f[lab == 0]
        if len(others) and not np.all(f[lab == 1][0] > others.max(axis=0)):
            return False
    return True


def _normalize(w: np.ndarray) -> np.ndarray:
    return w / np.abs(w).sum()


def _ascend(pool: TrainingPool, w: np.ndarray, grid: np.ndarray, max_cycles: int = 100):
    w = _normalize(w)
    best = pool_metrics(pool, w)
    for _ in range(max_cycles):
        improved = False
        for i in range(len(w)):
            for g in grid:
                cand = w.copy()
                cand[i] = g
                if not np.any(cand):
                    continue
                m = pool_metrics(pool, cand)
                if m > best:
                    best, w, improved = m, _normalize(cand), True
        if not improved:
            break
    return w, best


def coordinate_ascent(pool: TrainingPool, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                      grid: np.ndarray = WEIGHT_GRID) -> TrainedWeights:
    """Maximize pool P@1 (ties: higher MRR, then the earlier solution).

    Both single-feature weightings are evaluated up front, then each restart
    runs per-coordinate line searches over ``grid`` from a random start until
    a full cycle brings no improvement.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if len(pool) == 0:
        raise TrainingError("empty training pool")
    if _is_degenerate(pool):
        p1, mrr = pool_metrics(pool, [1.0, 0.0])
        return TrainedWeights(ModelWeights(1.0, 0.0), p1, mrr, degenerate=True)
    best_w, best = None, (-1.0, -1.0)
    for w0 in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        m = pool_metrics(pool, w0)
        if m > best:
            best_w, best = w0, m
    rng = np.random.default_rng(seed)
    for r in range(restarts):
        start = rng.uniform(-1.0, 1.0, size=2)
        while not np.any(np.abs(start) > 1e-6):
            start = rng.uniform(-1.0, 1.0, size=2)
        w, m = _ascend(pool, start, grid)
        log.debug("restart %d: P@1=%.4f MRR=%.4f w=%s", r, m[0], m[1], w)
        if m > best:
            best_w, best = w, m
    return TrainedWeights(ModelWeights(float(best_w[0]), float(best_w[1])), best[0], best[1])
