import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import index_docs, random_table
from knnrank.knn import BruteForceIndex, RankedList
from knnrank.pipeline import (TrainingError, TrainingPool, build_training_pool, coordinate_ascent,
                              pool_metrics, retrieve_then_rerank)
from knnrank.similarity import ModelWeights
from knnrank.spaces import Bm25Space, CombinedSpace, DenseCosineSpace, Model1Space


def make_pool(groups):
    """groups: list of (features list, index of the positive)."""
    offsets, feats, labels, docs = [0], [], [], []
    for f, pos in groups:
        f = np.asarray(f, dtype=float)
        feats.append(f)
        lab = np.zeros(len(f), dtype=np.int8)
        lab[pos] = 1
        labels.append(lab)
        docs.append(np.arange(len(f)))
        offsets.append(offsets[-1] + len(f))
    return TrainingPool([f"q{i}" for i in range(len(groups))], np.array(offsets), np.concatenate(docs),
                        np.concatenate(labels), np.vstack(feats))


def _slow_metrics(pool, w):
    p1, rr = [], []
    for i in range(len(pool)):
        g = pool.group(i)
        s = pool.features[g] @ np.asarray(w, float)
        order = sorted(range(len(s)), key=lambda j: (-s[j], pool.doc_ids[g][j]))
        rank = [pool.labels[g][j] for j in order].index(1) + 1
        p1.append(rank == 1)
        rr.append(1 / rank)
    return float(np.mean(p1)), float(np.mean(rr))


def test_pool_metrics_hand_counts(rng):
    groups = []
    for _ in range(20):
        f = rng.integers(0, 4, size=(6, 2)).astype(float)
        groups.append((f, int(rng.integers(0, 6))))
    pool = make_pool(groups)
    for w in ([1, 0], [0, 1], [0.5, -0.5], [0.3, 0.7]):
        assert pool_metrics(pool, w) == pytest.approx(_slow_metrics(pool, w), abs=1e-12)


def test_pool_metrics_tie_break():
    # all scores equal: DocId ascending decides, positive at doc 2 ranks third
    pool = make_pool([([[1, 1]] * 4, 2)])
    assert pool_metrics(pool, [1, 0]) == (0.0, pytest.approx(1 / 3))


def test_separable_pool_reaches_full_precision():
    # positive wins on bm25 - model1, loses on either feature alone
    groups = [([[3, 1], [4, 3], [1, 0]], 0), ([[2, 0], [3, 2], [0.5, 0]], 0), ([[5, 2], [6, 4], [1, 1]], 0)]
    pool = make_pool(groups)
    assert pool_metrics(pool, [1, 0])[0] < 1 and pool_metrics(pool, [0, 1])[0] < 1
    res = coordinate_ascent(pool, restarts=5, seed=1)
    assert res.p_at_1 == 1.0 and not res.degenerate
    assert abs(res.weights.w_bm25) + abs(res.weights.w_model1) == pytest.approx(1.0)


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_learned_at_least_single_features(seed):
    rng = np.random.default_rng(seed)
    pool = make_pool([(rng.normal(size=(5, 2)), int(rng.integers(0, 5))) for _ in range(12)])
    res = coordinate_ascent(pool, restarts=3, seed=seed)
    for w in ([1, 0], [0, 1]):
        assert (res.p_at_1, res.mrr) >= pool_metrics(pool, w)
    assert (res.p_at_1, res.mrr) == pytest.approx(pool_metrics(pool, res.weights.as_array()))


def test_training_is_deterministic(rng):
    pool = make_pool([(rng.normal(size=(8, 2)), int(rng.integers(0, 8))) for _ in range(30)])
    assert coordinate_ascent(pool, seed=5) == coordinate_ascent(pool, seed=5)


def test_degenerate_pool_keeps_default_weights():
    pool = make_pool([([[5, 5], [1, 1], [2, 0]], 0), ([[9, 3], [1, 2]], 0)])
    res = coordinate_ascent(pool)
    assert res.degenerate and res.weights == ModelWeights(1.0, 0.0) and res.p_at_1 == 1.0


def test_coordinate_ascent_errors():
    pool = make_pool([([[1, 0], [0, 1]], 0)])
    with pytest.raises(ValueError):
        coordinate_ascent(pool, restarts=0)


def _qa_setup(rng):
    docs = [["w0", "w1"], ["w1", "w2"], ["w2", "w3"], ["w3", "w4"], ["w0", "w4"]]
    fwd = index_docs(docs)
    bm25 = Bm25Space.from_index(fwd)
    m1 = Model1Space(fwd.vocab, fwd.tf_matrix(), random_table(rng, 5))
    return fwd, bm25, CombinedSpace(bm25, m1, ModelWeights(1, 0))


def test_build_training_pool_drops_misses(rng):
    fwd, bm25, comb = _qa_setup(rng)
    queries = {"x": ["w0"], "y": ["w2"], "z": ["zz"]}
    pool = build_training_pool(queries, {"x": 4, "y": 0, "z": 1}, BruteForceIndex(bm25), comb, n=2)
    # "y" retrieves docs 1 and 2, never doc 0; "z" scores all zero so top-2 is docs 0,1
    assert pool.query_ids == ["x", "z"] and pool.dropped == 1
    assert np.array_equal(pool.labels[pool.group(0)], [0, 1])
    assert pool.features.shape == (4, 2)
    with pytest.raises(TrainingError):
        build_training_pool({"y": ["w2"]}, {"y": 0}, BruteForceIndex(bm25), comb, n=2)


def test_rerank_without_scorer_is_retrieval(rng):
    space = DenseCosineSpace(rng.standard_normal((50, 4)))
    idx = BruteForceIndex(space)
    q = rng.standard_normal(4)
    assert np.array_equal(retrieve_then_rerank(q, idx, 20, None, 5).ids, idx.search(q, 5).ids)
    with pytest.raises(ValueError):
        retrieve_then_rerank(q, idx, 5, None, 6)


def test_rerank_results_come_from_pool(rng):
    space = DenseCosineSpace(rng.standard_normal((60, 4)))
    other = DenseCosineSpace(rng.standard_normal((60, 4)))
    idx = BruteForceIndex(space)
    q = rng.standard_normal(4)
    pool = set(idx.search(q, 15).ids.tolist())
    res = retrieve_then_rerank(q, idx, 15, other, 5)
    assert set(res.ids.tolist()) <= pool and res.is_well_formed()
    # with full depth, reranking equals searching with the rerank scorer
    full = retrieve_then_rerank(q, idx, 60, other, 5)
    assert np.array_equal(full.ids, BruteForceIndex(other).search(q, 5).ids)
