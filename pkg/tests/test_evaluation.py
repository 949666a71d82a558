import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from knnrank.evaluation import (EvaluationError, evaluate_knn, evaluate_run, format_qrels, format_run,
                                rank_metrics, read_qrels, read_run, recall_at_k)
from knnrank.knn import RankedList


def test_recall_at_k_examples():
    assert recall_at_k([1, 2, 3], [1, 2, 3], 3) == 1.0
    assert recall_at_k([4, 5, 6], [1, 2, 3], 3) == 0.0
    assert recall_at_k([1, 3, 7], [1, 2, 3], 3) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        recall_at_k([1], [1], 0)


def test_recall_accepts_ranked_lists():
    a = RankedList.from_scores([1, 3, 7], [3.0, 2.0, 1.0])
    assert recall_at_k(a, [(1, 0.9), (2, 0.8), (3, 0.7)], 3) == pytest.approx(2 / 3)


def test_rank_metrics_examples():
    m = rank_metrics([5, 6, 7], 5, (1, 2))
    assert (m.p_at_1, m.rr, m.recall) == (1.0, 1.0, {1: 1.0, 2: 1.0})
    m = rank_metrics([6, 5, 7], 5, (1, 2))
    assert (m.p_at_1, m.rr, m.recall) == (0.0, 0.5, {1: 0.0, 2: 1.0})
    m = rank_metrics([6, 7], 5, (10,))
    assert (m.p_at_1, m.rr, m.recall) == (0.0, 0.0, {10: 0.0})


def test_evaluate_run_examples():
    r = evaluate_run({"a": ["x"], "b": ["z", "y"]}, {"a": "x", "b": "y"}, (1,))
    assert r.metrics["MRR"] == 0.75 and r.metrics["P@1"] == 0.5
    perfect = evaluate_run({"a": ["x"], "b": ["y"]}, {"a": "x", "b": "y"}, (1, 5))
    assert all(v == 1.0 for v in perfect.metrics.values())
    with pytest.raises(EvaluationError):
        evaluate_run({}, {"a": "x"})


def test_missing_runs_count_as_zero():
    r = evaluate_run({"a": ["x"]}, {"a": "x", "b": "y"}, (10,))
    assert r.missing == ["b"] and r.n_queries == 2 and r.metrics["P@1"] == 0.5


def test_unknown_run_query_rejected():
    with pytest.raises(EvaluationError, match="zz"):
        evaluate_run({"zz": ["x"]}, {"a": "x"})


def test_evaluate_knn():
    r = evaluate_knn({"q": [1, 3, 7]}, {"q": [1, 2, 3]}, (1, 3))
    assert r.metrics == {"R@1": 1.0, "R@3": pytest.approx(2 / 3)}


def test_report_files(tmp_path):
    r = evaluate_run({"a": ["x", "y"]}, {"a": "y"}, (1, 2))
    r.stats["calls"] = 12
    r.write(tmp_path / "eval.test")
    d = json.loads((tmp_path / "eval.test.json").read_text())
    assert set(d) == {"n_queries", "metrics", "per_query", "missing", "stats"}
    assert d["metrics"]["MRR"] == 0.5 and d["per_query"]["a"]["Recall@2"] == 1.0
    assert "MRR" in (tmp_path / "eval.test.txt").read_text()


def test_run_and_qrels_round_trip(tmp_path):
    runs = {"q1": [("d1", 2.5), ("d2", 1.0 / 3)], "q2": [("d9", -1.0)]}
    (tmp_path / "run.tsv").write_text(format_run(runs))
    assert read_run(tmp_path / "run.tsv") == runs
    (tmp_path / "qrels.tsv").write_text(format_qrels({"q1": "d1", "q2": "d9"}))
    assert read_qrels(tmp_path / "qrels.tsv") == {"q1": "d1", "q2": "d9"}
    (tmp_path / "bad.tsv").write_text("q1\td1\nq1\td2\n")
    with pytest.raises(EvaluationError):
        read_qrels(tmp_path / "bad.tsv")


runs_st = st.lists(st.lists(st.integers(0, 30), max_size=15, unique=True), min_size=1, max_size=10)


@given(runs_st, st.data())
def test_mrr_at_least_precision(runs, data):
    rels = [data.draw(st.integers(0, 30)) for _ in runs]
    r = evaluate_run({str(i): run for i, run in enumerate(runs)},
                     {str(i): rel for i, rel in enumerate(rels)}, (1, 3, 5, 10, 20))
    assert r.metrics["MRR"] >= r.metrics["P@1"]
    vals = [r.metrics[f"Recall@{n}"] for n in (1, 3, 5, 10, 20)]
    assert vals == sorted(vals)
    for q in r.per_query.values():
        v = [q[f"Recall@{n}"] for n in (1, 3, 5, 10, 20)]
        assert v == sorted(v) and q["MRR"] >= q["P@1"]


@given(st.lists(st.integers(0, 50), min_size=5, max_size=20, unique=True),
       st.lists(st.integers(0, 50), min_size=5, max_size=20, unique=True), st.randoms())
def test_recall_permutation_invariant(a, e, rnd):
    k = 5
    pa, pe = a[:k], e[:k]
    rnd.shuffle(pa)
    rnd.shuffle(pe)
    assert recall_at_k(pa + a[k:], pe + e[k:], k) == recall_at_k(a, e, k)
