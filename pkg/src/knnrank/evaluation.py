"""Retrieval-quality and search-accuracy metrics.

Structured report keys (JSON)::

    n_queries       number of evaluated queries
    metrics         {"P@1", "MRR", "Recall@N"..., "R@k"...} -> mean value
    per_query       {query id: {metric: value}}
    missing         query ids present in qrels but absent from the run
    stats           free-form numbers (scorer calls, wall time, ...)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .binio import atomic_write_text
from .knn.ranked import RankedList


class EvaluationError(ValueError):
    pass


def _ids(run) -> list:
    if isinstance(run, RankedList):
        return run.ids.tolist()
    return [d for d, *_ in run] if run and isinstance(run[0], tuple) else list(run)


def recall_at_k(approx, exact, k: int) -> float:
    """Fraction of the true k nearest neighbors present in the approximate top-k."""
    if k <= 0:
        raise ValueError("k must be >= 1")
    a = set(_ids(approx)[:k])
    e = set(_ids(exact)[:k])
    return len(a & e) / k


@dataclass(frozen=True)
class RankMetrics:
    p_at_1: float
    rr: float
    recall: dict[int, float]


def rank_metrics(run, relevant, n_list: Sequence[int] = (10, 100)) -> RankMetrics:
    ids = _ids(run)
    try:
        rank = ids.index(relevant) + 1
    except ValueError:
        rank = None
    if rank is None:
        return RankMetrics(0.0, 0.0, {n: 0.0 for n in n_list})
    return RankMetrics(1.0 if rank == 1 else 0.0, 1.0 / rank,
                       {n: 1.0 if rank <= n else 0.0 for n in n_list})


@dataclass
class EvalReport:
    metrics: dict[str, float]
    per_query: dict[str, dict[str, float]]
    n_queries: int
    missing: list[str] = field(default_factory=list)
    stats: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"n_queries": self.n_queries, "metrics": self.metrics, "per_query": self.per_query,
                "missing": self.missing, "stats": self.stats}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"queries: {self.n_queries}"]
        for name, value in self.metrics.items():
            lines.append(f"{name:>12}: {value:.4f}")
        for name, value in self.stats.items():
            lines.append(f"{name:>12}: {value:.6g}" if isinstance(value, float) else f"{name:>12}: {value}")
        if self.missing:
            lines.append(f"queries without results (scored 0): {len(self.missing)}")
        return "\n".join(lines) + "\n"

    def write(self, stem: str | Path) -> None:
        stem = Path(stem)
        atomic_write_text(stem.parent / f"{stem.name}.json", self.to_json())
        atomic_write_text(stem.parent / f"{stem.name}.txt", self.to_text())


def _aggregate(per_query: Mapping[str, Mapping[str, float]], names: Iterable[str]) -> dict[str, float]:
    n = len(per_query)
    return {name: math.fsum(v[name] for v in per_query.values()) / n for name in names}


def evaluate_run(runs: Mapping[str, object], qrels: Mapping[str, object],
                 n_list: Sequence[int] = (10, 100)) -> EvalReport:
    """P@1, MRR and Recall@N; qrels queries with no run count as zeros."""
    if not runs:
        raise EvaluationError("empty run set")
    unknown = sorted(q for q in runs if q not in qrels)
    if unknown:
        raise EvaluationError(f"run queries missing from qrels: {', '.join(unknown[:20])}"
                              + (" ..." if len(unknown) > 20 else ""))
    names = ["P@1", "MRR"] + [f"Recall@{n}" for n in n_list]
    per_query: dict[str, dict[str, float]] = {}
    missing = []
    for q, rel in qrels.items():
        run = runs.get(q)
        if run is None:
            missing.append(q)
            run = []
        m = rank_metrics(run, rel, n_list)
        row = {"P@1": m.p_at_1, "MRR": m.rr}
        row.update({f"Recall@{n}": m.recall[n] for n in n_list})
        per_query[q] = row
    return EvalReport(_aggregate(per_query, names), per_query, len(per_query), missing)


def evaluate_knn(approx: Mapping[str, object], exact: Mapping[str, object],
                 k_list: Sequence[int] = (10,)) -> EvalReport:
    """Mean R@k of approximate results against exact (brute-force) results."""
    if not approx:
        raise EvaluationError("empty run set")
    names = [f"R@{k}" for k in k_list]
    per_query = {q: {f"R@{k}": recall_at_k(approx[q], exact[q], k) for k in k_list} for q in approx}
    return EvalReport(_aggregate(per_query, names), per_query, len(per_query))


# -- files ---------------------------------------------------------------

def read_qrels(path: str | Path) -> dict[str, str]:
    """``query_id<TAB>doc_id`` lines; one relevant document per query."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise EvaluationError(f"{path}:{lineno}: expected query_id<TAB>doc_id")
            if parts[0] in out and out[parts[0]] != parts[1]:
                raise EvaluationError(f"{path}:{lineno}: query {parts[0]} has two relevant documents")
            out[parts[0]] = parts[1]
    return out


def format_qrels(qrels: Mapping[str, str]) -> str:
    return "".join(f"{q}\t{d}\n" for q, d in qrels.items())


def format_run(runs: Mapping[str, Sequence[tuple[str, float]]]) -> str:
    """``query_id<TAB>rank<TAB>doc_id<TAB>score`` lines, ranks from 1."""
    lines = []
    for q, results in runs.items():
        for rank, (doc, score) in enumerate(results, 1):
            lines.append(f"{q}\t{rank}\t{doc}\t{score!r}\n")
    return "".join(lines)


def read_run(path: str | Path) -> dict[str, list[tuple[str, float]]]:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise EvaluationError(f"{path}:{lineno}: expected query_id<TAB>rank<TAB>doc_id<TAB>score")
            rows.setdefault(parts[0], []).append((int(parts[1]), parts[2], float(parts[3])))
    return {q: [(d, s) for _, d, s in sorted(r)] for q, r in rows.items()}


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    return (float(a.mean()), float(a.std())) if len(a) else (0.0, 0.0)
