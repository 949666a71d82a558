"""Random fixtures shared by several test modules."""

from __future__ import annotations

import numpy as np

from knnrank.forward_index import index_term_lists
from knnrank.model1 import TranslationTable


def random_docs(rng, n_docs, n_terms, min_len=1, max_len=20):
    return [[f"w{t}" for t in rng.integers(0, n_terms, size=int(rng.integers(min_len, max_len + 1)))]
            for _ in range(n_docs)]


def index_docs(docs, field="lemma"):
    return index_term_lists([(f"d{i}", d) for i, d in enumerate(docs)], field)


def random_table(rng, n_terms, row_len=8, extra_terms=0):
    """Row-stochastic table over w0..w{n_terms+extra_terms-1}; extra terms are unseen in docs."""
    total = n_terms + extra_terms
    rows = {}
    for s in range(total):
        if rng.random() < 0.2:
            continue
        tgts = rng.choice(total, size=min(row_len, total), replace=False)
        p = rng.random(len(tgts))
        rows[f"w{s}"] = {f"w{t}": float(v) for t, v in zip(tgts, p / p.sum())}
    return TranslationTable.from_terms(rows)


def table_dict(table):
    return table.to_term_rows()


__all__ = ["index_docs", "random_docs", "random_table", "table_dict", "np"]
