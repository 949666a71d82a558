from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class RankedList:
    """Documents ordered by score descending, ties by DocId ascending."""

    ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if ids.shape != scores.shape or ids.ndim != 1:
            raise ValueError("ids and scores must be 1-d arrays of equal length")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)

    @classmethod
    def from_scores(cls, ids, scores, k: int | None = None) -> "RankedList":
        ids = np.asarray(ids, dtype=np.int64)
        scores = np.asarray(scores, dtype=np.float64)
        order = top_k_order(ids, scores, len(ids) if k is None else k)
        return cls(ids[order], scores[order])

    @classmethod
    def empty(cls) -> "RankedList":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[tuple[int, float]]:
        return zip(self.ids.tolist(), self.scores.tolist())

    def top(self, k: int) -> "RankedList":
        return RankedList(self.ids[:k], self.scores[:k])

    def is_well_formed(self) -> bool:
        if len(np.unique(self.ids)) != len(self.ids):
            return False
        s, i = self.scores, self.ids
        ok = (s[:-1] > s[1:]) | ((s[:-1] == s[1:]) & (i[:-1] < i[1:]))
        return bool(np.all(ok))

    def rank_of(self, doc: int) -> int | None:
        """1-based rank of ``doc`` or ``None`` if absent."""
        hit = np.flatnonzero(self.ids == doc)
        return int(hit[0]) + 1 if len(hit) else None


def top_k_order(ids: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k best entries under (score desc, id asc)."""
    n = len(ids)
    if k <= 0 or n == 0:
        return np.zeros(0, dtype=np.int64)
    if k < n:
        part = np.argpartition(-scores, k - 1)[:k]
        cutoff = scores[part].min()
        pool = np.flatnonzero(scores >= cutoff)
    else:
        pool = np.arange(n)
    order = pool[np.lexsort((ids[pool], -scores[pool]))]
    return order[:k]
