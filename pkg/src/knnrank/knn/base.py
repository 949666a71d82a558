from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..spaces import Space
from .ranked import RankedList


class KnnIndex(ABC):
    method = "abstract"

    def __init__(self, space: Space):
        self.space = space

    def search(self, query, k: int) -> RankedList:
        """Top-k for a raw query (term list or vector)."""
        return self.search_prepared(self.space.prepare(query), k)

    @abstractmethod
    def search_prepared(self, query, k: int) -> RankedList: ...

    def params(self) -> dict:
        return {}


class BruteForceIndex(KnnIndex):
    """Exact search: scores every document once per query."""

    method = "brute"

    def search_prepared(self, query, k: int) -> RankedList:
        if k < 1:
            raise ValueError("k must be >= 1")
        scores = self.space.score(query)
        return RankedList.from_scores(np.arange(len(scores)), scores, k)


def brute_force_search(query, k: int, space: Space) -> RankedList:
    return BruteForceIndex(space).search(query, k)
