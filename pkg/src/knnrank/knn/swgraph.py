"""Small-World graph: insert-by-search construction and best-first search.

Dense cosine and sparse bilinear spaces (BM25, TF-IDF cosine) run on the
numba kernels in ``_swkernels``; every other space goes through the
pure-Python path, which implements the same algorithm and tie-breaking.
"""

from __future__ import annotations

import heapq

import numpy as np

from ..spaces import BilinearSpace, DenseCosineSpace, Space
from . import _swkernels as K
from .base import KnnIndex
from .ranked import RankedList


class DuplicateInsertError(ValueError):
    pass


class _Kernel:
    """Arrays and jitted callbacks that let the kernels score one space."""

    def __init__(self, space: Space):
        if isinstance(space, DenseCosineSpace):
            self.sim, self.point, self.clear = K.dense_sim, K.dense_point, K.dense_clear
            self.ctx = (space.unit,)
            self.qctx = self.ctx
            self.buf = np.zeros(1)
        elif isinstance(space, BilinearSpace):
            self.sim, self.point, self.clear = K.sparse_sim, K.sparse_point, K.sparse_clear
            self.ctx = self._csr(space.doc_weights)
            self.qctx = None
            self._space = space
            self.buf = np.zeros(space.doc_weights.shape[1])
        else:
            raise ValueError(f"no compiled path for space {space.name}")

    @staticmethod
    def _csr(m) -> tuple:
        return (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.float64))

    def point_queries(self) -> tuple:
        if self.qctx is None:
            s = self._space
            self.qctx = self._csr(s.prepare_docs(np.arange(s.n_docs)))
        return self.qctx

    def query(self, q) -> np.ndarray:
        if isinstance(q, np.ndarray):
            return np.ascontiguousarray(q, dtype=np.float64)
        return np.asarray(q.todense(), dtype=np.float64).ravel()


def supports_jit(space: Space) -> bool:
    return isinstance(space, (DenseCosineSpace, BilinearSpace))


class SwGraph(KnnIndex):
    method = "swgraph"

    def __init__(self, space: Space, nn: int = 10, ef_construction: int = 100,
                 ef_search: int = 100, use_jit: bool | None = None):
        super().__init__(space)
        if nn < 1 or ef_construction < 1 or ef_search < 1:
            raise ValueError("nn, ef_construction and ef_search must be >= 1")
        self.nn = nn
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        if use_jit is None:
            use_jit = supports_jit(space)
        self.use_jit = use_jit
        self._kernel = _Kernel(space) if use_jit else None
        n = space.n_docs
        self.start = np.zeros(n, dtype=np.int64)
        self.deg = np.zeros(n, dtype=np.int64)
        self.cap = np.zeros(n, dtype=np.int64)
        self.pool = np.zeros(max(16, 2 * nn * n), dtype=np.int64)
        self.used = 0
        self.inserted = np.zeros(n, dtype=bool)
        self.entry = -1
        self._visited = np.zeros(n, dtype=np.int64)
        self._stamp = 0

    def __len__(self) -> int:
        return int(self.inserted.sum())

    def neighbors(self, node: int) -> np.ndarray:
        lo = self.start[node]
        return self.pool[lo:lo + self.deg[node]]

    # -- construction ----------------------------------------------------

    def build(self, order=None) -> "SwGraph":
        """Insert every point; DocId ascending unless ``order`` is given."""
        order = np.arange(self.space.n_docs) if order is None else np.asarray(order, dtype=np.int64)
        if len(order) == 0:
            return self
        if self.entry < 0:
            self.insert(int(order[0]))
            order = order[1:]
        if self.use_jit:
            if np.any(self.inserted[order]) or len(np.unique(order)) != len(order):
                raise DuplicateInsertError("points already in the graph")
            self.inserted[order] = True
            self._insert_jit(order)
        else:
            for i in order:
                self.insert(int(i))
        return self

    def insert(self, point: int) -> None:
        if self.inserted[point]:
            raise DuplicateInsertError(f"point {point} already inserted")
        self.inserted[point] = True
        if self.entry < 0:
            self.entry = point
            return
        if self.use_jit:
            self._insert_jit(np.array([point], dtype=np.int64))
            return
        q = self.space.prepare_doc(point)
        ids, _ = self._search_py(q, self.ef_construction)
        for u in ids[:self.nn]:
            self._add_edge(point, int(u))
            self._add_edge(int(u), point)

    def _insert_jit(self, nodes: np.ndarray) -> None:
        k = self._kernel
        self.pool, self.used, calls, self._stamp = K.insert_many(
            k.sim, k.ctx, k.point, k.clear, k.point_queries(), k.buf, nodes, self.entry, self.start,
            self.deg, self.cap, self.pool, self.used, self.nn, self.ef_construction, self._visited,
            self._stamp)
        self.space.counter.add(calls)

    def _add_edge(self, a: int, b: int) -> None:
        if self.deg[a] == self.cap[a]:
            new_cap = max(4, 2 * int(self.cap[a]))
            if self.used + new_cap > len(self.pool):
                self.pool = np.concatenate([self.pool, np.zeros(max(len(self.pool), new_cap), dtype=np.int64)])
            d = self.deg[a]
            self.pool[self.used:self.used + d] = self.pool[self.start[a]:self.start[a] + d]
            self.start[a] = self.used
            self.cap[a] = new_cap
            self.used += new_cap
        self.pool[self.start[a] + self.deg[a]] = b
        self.deg[a] += 1

    # -- search ----------------------------------------------------------

    def _search_py(self, q, ef: int) -> tuple[np.ndarray, np.ndarray]:
        space = self.space
        entry = self.entry
        s0 = float(space.score(q, [entry])[0])
        visited = {entry}
        cand = [(-s0, entry)]
        res = [(s0, -entry)]
        while cand:
            negs, c = heapq.heappop(cand)
            if len(res) >= ef and (-negs, -c) < res[0]:
                break
            fresh = [int(u) for u in self.neighbors(c) if u not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            for u, s in zip(fresh, space.score(q, fresh).tolist()):
                if len(res) < ef or (s, -u) > res[0]:
                    heapq.heappush(cand, (-s, u))
                    heapq.heappush(res, (s, -u))
                    if len(res) > ef:
                        heapq.heappop(res)
        res.sort(reverse=True)
        return np.array([-u for _, u in res], dtype=np.int64), np.array([s for s, _ in res])

    def search_prepared(self, query, k: int, ef_search: int | None = None) -> RankedList:
        ef = self.ef_search if ef_search is None else ef_search
        if k < 1:
            raise ValueError("k must be >= 1")
        if ef < k:
            raise ValueError(f"ef_search={ef} must be >= k={k}")
        if self.entry < 0:
            return RankedList.empty()
        if self.use_jit:
            kern = self._kernel
            visited = np.zeros(self.space.n_docs, dtype=np.int64)
            ids, sims, calls = K.search(kern.sim, kern.ctx, kern.query(query), self.entry,
                                        self.start, self.deg, self.pool, ef, visited, 1)
            self.space.counter.add(calls)
            # the kernel's dot products may differ from the space's own in the last bit;
            # rescore the (already counted) result list so scores and tie order agree with it
            sims = self.space._score(query, ids)
            order = np.lexsort((ids, -sims))
            ids, sims = ids[order], sims[order]
        else:
            ids, sims = self._search_py(query, ef)
        return RankedList(ids[:k], sims[:k])

    def search(self, query, k: int, ef_search: int | None = None) -> RankedList:
        return self.search_prepared(self.space.prepare(query), k, ef_search)

    # -- structure -------------------------------------------------------

    def to_csr(self) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.concatenate(([0], np.cumsum(self.deg)))
        indices = np.concatenate([self.neighbors(i) for i in range(len(self.deg))]) \
            if len(self.deg) else np.zeros(0, dtype=np.int64)
        return indptr, indices

    @classmethod
    def from_csr(cls, space: Space, indptr, indices, entry: int, nn: int, ef_construction: int,
                 ef_search: int, use_jit: bool | None = None) -> "SwGraph":
        g = cls(space, nn, ef_construction, ef_search, use_jit=use_jit)
        indptr = np.asarray(indptr, dtype=np.int64)
        g.start = indptr[:-1].copy()
        g.deg = np.diff(indptr)
        g.cap = g.deg.copy()
        g.pool = np.asarray(indices, dtype=np.int64).copy()
        g.used = len(g.pool)
        g.entry = int(entry)
        if entry >= 0:
            g.inserted[:] = True
        return g

    def reachable(self) -> np.ndarray:
        """Boolean mask of nodes reachable from the entry point."""
        seen = np.zeros(len(self.deg), dtype=bool)
        if self.entry < 0:
            return seen
        stack = [self.entry]
        seen[self.entry] = True
        while stack:
            c = stack.pop()
            for u in self.neighbors(c):
                if not seen[u]:
                    seen[u] = True
                    stack.append(int(u))
        return seen

    def params(self) -> dict:
        return {"nn": self.nn, "ef_construction": self.ef_construction, "ef_search": self.ef_search}


def swgraph_insert(graph: SwGraph, point: int) -> None:
    graph.insert(point)


def swgraph_search(graph: SwGraph, query, k: int, ef_search: int) -> RankedList:
    return graph.search(query, k, ef_search)
