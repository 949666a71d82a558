"""numba kernels for SW-graph construction and search.

The similarity is passed in as a jitted function ``sim(ctx, q, u)`` so the
same traversal serves dense cosine (``ctx = (unit_rows,)``) and sparse
bilinear models such as BM25 (``ctx = (indptr, indices, values)`` of the
document weights, query as a dense vocabulary-length vector).

Adjacency lives in an arena: node ``i`` owns ``pool[start[i]:start[i]+cap[i]]``
of which the first ``deg[i]`` slots are used.  A full block is moved to the
end of the arena with doubled capacity.  A compacted CSR graph is the special
case ``cap == deg``.
"""

import heapq

import numba
import numpy as np


@numba.njit(cache=True)
def dense_sim(ctx, q, u):
    return np.dot(ctx[0][u], q)


@numba.njit(cache=True)
def sparse_sim(ctx, q, u):
    indptr, indices, values = ctx
    s = 0.0
    for j in range(indptr[u], indptr[u + 1]):
        s += values[j] * q[indices[j]]
    return s


@numba.njit(cache=True)
def dense_point(qctx, i, buf):
    return qctx[0][i]


@numba.njit(cache=True)
def dense_clear(qctx, i, buf):
    pass


@numba.njit(cache=True)
def sparse_point(qctx, i, buf):
    indptr, indices, values = qctx
    for j in range(indptr[i], indptr[i + 1]):
        buf[indices[j]] = values[j]
    return buf


@numba.njit(cache=True)
def sparse_clear(qctx, i, buf):
    indptr, indices, values = qctx
    for j in range(indptr[i], indptr[i + 1]):
        buf[indices[j]] = 0.0


@numba.njit(cache=True)
def search(sim, ctx, q, entry, start, deg, pool, ef, visited, stamp):
    """Best-first search; returns (ids, sims, calls) by (sim desc, id asc)."""
    s0 = sim(ctx, q, entry)
    calls = 1
    visited[entry] = stamp
    # candidates: pop the most similar first; results: pop the worst first
    cand = [(-s0, entry)]
    res = [(s0, -entry)]
    while len(cand) > 0:
        negs, c = heapq.heappop(cand)
        if len(res) >= ef and (-negs, -c) < res[0]:
            break
        lo = start[c]
        for j in range(lo, lo + deg[c]):
            u = pool[j]
            if visited[u] == stamp:
                continue
            visited[u] = stamp
            s = sim(ctx, q, u)
            calls += 1
            if len(res) < ef or (s, -u) > res[0]:
                heapq.heappush(cand, (-s, u))
                heapq.heappush(res, (s, -u))
                if len(res) > ef:
                    heapq.heappop(res)
    n = len(res)
    ids = np.empty(n, np.int64)
    sims = np.empty(n, np.float64)
    for i in range(n - 1, -1, -1):
        s, negu = heapq.heappop(res)
        ids[i] = -negu
        sims[i] = s
    return ids, sims, calls


@numba.njit(cache=True)
def add_edge(a, b, start, deg, cap, pool, used):
    if deg[a] == cap[a]:
        new_cap = max(4, 2 * cap[a])
        if used + new_cap > pool.shape[0]:
            grown = np.empty(max(2 * pool.shape[0], used + new_cap), pool.dtype)
            grown[:used] = pool[:used]
            pool = grown
        for j in range(deg[a]):
            pool[used + j] = pool[start[a] + j]
        start[a] = used
        cap[a] = new_cap
        used += new_cap
    pool[start[a] + deg[a]] = b
    deg[a] += 1
    return pool, used


@numba.njit(cache=True)
def insert_many(sim, ctx, point, clear, qctx, buf, nodes, entry, start, deg, cap, pool, used,
                nn, ef, visited, stamp):
    """Insert ``nodes`` in order into a graph that already contains ``entry``.

    ``point(qctx, i, buf)`` yields node ``i`` in the query role and
    ``clear`` undoes any scratch-buffer writes it made.
    """
    calls = 0
    for i in nodes:
        stamp += 1
        q = point(qctx, i, buf)
        ids, sims, c = search(sim, ctx, q, entry, start, deg, pool, ef, visited, stamp)
        clear(qctx, i, buf)
        calls += c
        m = min(nn, ids.shape[0])
        for j in range(m):
            u = ids[j]
            pool, used = add_edge(i, u, start, deg, cap, pool, used)
            pool, used = add_edge(u, i, start, deg, cap, pool, used)
    return pool, used, calls, stamp
