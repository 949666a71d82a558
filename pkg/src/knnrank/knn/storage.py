"""On-disk k-NN index files.

Layout (little-endian, see :mod:`knnrank.binio`)::

    magic "KNRKNN\\0\\0", <u4 version
    str   method            brute | napp | swgraph
    str   collection digest sha256 of the indexed collection
    <u8   number of points
    str   JSON metadata     method parameters plus caller-supplied space description
    payload, by method:
      brute    (nothing)
      napp     <u1 pivot kind (0 sparse term ids, 1 dense vectors)
               sparse: i8 pivot indptr, i4 term ids | dense: <u8 dim, f8 values
               i8 posting indptr, i4 posting doc ids
      swgraph  <i8 entry, i8 adjacency indptr, i8 adjacency ids
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .. import binio
from ..spaces import CombinedSpace, DenseCosineSpace, SparseSpace, Space
from .base import BruteForceIndex, KnnIndex
from .napp import NappIndex
from .swgraph import SwGraph

MAGIC = b"KNRKNN\x00\x00"
VERSION = 1
METHODS = ("brute", "napp", "swgraph")


class CollectionMismatchError(binio.FormatError):
    """The index was built over a different collection than the one supplied."""


def space_digest(space: Space) -> str:
    """Content hash of the documents a space scores (for spaces without a forward index)."""
    h = hashlib.sha256()
    h.update(space.name.encode())
    if isinstance(space, CombinedSpace):
        space = space.bm25
    if isinstance(space, SparseSpace):
        m = space.docs_tf
        for a, dt in ((m.indptr, "<i8"), (m.indices, "<i8"), (m.data, "<f8")):
            h.update(np.ascontiguousarray(a, dtype=dt).tobytes())
    elif isinstance(space, DenseCosineSpace):
        h.update(np.ascontiguousarray(space.raw, dtype="<f8").tobytes())
    else:
        raise TypeError(f"cannot digest space {space.name}")
    return h.hexdigest()


def index_to_bytes(index: KnnIndex, collection_digest: str, meta: dict | None = None) -> bytes:
    f = io.BytesIO()
    binio.write_header(f, MAGIC, VERSION)
    binio.write_str(f, index.method)
    binio.write_str(f, collection_digest)
    binio.write_scalar(f, "Q", index.space.n_docs)
    info = {"params": index.params(), "space": meta or {}}
    binio.write_str(f, json.dumps(info, sort_keys=True))
    if isinstance(index, NappIndex):
        _write_pivots(f, index.pivots)
        binio.write_array(f, index.post_indptr, "i8")
        binio.write_array(f, index.post_docs, "i4")
    elif isinstance(index, SwGraph):
        indptr, ids = index.to_csr()
        binio.write_scalar(f, "q", index.entry)
        binio.write_array(f, indptr, "i8")
        binio.write_array(f, ids, "i8")
    elif not isinstance(index, BruteForceIndex):
        raise TypeError(f"unsupported index type {type(index).__name__}")
    return f.getvalue()


def _write_pivots(f, pivots: list) -> None:
    dense = len(pivots) > 0 and np.asarray(pivots[0]).dtype.kind == "f"
    binio.write_scalar(f, "B", 1 if dense else 0)
    if dense:
        m = np.vstack(pivots)
        binio.write_scalar(f, "Q", m.shape[1])
        binio.write_array(f, m.ravel(), "f8")
    else:
        lens = [len(p) for p in pivots]
        binio.write_array(f, np.concatenate(([0], np.cumsum(lens))), "i8")
        flat = np.concatenate(pivots) if pivots else np.zeros(0)
        binio.write_array(f, flat, "i4")


def _read_pivots(f) -> list:
    kind = binio.read_scalar(f, "B")
    if kind == 1:
        dim = binio.read_scalar(f, "Q")
        flat = binio.read_array(f, "f8")
        if dim == 0 or len(flat) % dim:
            raise binio.FormatError("bad dense pivot section")
        return list(flat.reshape(-1, dim))
    if kind != 0:
        raise binio.FormatError(f"unknown pivot kind {kind}")
    indptr = binio.read_array(f, "i8")
    flat = binio.read_array(f, "i4").astype(np.int64)
    return [flat[indptr[i]:indptr[i + 1]] for i in range(len(indptr) - 1)]


def read_index_header(data: bytes) -> tuple[str, str, int, dict]:
    """(method, collection digest, n points, metadata) without loading the payload."""
    f = io.BytesIO(data)
    binio.read_header(f, MAGIC, VERSION)
    method = binio.read_str(f)
    if method not in METHODS:
        raise binio.FormatError(f"unknown index method {method!r}")
    digest = binio.read_str(f)
    n = binio.read_scalar(f, "Q")
    meta = json.loads(binio.read_str(f))
    return method, digest, n, meta


def index_from_bytes(data: bytes, space: Space, collection_digest: str) -> KnnIndex:
    f = io.BytesIO(data)
    binio.read_header(f, MAGIC, VERSION)
    method = binio.read_str(f)
    digest = binio.read_str(f)
    n = binio.read_scalar(f, "Q")
    params = json.loads(binio.read_str(f))["params"]
    if digest != collection_digest:
        raise CollectionMismatchError(
            f"index was built for collection {digest[:12]}, got {collection_digest[:12]}")
    if n != space.n_docs:
        raise CollectionMismatchError(f"index has {n} points, collection has {space.n_docs}")
    if method == "brute":
        return BruteForceIndex(space)
    if method == "napp":
        pivots = _read_pivots(f)
        indptr = binio.read_array(f, "i8")
        docs = binio.read_array(f, "i4")
        if len(indptr) != len(pivots) + 1 or indptr[-1] != len(docs):
            raise binio.FormatError("inconsistent posting lists")
        return NappIndex(space, pivots, params["num_pivot_index"], params["num_pivot_search"],
                         post_indptr=indptr, post_docs=docs)
    if method == "swgraph":
        entry = binio.read_scalar(f, "q")
        indptr = binio.read_array(f, "i8")
        ids = binio.read_array(f, "i8")
        if len(indptr) != n + 1 or indptr[-1] != len(ids):
            raise binio.FormatError("inconsistent adjacency lists")
        return SwGraph.from_csr(space, indptr, ids, entry, params["nn"], params["ef_construction"],
                                params["ef_search"])
    raise binio.FormatError(f"unknown index method {method!r}")


def save_index(path: str | Path, index: KnnIndex, collection_digest: str, meta: dict | None = None) -> None:
    binio.atomic_write_bytes(path, index_to_bytes(index, collection_digest, meta))


def load_index(path: str | Path, space: Space, collection_digest: str) -> KnnIndex:
    return index_from_bytes(Path(path).read_bytes(), space, collection_digest)


__all__ = ["CollectionMismatchError", "METHODS", "index_from_bytes", "index_to_bytes", "load_index",
           "read_index_header", "save_index", "space_digest"]
