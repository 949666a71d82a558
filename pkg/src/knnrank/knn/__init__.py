from .base import BruteForceIndex, KnnIndex, brute_force_search
from .napp import (NappIndex, ParameterError, generate_pivots_sparse, napp_build, napp_search,
                   sample_pivots_dense)
from .ranked import RankedList
from .swgraph import DuplicateInsertError, SwGraph, swgraph_insert, swgraph_search

__all__ = [
    "BruteForceIndex", "DuplicateInsertError", "KnnIndex", "NappIndex", "ParameterError",
    "RankedList", "SwGraph", "brute_force_search", "generate_pivots_sparse", "napp_build",
    "napp_search", "sample_pivots_dense", "swgraph_insert", "swgraph_search",
]
from .storage import CollectionMismatchError, load_index, read_index_header, save_index, space_digest

__all__ += ["CollectionMismatchError", "load_index", "read_index_header", "save_index", "space_digest"]
