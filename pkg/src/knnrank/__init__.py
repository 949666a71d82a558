"""k-NN retrieval with non-metric similarities (BM25, TF-IDF cosine,
embedding cosine, BM25 + IBM Model 1)."""

__version__ = "0.1.0"
