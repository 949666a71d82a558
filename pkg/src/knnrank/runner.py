"""Command implementations behind the CLI.

Each command validates its inputs first, computes everything in memory and
only then writes its outputs, so a failing command leaves no partial files.
"""

from __future__ import annotations

import logging
import os
import tempfile
import time
from pathlib import Path

import yaml

from . import binio
from .config import ConfigError, RunConfig, require_files, require_inputs
from .evaluation import EvalReport, evaluate_knn, evaluate_run, format_run, read_qrels
from .forward_index import ForwardIndex, build_forward_index
from .knn import BruteForceIndex, KnnIndex, NappIndex, SwGraph, generate_pivots_sparse, sample_pivots_dense
from .knn.storage import index_from_bytes, read_index_header, save_index
from .model1 import (ParallelCorpus, TranslationTable, apply_self_translation, em_train, prune_table,
                     symmetrize)
from .pipeline import build_training_pool, coordinate_ascent, retrieve_then_rerank
from .similarity import Bm25Params, ModelWeights, load_embeddings
from .spaces import (Bm25Space, CallCounter, CombinedSpace, EmbedCosineSpace, Model1Space, SparseSpace,
                     Space, TfidfCosineSpace)
from .text import FIELDS, TextProcessor, load_lemma_map, load_stopwords, read_corpus

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Input data is malformed or inconsistent with other artifacts."""


class Outputs:
    """Stage several output files and move them into place together."""

    def __init__(self) -> None:
        self.files: dict[Path, bytes] = {}

    def add(self, path: Path, data: bytes | str) -> None:
        self.files[Path(path)] = data.encode("utf-8") if isinstance(data, str) else data

    def commit(self) -> list[Path]:
        staged = []
        try:
            for path, data in self.files.items():
                path.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
                with os.fdopen(fd, "wb") as f:
                    f.write(data)
                staged.append((tmp, path))
        except BaseException:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, path in staged:
            os.replace(tmp, path)
        return list(self.files)


# -- loading -------------------------------------------------------------

def _processor(cfg: RunConfig) -> TextProcessor:
    try:
        return TextProcessor(load_stopwords(cfg.path("stopwords")), load_lemma_map(cfg.path("lemmas")))
    except ValueError as e:
        raise DataError(str(e)) from None


def _corpus(cfg: RunConfig) -> list:
    try:
        return list(read_corpus(cfg.path("corpus")))
    except ValueError as e:
        raise DataError(str(e)) from None


def _load_fwd(cfg: RunConfig) -> ForwardIndex:
    path = cfg.fwd_path()
    require_files({"forward index": path})
    return ForwardIndex.load(path)


def _table_path(cfg: RunConfig) -> Path:
    return cfg.output("translation_table", f"model1.{cfg.model.field}.ttab")


def _weights(cfg: RunConfig) -> ModelWeights:
    path = cfg.path("weights")
    if path is None:
        return ModelWeights(cfg.model.w_bm25, cfg.model.w_model1)
    require_inputs(cfg, ["weights"])
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    try:
        return ModelWeights(float(data["w_bm25"]), float(data["w_model1"]))
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: bad weights file ({e})") from None


def make_space(cfg: RunConfig, name: str, fwd: ForwardIndex, counter: CallCounter | None = None) -> Space:
    """Scorer ``name`` over the answers of ``fwd`` with the configured parameters."""
    m = cfg.model
    counter = counter or CallCounter()
    params = Bm25Params(m.k1, m.b)
    if name == "bm25":
        return Bm25Space.from_index(fwd, counter=counter, params=params)
    if name == "tfidf_cosine":
        return TfidfCosineSpace.from_index(fwd, counter=counter)
    if name == "embed_cosine":
        require_inputs(cfg, ["embeddings"])
        try:
            emb = load_embeddings(cfg.path("embeddings"))
        except ValueError as e:
            raise DataError(str(e)) from None
        return EmbedCosineSpace(fwd, emb, counter=counter)
    table_path = _table_path(cfg)
    require_files({"paths.translation_table": table_path})
    table = TranslationTable.load(table_path)
    model1 = Model1Space(fwd.vocab, fwd.tf_matrix(), table, m.lam, field=fwd.field, counter=counter)
    if name == "model1":
        return model1
    bm25 = Bm25Space.from_index(fwd, counter=counter, params=params)
    return CombinedSpace(bm25, model1, _weights(cfg), counter=counter)


def _space_meta(cfg: RunConfig, space: Space) -> dict:
    meta = {"similarity": space.name, "field": cfg.model.field}
    if isinstance(space, (Bm25Space, CombinedSpace)):
        meta.update(k1=cfg.model.k1, b=cfg.model.b)
    if isinstance(space, (Model1Space, CombinedSpace)):
        meta.update(lam=cfg.model.lam, table_digest=binio.file_digest(_table_path(cfg)))
    if isinstance(space, CombinedSpace):
        meta.update(w_bm25=space.weights.w_bm25, w_model1=space.weights.w_model1)
    if isinstance(space, EmbedCosineSpace):
        meta.update(embeddings_digest=binio.file_digest(cfg.path("embeddings")))
    return meta


def _index_path(cfg: RunConfig) -> Path:
    return cfg.output("index", f"{cfg.model.similarity}.{cfg.index.method}.knn")


def _open_index(cfg: RunConfig, counter: CallCounter) -> tuple[KnnIndex, ForwardIndex]:
    """Load the configured index, check it matches the configured model, apply search params."""
    path = _index_path(cfg)
    if cfg.path("index") is not None:
        require_inputs(cfg, ["index"])
    else:
        require_files({"paths.index": path})
    data = path.read_bytes()
    _, _, _, info = read_index_header(data)
    fwd = _load_fwd(cfg)
    space = make_space(cfg, cfg.model.similarity, fwd, counter)
    expected = _space_meta(cfg, space)
    stored = info.get("space", {})
    if stored != expected:
        diff = sorted(k for k in set(stored) | set(expected) if stored.get(k) != expected.get(k))
        raise DataError(f"index {path} was built with different model settings: {', '.join(diff)}")
    index = index_from_bytes(data, space, fwd.digest())
    if isinstance(index, SwGraph):
        index.ef_search = cfg.index.ef_search
    elif isinstance(index, NappIndex):
        if cfg.index.num_pivot_search > index.num_pivot_index:
            raise ConfigError(f"index.num_pivot_search: must be <= the index's num_pivot_index "
                              f"({index.num_pivot_index})")
        index.num_pivot_search = cfg.index.num_pivot_search
    return index, fwd


def _queries(cfg: RunConfig, split: str) -> tuple[dict[str, list[str]], dict[str, str]]:
    """Tokenized queries and qrels (query id -> relevant answer id)."""
    proc = _processor(cfg)
    fld = cfg.model.field
    qpath = cfg.path("queries")
    queries: dict[str, list[str]] = {}
    qrels: dict[str, str] = {}
    if qpath is not None:
        require_inputs(cfg, ["queries"])
        with open(qpath, encoding="utf-8", errors="replace") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{qpath}:{lineno}: expected query_id<TAB>text")
                queries[parts[0]] = proc.terms(parts[1], fld)
    else:
        require_inputs(cfg, ["corpus"])
        for p in _corpus(cfg):
            if p.split == split:
                queries[p.pair_id] = proc.terms(p.question, fld)
                qrels[p.pair_id] = p.pair_id
    if cfg.path("qrels") is not None:
        require_inputs(cfg, ["qrels"])
        try:
            qrels = read_qrels(cfg.path("qrels"))
        except ValueError as e:
            raise DataError(str(e)) from None
        queries = {q: t for q, t in queries.items() if q in qrels}
    if cfg.pipeline.max_queries is not None:
        keep = list(queries)[:cfg.pipeline.max_queries]
        queries = {q: queries[q] for q in keep}
        qrels = {q: qrels[q] for q in keep if q in qrels}
    if not queries:
        raise DataError(f"no queries found (split {split!r})")
    return queries, qrels


# -- commands ------------------------------------------------------------

def cmd_ingest(cfg: RunConfig) -> str:
    require_inputs(cfg, ["corpus"])
    proc = _processor(cfg)
    corpus = _corpus(cfg)
    if not corpus:
        raise DataError("corpus is empty")
    out = Outputs()
    stats = {}
    for fld in FIELDS:
        _, fwd = build_forward_index(corpus, proc, fld)
        out.add(cfg.fwd_path(fld), fwd.to_bytes())
        stats[fld] = fwd
    out.commit()
    fwd = stats[cfg.model.field]
    return (f"ingest: D={fwd.n_docs} V={len(fwd.vocab)} tokens={fwd.vocab.n_tokens} "
            f"avg_len={fwd.avg_len:.3f} field={fwd.field}")


def cmd_train_model1(cfg: RunConfig) -> str:
    require_inputs(cfg, ["corpus"])
    m = cfg.model
    proc = _processor(cfg)
    pairs = [(proc.terms(p.answer, m.field), proc.terms(p.question, m.field))
             for p in _corpus(cfg) if p.split == "tran"]
    corpus = ParallelCorpus.from_tokens(pairs)
    if len(corpus) == 0:
        raise DataError("no usable pairs in the 'tran' split")
    if m.symmetrize:
        corpus = symmetrize(corpus)
    lls = []
    table = em_train(corpus, m.em_iterations, on_iteration=lambda i, ll: lls.append(ll))
    if m.prune_threshold > 0:
        table = prune_table(table, m.prune_threshold)
    if m.self_prob is not None:
        table = apply_self_translation(table, m.self_prob)
    path = _table_path(cfg)
    out = Outputs()
    out.add(path, table.to_bytes() if path.suffix not in (".txt", ".tsv") else table.to_text())
    out.commit()
    return (f"train-model1: pairs={len(corpus)} entries={len(table)} sources={len(table.lexicon)} "
            f"dropped_rows={table.dropped_rows} loglik={lls[-1]:.6g} -> {path}")


def build_index(cfg: RunConfig, space: Space) -> KnnIndex:
    ix = cfg.index
    if ix.method == "brute":
        return BruteForceIndex(space)
    if ix.method == "swgraph":
        return SwGraph(space, ix.nn, ix.ef_construction, ix.ef_search).build()
    if isinstance(space, (SparseSpace, CombinedSpace)):
        vocab = space.bm25.vocab if isinstance(space, CombinedSpace) else space.vocab
        if ix.pivot_terms > min(ix.pivot_top_terms, len(vocab)):
            raise ConfigError(f"index.pivot_terms: {ix.pivot_terms} exceeds the number of usable "
                              f"terms ({min(ix.pivot_top_terms, len(vocab))})")
        pivots = generate_pivots_sparse(vocab, ix.num_pivots, ix.pivot_terms, ix.pivot_top_terms,
                                        seed=cfg.seeds.pivots, weighted=ix.weighted_pivots)
    else:
        if ix.num_pivots > space.n_docs:
            raise ConfigError(f"index.num_pivots: exceeds the collection size ({space.n_docs})")
        pivots = sample_pivots_dense(space, ix.num_pivots, seed=cfg.seeds.pivots)
    return NappIndex(space, pivots, ix.num_pivot_index, ix.num_pivot_search)


def cmd_build_index(cfg: RunConfig) -> str:
    fwd = _load_fwd(cfg)
    space = make_space(cfg, cfg.model.similarity, fwd)
    t0 = time.perf_counter()
    index = build_index(cfg, space)
    elapsed = time.perf_counter() - t0
    path = _index_path(cfg)
    save_index(path, index, fwd.digest(), _space_meta(cfg, space))
    return (f"build-index: method={index.method} similarity={space.name} points={space.n_docs} "
            f"scorer_calls={space.counter.calls} seconds={elapsed:.2f} -> {path}")


def _rerank_space(cfg: RunConfig, fwd: ForwardIndex, counter: CallCounter) -> Space | None:
    name = cfg.pipeline.rerank
    return None if name is None else make_space(cfg, name, fwd, counter)


def _run_queries(cfg: RunConfig, split: str):
    counter = CallCounter()
    index, fwd = _open_index(cfg, counter)
    rerank = _rerank_space(cfg, fwd, counter)
    queries, qrels = _queries(cfg, split)
    p = cfg.pipeline
    runs = {}
    t0 = time.perf_counter()
    for qid, terms in queries.items():
        if rerank is None:
            res = index.search(terms, p.n)
        else:
            res = retrieve_then_rerank(terms, index, p.pool_depth, rerank, p.n)
        runs[qid] = [(fwd.doc_ids[int(d)], float(s)) for d, s in res]
    elapsed = time.perf_counter() - t0
    stats = {"scorer_calls_per_query": counter.calls / len(queries),
             "seconds_per_query": elapsed / len(queries)}
    return runs, qrels, stats


def cmd_query(cfg: RunConfig) -> str:
    split = cfg.pipeline.eval_split
    runs, _, stats = _run_queries(cfg, split)
    path = cfg.output_dir / f"run.{split}.tsv"
    out = Outputs()
    out.add(path, format_run(runs))
    out.commit()
    return (f"query: queries={len(runs)} calls/query={stats['scorer_calls_per_query']:.1f} "
            f"ms/query={1000 * stats['seconds_per_query']:.2f} -> {path}")


def _write_report(cfg: RunConfig, name: str, report: EvalReport) -> Path:
    stem = cfg.output_dir / name
    out = Outputs()
    out.add(stem.parent / f"{stem.name}.json", report.to_json())
    out.add(stem.parent / f"{stem.name}.txt", report.to_text())
    out.commit()
    return stem


def _summary(report: EvalReport) -> str:
    return " ".join(f"{k}={v:.4f}" for k, v in report.metrics.items())


def cmd_eval_retrieval(cfg: RunConfig) -> str:
    split = cfg.pipeline.eval_split
    runs, qrels, stats = _run_queries(cfg, split)
    if not qrels:
        raise ConfigError("paths.qrels: required when queries come from paths.queries")
    report = evaluate_run(runs, qrels, cfg.pipeline.recall_n)
    report.stats.update(stats)
    stem = _write_report(cfg, f"eval-retrieval.{split}", report)
    return f"eval-retrieval: queries={report.n_queries} {_summary(report)} -> {stem}.json"


def cmd_eval_knn(cfg: RunConfig) -> str:
    split = cfg.pipeline.eval_split
    counter = CallCounter()
    index, _ = _open_index(cfg, counter)
    exact = BruteForceIndex(index.space)
    queries, _ = _queries(cfg, split)
    k = max(cfg.pipeline.k_list)
    approx_runs, exact_runs = {}, {}
    approx_calls = exact_calls = 0
    t_approx = t_exact = 0.0
    for qid, terms in queries.items():
        q = index.space.prepare(terms)
        c0, t0 = counter.calls, time.perf_counter()
        approx_runs[qid] = index.search_prepared(q, k)
        c1, t1 = counter.calls, time.perf_counter()
        exact_runs[qid] = exact.search_prepared(q, k)
        approx_calls += c1 - c0
        exact_calls += counter.calls - c1
        t_approx += t1 - t0
        t_exact += time.perf_counter() - t1
    n = len(queries)
    report = evaluate_knn(approx_runs, exact_runs, cfg.pipeline.k_list)
    report.stats.update({
        "approx_calls_per_query": approx_calls / n,
        "exact_calls_per_query": exact_calls / n,
        "call_fraction": approx_calls / exact_calls if exact_calls else 0.0,
        "approx_ms_per_query": 1000 * t_approx / n,
        "exact_ms_per_query": 1000 * t_exact / n,
    })
    stem = _write_report(cfg, f"eval-knn.{split}", report)
    return (f"eval-knn: method={index.method} queries={n} {_summary(report)} "
            f"call_fraction={report.stats['call_fraction']:.4f} -> {stem}.json")


def cmd_train_weights(cfg: RunConfig) -> str:
    fwd = _load_fwd(cfg)
    bm25 = make_space(cfg, "bm25", fwd)
    model1 = make_space(cfg, "model1", fwd)
    features = CombinedSpace(bm25, model1, ModelWeights(1.0, 0.0))
    queries, qrels = _queries(cfg, cfg.pipeline.train_split)
    known = set(fwd.doc_ids)
    rel = {q: fwd.doc_index(d) for q, d in qrels.items() if d in known}
    queries = {q: t for q, t in queries.items() if q in rel}
    pool = build_training_pool(queries, rel, BruteForceIndex(bm25), features, cfg.pipeline.train_n)
    result = coordinate_ascent(pool, cfg.pipeline.restarts, cfg.seeds.weights)
    doc = {
        "w_bm25": result.weights.w_bm25,
        "w_model1": result.weights.w_model1,
        "pool_p_at_1": result.p_at_1,
        "pool_mrr": result.mrr,
        "degenerate": result.degenerate,
        "pool_queries": len(pool),
        "dropped_queries": pool.dropped,
    }
    path = cfg.output("weights", "weights.yaml")
    out = Outputs()
    out.add(path, yaml.safe_dump(doc, sort_keys=True))
    out.commit()
    flag = " (degenerate pool, default weights)" if result.degenerate else ""
    return (f"train-weights: queries={len(pool)} dropped={pool.dropped} w=({result.weights.w_bm25:.6g}, "
            f"{result.weights.w_model1:.6g}) pool P@1={result.p_at_1:.4f} MRR={result.mrr:.4f}{flag} -> {path}")


COMMANDS = {
    "ingest": cmd_ingest,
    "train-model1": cmd_train_model1,
    "build-index": cmd_build_index,
    "query": cmd_query,
    "eval-knn": cmd_eval_knn,
    "eval-retrieval": cmd_eval_retrieval,
    "train-weights": cmd_train_weights,
}
