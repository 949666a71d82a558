"""Run configuration: one YAML file, optionally overridden by ``section.key=value`` pairs.

Relative paths are resolved against the directory of the config file.
Unknown keys are rejected so that typos do not silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import yaml

from .text import FIELDS, SPLITS

SIMILARITIES = ("bm25", "tfidf_cosine", "model1", "bm25_model1", "embed_cosine")
METHODS = ("brute", "napp", "swgraph")


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    corpus: str | None = None
    stopwords: str | None = None
    lemmas: str | None = None
    embeddings: str | None = None
    translation_table: str | None = None
    index: str | None = None
    qrels: str | None = None
    queries: str | None = None
    weights: str | None = None
    work_dir: str = "work"
    output_dir: str | None = None


@dataclass
class Model:
    similarity: str = "bm25"
    field: str = "lemma"
    k1: float = 1.2
    b: float = 0.75
    lam: float = 0.1
    self_prob: float = 0.05
    prune_threshold: float = 2.5e-3
    em_iterations: int = 5
    symmetrize: bool = True
    w_bm25: float = 1.0
    w_model1: float = 0.0


@dataclass
class Index:
    method: str = "brute"
    num_pivots: int = 512
    pivot_terms: int = 1000
    pivot_top_terms: int = 50000
    weighted_pivots: bool = False
    num_pivot_index: int = 32
    num_pivot_search: int = 2
    nn: int = 10
    ef_construction: int = 100
    ef_search: int = 100


@dataclass
class Pipeline:
    pool_depth: int = 500
    n: int = 100
    rerank: str | None = None
    train_n: int = 15
    restarts: int = 10
    train_split: str = "train"
    eval_split: str = "dev"
    max_queries: int | None = None
    recall_n: list[int] = field(default_factory=lambda: [10, 100])
    k_list: list[int] = field(default_factory=lambda: [10])


@dataclass
class Seeds:
    pivots: int = 0
    weights: int = 0


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    model: Model = field(default_factory=Model)
    index: Index = field(default_factory=Index)
    pipeline: Pipeline = field(default_factory=Pipeline)
    seeds: Seeds = field(default_factory=Seeds)
    base_dir: Path = field(default_factory=Path.cwd)

    def path(self, name: str) -> Path | None:
        """Resolved path for ``paths.<name>`` or None when unset."""
        raw = getattr(self.paths, name)
        if raw is None:
            return None
        p = Path(raw).expanduser()
        return Path(os.path.normpath(p if p.is_absolute() else self.base_dir / p))

    @property
    def work_dir(self) -> Path:
        return self.path("work_dir")

    def output(self, name: str, default: str) -> Path:
        """Configured path, or ``default`` inside the work directory."""
        return self.path(name) or self.work_dir / default

    @property
    def output_dir(self) -> Path:
        return self.path("output_dir") or self.work_dir

    def fwd_path(self, fld: str | None = None) -> Path:
        return self.work_dir / f"answers.{fld or self.model.field}.fwd"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


_NULLABLE = {"model.self_prob", "pipeline.rerank", "pipeline.max_queries"}
_SECTIONS = {"paths": Paths, "model": Model, "index": Index, "pipeline": Pipeline, "seeds": Seeds}


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    name = f"{section}.{key}"
    if value is None:
        if section == "paths" or name in _NULLABLE:
            return None
        raise ConfigError(f"{name}: must not be null")
    if section == "paths" and not isinstance(value, str):
        raise ConfigError(f"{name}: expected a path string, got {value!r}")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) or key == "max_queries":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{name}: expected a list of integers, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def _build(data: dict, base_dir: Path) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    parts = {}
    for section, cls in _SECTIONS.items():
        values = data.get(section) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"{section}: expected a mapping")
        defaults = cls()
        names = {f.name for f in dataclasses.fields(cls)}
        bad = sorted(set(values) - names)
        if bad:
            raise ConfigError(f"{section}.{bad[0]}: unknown key")
        kw = {k: _coerce(section, k, v, getattr(defaults, k)) for k, v in values.items()}
        parts[section] = cls(**kw)
    cfg = RunConfig(**parts, base_dir=base_dir)
    validate(cfg)
    return cfg


def parse_override(item: str) -> tuple[str, str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected section.key=value")
    key, raw = item.split("=", 1)
    if key.count(".") != 1:
        raise ConfigError(f"override {item!r}: expected section.key=value")
    section, name = key.split(".")
    try:
        value = yaml.safe_load(raw) if raw != "" else None
    except yaml.YAMLError as e:
        raise ConfigError(f"override {item!r}: {e}") from None
    return section, name, value


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    data: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML: {e}") from None
        base = path.resolve().parent
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    for item in overrides:
        section, name, value = parse_override(item)
        if data.get(section) is None:
            data[section] = {}
        sec = data[section]
        if not isinstance(sec, dict):
            raise ConfigError(f"{section}: expected a mapping")
        sec[name] = value
    return _build(data, base)


def _check(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{name}: {msg}")


def validate(cfg: RunConfig) -> None:
    m, ix, p = cfg.model, cfg.index, cfg.pipeline
    _check(m.similarity in SIMILARITIES, "model.similarity", f"must be one of {', '.join(SIMILARITIES)}")
    _check(m.field in FIELDS, "model.field", f"must be one of {', '.join(FIELDS)}")
    _check(m.k1 >= 0, "model.k1", "must be >= 0")
    _check(0 <= m.b <= 1, "model.b", "must lie in [0, 1]")
    _check(0 <= m.lam < 1, "model.lam", "must lie in [0, 1)")
    _check(m.self_prob is None or 0 < m.self_prob < 1, "model.self_prob", "must be null or lie in (0, 1)")
    _check(0 <= m.prune_threshold < 1, "model.prune_threshold", "must lie in [0, 1)")
    _check(m.em_iterations >= 1, "model.em_iterations", "must be >= 1")
    _check(m.w_bm25 != 0 or m.w_model1 != 0, "model.w_bm25", "weights must not both be zero")
    _check(ix.method in METHODS, "index.method", f"must be one of {', '.join(METHODS)}")
    _check(ix.num_pivots >= 1, "index.num_pivots", "must be >= 1")
    _check(1 <= ix.pivot_terms <= ix.pivot_top_terms, "index.pivot_terms",
           "need 1 <= pivot_terms <= pivot_top_terms")
    _check(1 <= ix.num_pivot_index <= ix.num_pivots, "index.num_pivot_index",
           "need 1 <= num_pivot_index <= num_pivots")
    _check(1 <= ix.num_pivot_search <= ix.num_pivot_index, "index.num_pivot_search",
           "need 1 <= num_pivot_search <= num_pivot_index")
    _check(ix.nn >= 1, "index.nn", "must be >= 1")
    _check(ix.ef_construction >= 1, "index.ef_construction", "must be >= 1")
    _check(ix.ef_search >= 1, "index.ef_search", "must be >= 1")
    _check(p.n >= 1, "pipeline.n", "must be >= 1")
    _check(p.pool_depth >= p.n, "pipeline.pool_depth", "must be >= pipeline.n")
    _check(p.rerank is None or p.rerank in SIMILARITIES, "pipeline.rerank",
           f"must be unset or one of {', '.join(SIMILARITIES)}")
    _check(p.train_n >= 1, "pipeline.train_n", "must be >= 1")
    _check(p.restarts >= 1, "pipeline.restarts", "must be >= 1")
    _check(p.train_split in SPLITS, "pipeline.train_split", f"must be one of {', '.join(SPLITS)}")
    _check(p.eval_split in SPLITS, "pipeline.eval_split", f"must be one of {', '.join(SPLITS)}")
    _check(p.max_queries is None or p.max_queries >= 1, "pipeline.max_queries", "must be >= 1")
    _check(len(p.recall_n) > 0 and min(p.recall_n) >= 1, "pipeline.recall_n", "values must be >= 1")
    _check(len(p.k_list) > 0 and min(p.k_list) >= 1, "pipeline.k_list", "values must be >= 1")
    if ix.method == "swgraph":
        _check(ix.ef_search >= max(p.k_list), "index.ef_search", "must be >= every pipeline.k_list value")


def require_inputs(cfg: RunConfig, names: Iterable[str]) -> None:
    """Every named input path must be configured and exist."""
    for name in names:
        p = cfg.path(name)
        if p is None:
            raise ConfigError(f"paths.{name}: required by this command")
        if not p.exists():
            raise ConfigError(f"paths.{name}: {p} does not exist")


def require_files(files: dict[str, Path]) -> None:
    """Derived inputs (produced by earlier commands) must exist."""
    for name, p in files.items():
        if not p.exists():
            raise ConfigError(f"{name}: {p} does not exist (run the producing command first)")
