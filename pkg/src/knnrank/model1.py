"""IBM Model 1 translation tables: EM training and post-processing.

Orientation: a table row is keyed by a *source* (answer) term ``a`` and holds
``T(q|a)`` for *target* (question) terms ``q``.

Text format: ``source<TAB>target<TAB>probability`` per line, rows ordered by
source term, entries within a row by descending probability (ties by target
term).  Binary format (little-endian)::

    magic "KNRTTAB\\0", version <u4>
    pruning threshold <f8>, self-translation probability <f8> (NaN if unset)
    lexicon str list; row pointers <i8>; targets <i4>; probabilities <f8>
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import binio

log = logging.getLogger(__name__)

MAGIC = b"KNRTTAB\x00"
VERSION = 1
DEFAULT_THRESHOLD = 2.5e-3
DEFAULT_SELF_PROB = 0.05


class TranslationTable:
    def __init__(self, lexicon: Sequence[str], indptr, targets, probs,
                 threshold: float = 0.0, self_prob: float | None = None, dropped_rows: int = 0):
        self.lexicon = list(lexicon)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int32)
        self.probs = np.asarray(probs, dtype=np.float64)
        if len(self.indptr) != len(self.lexicon) + 1:
            raise ValueError("row pointer length must be lexicon size + 1")
        self.threshold = float(threshold)
        self.self_prob = self_prob
        self.dropped_rows = dropped_rows
        self._ids = {t: i for i, t in enumerate(self.lexicon)}
        self._csc = None
        self._vocab_maps: dict[int, tuple[object, np.ndarray]] = {}

    # -- construction ----------------------------------------------------

    @classmethod
    def from_rows(cls, lexicon: Sequence[str], rows: Mapping[int, Mapping[int, float]], **kw) -> "TranslationTable":
        indptr = [0]
        targets: list[int] = []
        probs: list[float] = []
        for s in range(len(lexicon)):
            row = rows.get(s, {})
            for t in sorted(row):
                targets.append(t)
                probs.append(row[t])
            indptr.append(len(targets))
        return cls(lexicon, indptr, targets, probs, **kw)

    @classmethod
    def from_terms(cls, rows: Mapping[str, Mapping[str, float]], **kw) -> "TranslationTable":
        """Build from ``{source term: {target term: prob}}``."""
        lexicon: list[str] = []
        ids: dict[str, int] = {}

        def tid(t):
            if t not in ids:
                ids[t] = len(lexicon)
                lexicon.append(t)
            return ids[t]

        id_rows: dict[int, dict[int, float]] = {}
        for s, row in rows.items():
            si = tid(s)
            id_rows[si] = {tid(t): float(p) for t, p in row.items()}
        return cls.from_rows(lexicon, id_rows, **kw)

    # -- lookup ----------------------------------------------------------

    def term_id(self, term: str) -> int:
        return self._ids.get(term, -1)

    def row(self, source: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[source], self.indptr[source + 1]
        return self.targets[lo:hi], self.probs[lo:hi]

    def row_terms(self, source: str) -> dict[str, float]:
        s = self.term_id(source)
        if s < 0:
            return {}
        t, p = self.row(s)
        return {self.lexicon[i]: float(v) for i, v in zip(t, p)}

    def get(self, source: str, target: str) -> float:
        return self.row_terms(source).get(target, 0.0)

    def _column_matrix(self) -> sp.csc_matrix:
        if self._csc is None:
            n = len(self.lexicon)
            m = sp.csr_matrix((self.probs, self.targets, self.indptr), shape=(n, n))
            self._csc = m.tocsc()
            self._csc.sort_indices()
        return self._csc

    def column(self, target: int) -> tuple[np.ndarray, np.ndarray]:
        """All ``(source, T(target|source))`` entries for one target term."""
        m = self._column_matrix()
        lo, hi = m.indptr[target], m.indptr[target + 1]
        return m.indices[lo:hi].astype(np.int64), m.data[lo:hi]

    def lexicon_to_vocab(self, vocab) -> np.ndarray:
        """Array mapping lexicon ids to ``vocab`` TermIds (``-1`` if absent)."""
        cached = self._vocab_maps.get(id(vocab))
        if cached is not None and cached[0] is vocab:
            return cached[1]
        m = vocab.lookup(self.lexicon)
        self._vocab_maps[id(vocab)] = (vocab, m)
        return m

    def source_rows(self) -> np.ndarray:
        """Lexicon ids of sources with at least one entry."""
        return np.flatnonzero(np.diff(self.indptr) > 0)

    def row_sums(self) -> np.ndarray:
        sums = np.zeros(len(self.lexicon))
        counts = np.diff(self.indptr)
        nz = counts > 0
        sums[nz] = np.add.reduceat(self.probs, self.indptr[:-1][nz])
        return sums

    def __len__(self) -> int:
        return len(self.probs)

    def to_rows(self) -> dict[int, dict[int, float]]:
        out = {}
        for s in self.source_rows():
            t, p = self.row(s)
            out[int(s)] = dict(zip(t.tolist(), p.tolist()))
        return out

    def to_term_rows(self) -> dict[str, dict[str, float]]:
        return {self.lexicon[s]: {self.lexicon[t]: p for t, p in row.items()}
                for s, row in self.to_rows().items()}

    def _replace(self, rows, **kw) -> "TranslationTable":
        params = dict(threshold=self.threshold, self_prob=self.self_prob, dropped_rows=self.dropped_rows)
        params.update(kw)
        return TranslationTable.from_rows(self.lexicon, rows, **params)

    # -- I/O -------------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for s in sorted(self.source_rows(), key=lambda i: self.lexicon[i]):
            t, p = self.row(s)
            entries = sorted(zip(p.tolist(), (self.lexicon[i] for i in t)), key=lambda e: (-e[0], e[1]))
            src = self.lexicon[s]
            for prob, tgt in entries:
                lines.append(f"{src}\t{tgt}\t{prob!r}\n")
        return "".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "TranslationTable":
        rows: dict[str, dict[str, float]] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected source<TAB>target<TAB>probability")
            rows.setdefault(parts[0], {})[parts[1]] = float(parts[2])
        return cls.from_terms(rows)

    def to_bytes(self) -> bytes:
        f = io.BytesIO()
        binio.write_header(f, MAGIC, VERSION)
        binio.write_scalar(f, "d", self.threshold)
        binio.write_scalar(f, "d", math.nan if self.self_prob is None else self.self_prob)
        binio.write_str_list(f, self.lexicon)
        binio.write_array(f, self.indptr, "i8")
        binio.write_array(f, self.targets, "i4")
        binio.write_array(f, self.probs, "f8")
        return f.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TranslationTable":
        f = io.BytesIO(data)
        binio.read_header(f, MAGIC, VERSION)
        threshold = binio.read_scalar(f, "d")
        self_prob = binio.read_scalar(f, "d")
        lexicon = binio.read_str_list(f)
        indptr = binio.read_array(f, "i8")
        targets = binio.read_array(f, "i4")
        probs = binio.read_array(f, "f8")
        return cls(lexicon, indptr, targets, probs, threshold=threshold,
                   self_prob=None if math.isnan(self_prob) else self_prob)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix in (".txt", ".tsv"):
            binio.atomic_write_text(path, self.to_text())
        else:
            binio.atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "TranslationTable":
        with open(path, "rb") as f:
            data = f.read()
        if data[:8] == MAGIC:
            return cls.from_bytes(data)
        return cls.from_text(data.decode("utf-8"))


# -- parallel corpus -----------------------------------------------------

@dataclass
class ParallelCorpus:
    """(source ids, target ids) pairs over one shared lexicon."""

    lexicon: list[str]
    pairs: list[tuple[np.ndarray, np.ndarray]]

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_tokens(cls, pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> "ParallelCorpus":
        """Pairs with an empty side are dropped."""
        lexicon: list[str] = []
        ids: dict[str, int] = {}

        def enc(tokens):
            out = np.empty(len(tokens), dtype=np.int64)
            for i, t in enumerate(tokens):
                j = ids.get(t)
                if j is None:
                    j = ids[t] = len(lexicon)
                    lexicon.append(t)
                out[i] = j
            return out

        kept = [(enc(s), enc(t)) for s, t in pairs if len(s) and len(t)]
        return cls(lexicon, kept)

    def permuted(self, order: Sequence[int]) -> "ParallelCorpus":
        return ParallelCorpus(self.lexicon, [self.pairs[i] for i in order])


def symmetrize(corpus: ParallelCorpus) -> ParallelCorpus:
    """Follow every (A, Q) pair with its reversal (Q, A)."""
    out = []
    for s, t in corpus.pairs:
        out.append((s, t))
        out.append((t, s))
    return ParallelCorpus(corpus.lexicon, out)


def em_train(corpus: ParallelCorpus, iterations: int = 5,
             on_iteration: Callable[[int, float], None] | None = None) -> TranslationTable:
    """Plain IBM Model 1 EM with a NULL source word and uniform start.

    ``on_iteration(i, ll)`` receives the corpus log-likelihood under the
    parameters *entering* iteration ``i`` (the last call, ``i == iterations``,
    reports the final parameters).  Likelihoods omit the constant length term.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(corpus) == 0:
        raise ValueError("empty parallel corpus")
    L = len(corpus.lexicon)
    null = L
    # one group per (pair, target position); one cell per (group, source position)
    cell_src: list[np.ndarray] = []
    cell_tgt: list[np.ndarray] = []
    cell_grp: list[np.ndarray] = []
    grp_norm: list[np.ndarray] = []
    g0 = 0
    for s, t in corpus.pairs:
        src = np.concatenate(([null], s))
        m, l1 = len(t), len(src)
        cell_src.append(np.tile(src, m))
        cell_tgt.append(np.repeat(t, l1))
        cell_grp.append(np.repeat(np.arange(g0, g0 + m), l1))
        grp_norm.append(np.full(m, float(l1)))
        g0 += m
    csrc = np.concatenate(cell_src)
    ctgt = np.concatenate(cell_tgt)
    cgrp = np.concatenate(cell_grp)
    gsize = np.concatenate(grp_norm)
    # parameter ids are assigned in (source, target) order, independent of corpus order
    key = csrc * L + ctgt
    uniq, cell_param = np.unique(key, return_inverse=True)
    param_src = uniq // L
    param_tgt = uniq % L
    n_targets = len(np.unique(ctgt))
    theta = np.full(len(uniq), 1.0 / n_targets)

    for it in range(iterations + 1):
        p = theta[cell_param]
        norm = np.bincount(cgrp, weights=p, minlength=g0)
        if on_iteration is not None:
            on_iteration(it, float(np.log(norm / gsize).sum()))
        if it == iterations:
            break
        post = p / norm[cgrp]
        counts = np.bincount(cell_param, weights=post, minlength=len(uniq))
        totals = np.bincount(param_src, weights=counts, minlength=L + 1)
        theta = counts / totals[param_src]

    keep = (param_src != null) & (theta > 0)
    src, tgt, prob = param_src[keep], param_tgt[keep], theta[keep]
    indptr = np.concatenate(([0], np.cumsum(np.bincount(src, minlength=L))))
    # np.unique output is sorted by (source, target) already
    return TranslationTable(corpus.lexicon, indptr, tgt, prob)


def prune_table(table: TranslationTable, threshold: float = DEFAULT_THRESHOLD) -> TranslationTable:
    """Drop entries below ``threshold`` and renormalize the touched rows.

    An injected self-translation entry is never pruned.  Rows that lose every
    entry are removed; their number is stored in ``dropped_rows``.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must satisfy 0 <= threshold < 1")
    rows = {}
    dropped = 0
    keep_self = table.self_prob is not None
    for s, row in table.to_rows().items():
        kept = {t: p for t, p in row.items() if p >= threshold or (keep_self and t == s)}
        if not kept:
            dropped += 1
            continue
        if len(kept) != len(row):
            kept = _renormalize(s, kept, keep_self)
        rows[s] = kept
    if dropped:
        log.info("pruning at %g dropped %d empty rows", threshold, dropped)
    return table._replace(rows, threshold=max(threshold, table.threshold),
                          dropped_rows=table.dropped_rows + dropped)


def _renormalize(s: int, row: dict[int, float], keep_self: bool) -> dict[int, float]:
    if keep_self and s in row and len(row) > 1:
        self_p = row[s]
        rest = sum(p for t, p in row.items() if t != s)
        scale = (1.0 - self_p) / rest
        return {t: (p if t == s else p * scale) for t, p in row.items()}
    total = sum(row.values())
    return {t: p / total for t, p in row.items()}


def apply_self_translation(table: TranslationTable, self_prob: float = DEFAULT_SELF_PROB) -> TranslationTable:
    """Force ``T(w|w) = self_prob`` and rescale the rest of each row to sum to 1.

    If the table was pruned, entries pushed below the threshold by the
    rescaling are dropped and the row is rescaled again, so the result still
    honours the threshold.
    """
    if not 0.0 < self_prob < 1.0:
        raise ValueError("self_prob must satisfy 0 < self_prob < 1")
    rows = {}
    thr = table.threshold
    for s, row in table.to_rows().items():
        others = {t: p for t, p in row.items() if t != s}
        while True:
            mass = sum(others.values())
            if not others or mass <= 0.0:
                new = {s: 1.0}
                break
            scale = (1.0 - self_prob) / mass
            scaled = {t: p * scale for t, p in others.items()}
            low = [t for t, p in scaled.items() if p < thr]
            if not low:
                new = dict(scaled)
                new[s] = self_prob
                break
            for t in low:
                del others[t]
        rows[s] = new
    return table._replace(rows, self_prob=self_prob)
