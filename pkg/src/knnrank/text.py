"""Tokenization and corpus reading.

Tokens are maximal runs of Unicode letters/digits (underscore excluded),
lowercased.  Undecodable bytes in input files are replaced with U+FFFD,
which is never a word character, so they act as token separators.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

_WORD = re.compile(r"[^\W_]+")

SPLITS = ("train", "dev", "dev1", "dev2", "test", "tran")
FIELDS = ("lemma", "original")


@dataclass(frozen=True)
class QaPair:
    pair_id: str
    split: str
    question: str
    answer: str


def tokenize(text: str, stopwords: Iterable[str] = ()) -> list[str]:
    """Lowercase, strip punctuation and drop stopwords, keeping order."""
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    return [t for t in _WORD.findall(text.lower()) if t not in stop]


def apply_lemmas(tokens: list[str], lemmas: Mapping[str, str] | None,
                 stopwords: Iterable[str] = ()) -> list[str]:
    """Map tokens through a lemma table; unknown tokens pass through."""
    if not lemmas:
        return list(tokens)
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    out = []
    for t in tokens:
        lemma = lemmas.get(t, t)
        if lemma not in stop:
            out.append(lemma)
    return out


class TextProcessor:
    """Tokenizer bound to a stopword set and an optional lemma map."""

    def __init__(self, stopwords: Iterable[str] = (), lemmas: Mapping[str, str] | None = None):
        self.stopwords = frozenset(stopwords)
        self.lemmas = dict(lemmas) if lemmas else {}

    def terms(self, text: str, field: str = "lemma") -> list[str]:
        if field not in FIELDS:
            raise ValueError(f"unknown field {field!r}; expected one of {FIELDS}")
        tokens = tokenize(text, self.stopwords)
        if field == "lemma":
            return apply_lemmas(tokens, self.lemmas, self.stopwords)
        return tokens


def default_stopwords() -> frozenset[str]:
    data = resources.files("knnrank").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(_parse_word_lines(data.splitlines()))


def _parse_word_lines(lines: Iterable[str]) -> list[str]:
    out = []
    for line in lines:
        w = line.strip().lower()
        if w and not w.startswith("#"):
            out.append(w)
    return out


def load_stopwords(path: str | Path | None) -> frozenset[str]:
    if path is None:
        return default_stopwords()
    with open(path, encoding="utf-8", errors="replace") as f:
        return frozenset(_parse_word_lines(f))


def load_lemma_map(path: str | Path | None) -> dict[str, str]:
    """Read ``term<TAB>lemma`` lines."""
    if path is None:
        return {}
    out: dict[str, str] = {}
    with open(path, encoding="utf-8", errors="replace") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'term<TAB>lemma'")
            out[parts[0].strip().lower()] = parts[1].strip().lower()
    return out


def read_corpus(path: str | Path) -> Iterator[QaPair]:
    """Yield QA pairs from a ``id<TAB>split<TAB>question<TAB>answer`` file."""
    with open(path, encoding="utf-8", errors="replace", newline="\n") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            pair_id, split, question, answer = parts
            if split not in SPLITS:
                raise ValueError(f"{path}:{lineno}: unknown split {split!r}")
            if not answer.strip():
                raise ValueError(f"{path}:{lineno}: empty answer for pair {pair_id!r}")
            yield QaPair(pair_id, split, question, answer)


def write_corpus(pairs: Iterable[QaPair]) -> str:
    lines = []
    for p in pairs:
        for field in (p.pair_id, p.split, p.question, p.answer):
            if "\t" in field or "\n" in field:
                raise ValueError(f"pair {p.pair_id!r} contains a tab or newline")
        lines.append(f"{p.pair_id}\t{p.split}\t{p.question}\t{p.answer}\n")
    return "".join(lines)
