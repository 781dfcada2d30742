"""Okapi BM25 over a passage corpus, used as the retrieval-context baseline.

idf uses the ln(1 + (N - df + 0.5) / (df + 0.5)) form, which keeps every
score nonnegative. Query terms are scored as a multiset: a duplicated query
term contributes once per occurrence.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "Bm25Params",
    "Bm25Index",
    "RetrievalError",
    "tokenize",
    "build_index",
    "score",
    "top_k",
    "save_index",
    "load_index",
]

# Alphanumeric runs (unicode-aware, underscore excluded).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

INDEX_FORMAT = "bm25-index"
INDEX_VERSION = 1


class RetrievalError(ValueError):
    """Index construction or lookup error."""


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4


@dataclass(frozen=True)
class Bm25Index:
    doc_count: int
    avg_doc_len: float
    postings: dict[str, tuple[tuple[str, int], ...]]
    doc_lengths: dict[str, int]
    params: Bm25Params = field(default_factory=Bm25Params)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; no stemming, no
    stopword removal."""
    return _TOKEN_RE.findall(text.lower())


def build_index(
    passages: list[tuple[str, str]], params: Bm25Params = Bm25Params()
) -> Bm25Index:
    doc_lengths: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for doc_id, text in passages:
        if doc_id in doc_lengths:
            raise RetrievalError(f"duplicate doc id {doc_id!r}")
        tokens = tokenize(text)
        doc_lengths[doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((doc_id, tf))
    doc_count = len(doc_lengths)
    avg_doc_len = sum(doc_lengths.values()) / doc_count if doc_count else 0.0
    # Canonical posting order makes the index independent of insertion order.
    frozen = {
        term: tuple(sorted(entries)) for term, entries in sorted(postings.items())
    }
    return Bm25Index(
        doc_count=doc_count,
        avg_doc_len=avg_doc_len,
        postings=frozen,
        doc_lengths=doc_lengths,
        params=params,
    )


def _idf(index: Bm25Index, df: int) -> float:
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def score(index: Bm25Index, query: str, doc_id: str) -> float:
    """BM25 score of one document for a query; 0 when no query term occurs
    in the document."""
    if doc_id not in index.doc_lengths:
        raise RetrievalError(f"unknown doc id {doc_id!r}")
    k1, b = index.params.k1, index.params.b
    doc_len = index.doc_lengths[doc_id]
    total = 0.0
    for term in tokenize(query):
        entries = index.postings.get(term)
        if not entries:
            continue
        tf = 0
        for entry_id, entry_tf in entries:
            if entry_id == doc_id:
                tf = entry_tf
                break
        if tf == 0:
            continue
        norm = tf + k1 * (1.0 - b + b * doc_len / index.avg_doc_len)
        total += _idf(index, len(entries)) * tf * (k1 + 1.0) / norm
    return total


def top_k(index: Bm25Index, query: str, k: int) -> list[tuple[str, float]]:
    """Best k documents by descending score, ties by ascending doc id;
    documents scoring 0 are never returned."""
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    k1, b = index.params.k1, index.params.b
    accumulator: dict[str, float] = {}
    for term in tokenize(query):
        entries = index.postings.get(term)
        if not entries:
            continue
        idf = _idf(index, len(entries))
        for doc_id, tf in entries:
            doc_len = index.doc_lengths[doc_id]
            norm = tf + k1 * (1.0 - b + b * doc_len / index.avg_doc_len)
            accumulator[doc_id] = accumulator.get(doc_id, 0.0) + idf * tf * (k1 + 1.0) / norm
    ranked = [(doc_id, s) for doc_id, s in accumulator.items() if s > 0.0]
    ranked.sort(key=lambda pair: (-pair[1], pair[0]))
    return ranked[:k]


def save_index(index: Bm25Index, path: str | Path) -> None:
    """Persist as line-delimited JSON with a version header."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        header = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "doc_count": index.doc_count,
            "avg_doc_len": index.avg_doc_len,
            "k1": index.params.k1,
            "b": index.params.b,
        }
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for doc_id in sorted(index.doc_lengths):
            row = {"doc": doc_id, "len": index.doc_lengths[doc_id]}
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
        for term in sorted(index.postings):
            row = {"term": term, "postings": [list(e) for e in index.postings[term]]}
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def load_index(path: str | Path) -> Bm25Index:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise RetrievalError(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
        raise RetrievalError(f"{path} is not a version-{INDEX_VERSION} {INDEX_FORMAT} file")
    doc_lengths: dict[str, int] = {}
    postings: dict[str, tuple[tuple[str, int], ...]] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        row = json.loads(line)
        if "doc" in row:
            doc_lengths[row["doc"]] = row["len"]
        elif "term" in row:
            postings[row["term"]] = tuple((d, tf) for d, tf in row["postings"])
        else:
            raise RetrievalError(f"unrecognized index row: {line[:80]}")
    index = Bm25Index(
        doc_count=header["doc_count"],
        avg_doc_len=header["avg_doc_len"],
        postings=postings,
        doc_lengths=doc_lengths,
        params=Bm25Params(k1=header["k1"], b=header["b"]),
    )
    if index.doc_count != len(doc_lengths):
        raise RetrievalError(
            f"header doc_count {index.doc_count} != {len(doc_lengths)} doc rows"
        )
    return index
