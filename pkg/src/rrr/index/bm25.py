"""Inverted index with Lucene-style BM25 scoring."""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field

from ..corpus import Document, DocumentStore, ScoredList
from .analysis import IndexParams, tokenize


class IndexBuildError(ValueError):
    pass


@dataclass
class InvertedIndex:
    params: IndexParams
    doc_ids: list[str]
    doc_lengths: list[int]
    # term -> [(doc ordinal, tf)], ordinals ascending
    postings: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    def __post_init__(self):
        self.avgdl = sum(self.doc_lengths) / len(self.doc_lengths) if self.doc_lengths else 0.0

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def search(self, query_text: str, k: int) -> ScoredList:
        return search(self, query_text, k)


def build_index(store: DocumentStore | list[Document], params: IndexParams = IndexParams()) -> InvertedIndex:
    docs = list(store)
    if not docs:
        raise IndexBuildError("cannot index an empty document store")
    doc_ids, lengths = [], []
    postings: dict[str, list[tuple[int, int]]] = {}
    for ordinal, doc in enumerate(docs):
        tokens = tokenize(f"{doc.title or ''} {doc.text}", params)
        doc_ids.append(doc.id)
        lengths.append(len(tokens))
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((ordinal, tf))
    return InvertedIndex(params=params, doc_ids=doc_ids, doc_lengths=lengths, postings=postings)


def search(index: InvertedIndex, query_text: str, k: int) -> ScoredList:
    """Top-k documents by BM25; ties go to the smaller doc id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    k1, b = index.params.k1, index.params.b
    avgdl = index.avgdl or 1.0
    scores: dict[int, float] = {}
    # query terms count once each
    for term in dict.fromkeys(tokenize(query_text, index.params)):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for ordinal, tf in plist:
            norm = k1 * (1.0 - b + b * index.doc_lengths[ordinal] / avgdl)
            scores[ordinal] = scores.get(ordinal, 0.0) + idf * tf / (tf + norm)
    top = heapq.nsmallest(k, scores.items(), key=lambda kv: (-kv[1], index.doc_ids[kv[0]]))
    return [(index.doc_ids[o], s) for o, s in top]
