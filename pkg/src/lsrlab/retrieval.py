"""Exact top-k retrieval over the inverted index, the retrieval-cost metric
(normalized posting-list traversal volume), and an Okapi BM25 baseline.

Ranking is exact inner-product scoring by posting-list traversal: no
approximate early termination. Ties are broken by ascending internal doc id
so reported metrics are reproducible.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .index import InvertedIndex, posting
from .sparsevec import SparseVec, prune


@dataclass(frozen=True)
class SearchResult:
    """Top-k hits as (external doc id, score), scores non-increasing.

    ``empty_query`` flags a query whose pruned vector had no terms.
    """

    hits: tuple[tuple[object, float], ...]
    empty_query: bool = False


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if self.k1 < 0 or not (0.0 <= self.b <= 1.0):
            raise DataError("require k1 >= 0 and 0 <= b <= 1")


def _top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Internal ids of the k best nonzero scores (desc score, asc doc id)."""
    nonzero = np.nonzero(scores)[0]
    order = np.lexsort((nonzero, -scores[nonzero]))
    return nonzero[order[:k]]


def search(index: InvertedIndex, query: SparseVec, qk: int, k: int) -> SearchResult:
    """Exact top-k by summed impact products over the pruned query's postings.

    Documents with score 0 (no term overlap) are excluded.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    pruned = prune(query, qk)
    if pruned.nnz == 0:
        return SearchResult(hits=(), empty_query=True)
    scores = np.zeros(index.n_docs, dtype=np.float64)
    for t, w in zip(pruned.ids, pruned.weights):
        ids, weights = posting(index, int(t))
        scores[ids] += w * weights
    best = _top_k(scores, k)
    return SearchResult(
        hits=tuple((index.doc_ids[i], float(scores[i])) for i in best)
    )


def flops_metric(
    index: InvertedIndex, queries: Sequence[tuple[object, SparseVec]], qk: int
) -> float:
    """Mean traversed posting volume per query, normalized by collection size.

    Sum over queries of the pruned query terms' posting-list lengths, divided
    by |Q| * |D|; terms absent from the index contribute 0.
    """
    if not len(queries):
        raise DataError("query set must be nonempty")
    if index.n_docs == 0:
        raise DataError("index has no documents")
    total = 0
    for _, q in queries:
        pruned = prune(q, qk)
        total += sum(posting(index, int(t))[0].size for t in pruned.ids)
    return total / (len(queries) * index.n_docs)


class Bm25Corpus:
    """Word-level corpus statistics for BM25 scoring and lexical cost metrics.

    Documents are given pre-tokenized (whitespace words); scoring uses raw
    term frequencies with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).
    """

    def __init__(self, docs: Sequence[tuple[object, Sequence[str]]]):
        if not len(docs):
            raise DataError("BM25 corpus must be nonempty")
        ids = [d for d, _ in docs]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate document id")
        order = sorted(range(len(docs)), key=lambda i: ids[i])
        self.doc_ids = tuple(ids[i] for i in order)
        self.term_freqs = [Counter(docs[i][1]) for i in order]
        self.doc_lens = np.array([len(docs[i][1]) for i in order], dtype=np.float64)
        self.avg_len = float(self.doc_lens.mean())
        self.df = Counter()
        for tf in self.term_freqs:
            self.df.update(tf.keys())

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def bm25_search(
    corpus: Bm25Corpus, query_words: Sequence[str], params: Bm25Params, k: int
) -> SearchResult:
    """Okapi BM25 over the word-level corpus, exact top-k, same tie rule."""
    if k < 1:
        raise DataError("k must be >= 1")
    terms = sorted(set(query_words))
    scores = np.zeros(corpus.n_docs, dtype=np.float64)
    for t in terms:
        if t not in corpus.df:
            continue
        idf = corpus.idf(t)
        tf = np.array([f.get(t, 0) for f in corpus.term_freqs], dtype=np.float64)
        norm = params.k1 * (1.0 - params.b + params.b * corpus.doc_lens / corpus.avg_len)
        # zero tf contributes 0; the where() keeps the k1=0 corner off 0/0
        scores += idf * (tf * (params.k1 + 1.0)) / np.where(tf > 0, tf + norm, 1.0)
    best = _top_k(scores, k)
    return SearchResult(
        hits=tuple((corpus.doc_ids[i], float(scores[i])) for i in best)
    )


def flops_metric_bm25(
    corpus: Bm25Corpus, queries: Sequence[Sequence[str]]
) -> float:
    """The retrieval-cost metric applied to the lexical word-level index.

    Each distinct query word contributes its document frequency (the lexical
    posting-list length); words absent from the corpus contribute 0.
    """
    if not len(queries):
        raise DataError("query set must be nonempty")
    total = 0
    for words in queries:
        total += sum(corpus.df.get(t, 0) for t in set(words))
    return total / (len(queries) * corpus.n_docs)
