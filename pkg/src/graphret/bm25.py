"""Okapi BM25 over an inverted index.

Per-term contribution::

    idf(t) * tf / (tf + k1 * (1 - b + b * len / avglen))
    idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)

Query terms are taken as a set. Tokenisation is shared with the hashing
encoder.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .encoder import tokenize


class BM25(BaseEstimator):
    def __init__(self, k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b

    def fit(self, texts: Sequence[str], ids: Sequence[str] | None = None):
        ids = [str(i) for i in (ids if ids is not None else range(len(texts)))]
        if len(ids) != len(texts):
            raise ValueError(f"{len(ids)} ids for {len(texts)} documents")
        counts = Counter(ids)
        dupes = sorted(i for i, c in counts.items() if c > 1)
        if dupes:
            raise ValueError(f"duplicate document ids: {dupes[:5]}")

        self.ids_ = list(ids)
        self.index_of_ = {d: i for i, d in enumerate(self.ids_)}
        self.tf_ = [Counter(tokenize(t)) for t in texts]
        self.doc_len_ = np.array([sum(tf.values()) for tf in self.tf_], dtype=np.float64)
        self.doc_count_ = len(texts)
        self.avg_doc_len_ = float(self.doc_len_.mean()) if self.doc_count_ else 0.0
        df: dict[str, int] = defaultdict(int)
        postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for i, tf in enumerate(self.tf_):
            for term, c in tf.items():
                df[term] += 1
                postings[term].append((i, c))
        self.df_ = dict(df)
        self.postings_ = {
            t: (np.array([i for i, _ in p]), np.array([c for _, c in p], dtype=np.float64))
            for t, p in postings.items()
        }
        return self

    def idf(self, term: str) -> float:
        df = self.df_.get(term, 0)
        return math.log((self.doc_count_ - df + 0.5) / (df + 0.5) + 1.0)

    def _norm(self, lengths):
        avg = self.avg_doc_len_ if self.avg_doc_len_ > 0 else 1.0
        return self.k1 * (1.0 - self.b + self.b * lengths / avg)

    def score(self, query: str, doc_id: str) -> float:
        try:
            i = self.index_of_[str(doc_id)]
        except KeyError:
            raise KeyError(f"unknown document id {doc_id!r}") from None
        tf = self.tf_[i]
        norm = self._norm(self.doc_len_[i])
        total = 0.0
        for term in set(tokenize(query)):
            f = tf.get(term, 0)
            if f:
                total += self.idf(term) * f / (f + norm)
        return total

    def scores(self, query: str) -> np.ndarray:
        """Scores of every indexed document, in index order."""
        out = np.zeros(self.doc_count_)
        norms = self._norm(self.doc_len_)
        for term in set(tokenize(query)):
            post = self.postings_.get(term)
            if post is None:
                continue
            idx, f = post
            out[idx] += self.idf(term) * f / (f + norms[idx])
        return out

    def top_k(self, query: str, k: int, exclude: Iterable[str] = ()) -> list[tuple[str, float]]:
        """Highest-scoring documents; ties go to the smaller id."""
        if k < 0:
            raise ValueError("k must be >= 0")
        if k == 0 or self.doc_count_ == 0:
            return []
        excl = set(exclude)
        s = self.scores(query)
        order = sorted(
            (i for i in range(self.doc_count_) if self.ids_[i] not in excl),
            key=lambda i: (-s[i], self.ids_[i]),
        )
        return [(self.ids_[i], float(s[i])) for i in order[:k]]


def build_index(docs: Sequence[tuple[str, str]], k1: float = 1.2, b: float = 0.75) -> BM25:
    """Index ``(id, text)`` pairs."""
    return BM25(k1=k1, b=b).fit([t for _, t in docs], [i for i, _ in docs])
