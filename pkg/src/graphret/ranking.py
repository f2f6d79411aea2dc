"""One-stage and two-stage ranking of candidate cases."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RankedList:
    query_id: str
    items: tuple[tuple[str, float], ...]

    def __post_init__(self):
        ids = [c for c, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate candidates in ranking for {self.query_id!r}")

    @property
    def ids(self) -> list[str]:
        return [c for c, _ in self.items]

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.items]

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def from_scores(cls, query_id: str, ids: Sequence[str], scores) -> "RankedList":
        """Sort by descending score, ties by ascending id."""
        pairs = sorted(zip(ids, (float(s) for s in scores)), key=lambda p: (-p[1], p[0]))
        return cls(query_id, tuple(pairs))

    def to_record(self) -> dict:
        return {"query_id": self.query_id, "ranking": [[c, s] for c, s in self.items]}

    @classmethod
    def from_record(cls, rec: dict) -> "RankedList":
        return cls(str(rec["query_id"]), tuple((str(c), float(s)) for c, s in rec["ranking"]))


def similarity_matrix(queries: np.ndarray, cands: np.ndarray, similarity: str = "dot") -> np.ndarray:
    queries = np.atleast_2d(queries)
    cands = np.atleast_2d(cands)
    if similarity == "cosine":
        queries = queries / np.maximum(np.linalg.norm(queries, axis=1, keepdims=True), 1e-12)
        cands = cands / np.maximum(np.linalg.norm(cands, axis=1, keepdims=True), 1e-12)
    elif similarity != "dot":
        raise ValueError(f"unknown similarity {similarity!r}")
    return queries @ cands.T


def rank_by_vectors(
    query_id: str,
    query_vec: np.ndarray,
    cand_ids: Sequence[str],
    cand_vecs: np.ndarray,
    similarity: str = "dot",
) -> RankedList:
    """Rank candidates by similarity; the query never appears in its own list."""
    keep = [i for i, c in enumerate(cand_ids) if c != query_id]
    if not keep:
        return RankedList(query_id, ())
    sims = similarity_matrix(query_vec, cand_vecs[keep], similarity)[0]
    return RankedList.from_scores(query_id, [cand_ids[i] for i in keep], sims)


def rank_one_stage(model, query_case, candidate_pool: Sequence) -> RankedList:
    """Rank every case in ``candidate_pool`` against ``query_case``.

    ``model`` needs ``transform(cases) -> array`` and a ``similarity`` attribute.
    """
    pool = [c for c in candidate_pool if c.case_id != query_case.case_id]
    if not pool:
        return RankedList(query_case.case_id, ())
    vecs = model.transform([query_case] + pool)
    return rank_by_vectors(
        query_case.case_id, vecs[0], [c.case_id for c in pool], vecs[1:], model.similarity
    )


def rank_two_stage(model, query_case, candidate_pool: Sequence, bm25, first_stage_k: int = 10) -> RankedList:
    """Rerank BM25's top ``first_stage_k`` by model similarity."""
    pool_ids = {c.case_id for c in candidate_pool} - {query_case.case_id}
    first = bm25_first_stage(bm25, query_case, pool_ids, first_stage_k)
    by_id = {c.case_id: c for c in candidate_pool}
    return rank_one_stage(model, query_case, [by_id[c] for c in first.ids])


def bm25_first_stage(bm25, query_case, pool_ids, k: int) -> RankedList:
    pool_ids = set(pool_ids) - {query_case.case_id}
    exclude = [d for d in bm25.ids_ if d not in pool_ids]
    top = bm25.top_k(query_case.text, k, exclude=exclude)
    return RankedList(query_case.case_id, tuple(top))


def rerank(first_stage: RankedList, vectors: dict, query_vec: np.ndarray, similarity: str = "dot") -> RankedList:
    """Reorder an existing ranking using precomputed vectors keyed by case id."""
    ids = first_stage.ids
    if not ids:
        return RankedList(first_stage.query_id, ())
    mat = np.stack([vectors[c] for c in ids])
    return rank_by_vectors(first_stage.query_id, query_vec, ids, mat, similarity)
