import numpy as np
import pytest

from graphret.bm25 import BM25
from graphret.io import CaseRecord
from graphret.ranking import RankedList, rank_by_vectors, rank_one_stage, rank_two_stage, rerank


class FixedModel:
    """Looks representations up by case id."""

    similarity = "dot"

    def __init__(self, vectors):
        self.vectors = vectors

    def transform(self, cases):
        return np.array([self.vectors[c.case_id] for c in cases], dtype=float)


def _case(cid, text=""):
    return CaseRecord(cid, text, "")


def test_duplicates_of_query_rank_first():
    vecs = {"q": [1.0, 2.0], "dup1": [1.0, 2.0], "dup2": [1.0, 2.0], "x": [-1.0, 0.0]}
    pool = [_case(c) for c in ("x", "dup2", "dup1")]
    r = rank_one_stage(FixedModel(vecs), _case("q"), pool)
    assert r.ids == ["dup1", "dup2", "x"]
    assert rank_one_stage(FixedModel(vecs), _case("q"), pool) == r


def test_three_candidate_hand_order():
    vecs = {"q": [1.0, 0.5], "a": [0.0, 1.0], "b": [2.0, -1.0], "c": [0.5, 0.5]}
    # dot products: a 0.5, b 1.5, c 0.75
    r = rank_one_stage(FixedModel(vecs), _case("q"), [_case(c) for c in "abc"])
    assert r.ids == ["b", "c", "a"]
    assert r.scores == pytest.approx([1.5, 0.75, 0.5])


def test_empty_pool_and_query_excluded():
    vecs = {"q": [1.0]}
    assert rank_one_stage(FixedModel(vecs), _case("q"), []).items == ()
    assert rank_one_stage(FixedModel(vecs), _case("q"), [_case("q")]).items == ()


def test_ranked_list_rejects_duplicates_and_round_trips():
    with pytest.raises(ValueError):
        RankedList("q", (("a", 1.0), ("a", 0.5)))
    r = RankedList.from_scores("q", ["b", "a", "c"], [1.0, 1.0, 2.0])
    assert r.ids == ["c", "a", "b"]
    assert RankedList.from_record(r.to_record()) == r


TEXTS = {
    "q": "visa refused spouse",
    "a": "visa refused appeal",
    "b": "spouse visa",
    "c": "tax appeal",
    "d": "visa visa refused spouse",
    "e": "criminal record",
}


def _toy():
    rng = np.random.default_rng(0)
    vecs = {c: rng.normal(size=3) for c in TEXTS}
    pool = [_case(c, t) for c, t in TEXTS.items()]
    bm25 = BM25().fit(list(TEXTS.values()), list(TEXTS))
    return FixedModel(vecs), pool, bm25


def test_two_stage_is_permutation_of_first_stage():
    model, pool, bm25 = _toy()
    for k in range(0, 7):
        two = rank_two_stage(model, pool[0], pool, bm25, first_stage_k=k)
        first = bm25.top_k(TEXTS["q"], k, exclude={"q"})
        assert sorted(two.ids) == sorted(d for d, _ in first)


def test_two_stage_with_large_k_equals_one_stage():
    model, pool, bm25 = _toy()
    assert rank_two_stage(model, pool[0], pool, bm25, first_stage_k=50) == rank_one_stage(model, pool[0], pool)


def test_two_stage_toy_composition():
    model, pool, bm25 = _toy()
    first = [d for d, _ in bm25.top_k(TEXTS["q"], 3, exclude={"q"})]
    q = model.vectors["q"]
    expected = sorted(first, key=lambda d: (-float(q @ model.vectors[d]), d))
    assert rank_two_stage(model, pool[0], pool, bm25, first_stage_k=3).ids == expected


def test_rerank_and_cosine():
    first = RankedList("q", (("a", 3.0), ("b", 2.0)))
    vecs = {"a": np.array([1.0, 0.0]), "b": np.array([10.0, 10.0])}
    q = np.array([0.0, 1.0])
    assert rerank(first, vecs, q).ids == ["b", "a"]
    r = rank_by_vectors("q", q, ["a", "b"], np.stack([vecs["a"], vecs["b"]]), "cosine")
    assert r.scores == pytest.approx([np.sqrt(0.5), 0.0])
