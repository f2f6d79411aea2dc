"""Scikit-learn style retriever wrapping graph building, training and ranking."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .bm25 import BM25
from .encoder import HashingEncoder, encoder_from_config
from .graph import GraphBuilder
from .io import CaseRecord
from .metrics import evaluate
from .model import EdgeGATNetwork, ModelConfig, load_checkpoint, save_checkpoint
from .ranking import RankedList, bm25_first_stage, rank_by_vectors, rerank
from .training import ContrastiveTrainer, TrainConfig


def check_cases(X) -> list[CaseRecord]:
    cases = list(X)
    for c in cases:
        if not isinstance(c, CaseRecord):
            raise TypeError(f"expected CaseRecord objects, got {type(c).__name__}")
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate case ids")
    return cases


class EdgeGATRetriever(BaseEstimator):
    """Case retriever: text-attributed graphs, edge-aware attention, contrastive training.

    ``fit(cases, labels)`` trains on ``labels`` (query id -> relevant ids)
    using ``cases`` as the candidate pool. ``transform(cases)`` returns one
    representation row per case; ``rank`` produces one- or two-stage
    rankings and ``score`` reports MRR@5.
    """

    def __init__(
        self,
        dim=32,
        encoder_seed=0,
        normalize=True,
        layer_dims=(32, 32),
        n_heads=2,
        readout="virtual_global",
        variant="edgegat",
        dropout=0.1,
        virtual_node=True,
        tau=0.1,
        n_easy=1,
        m_hard=5,
        batch_size=16,
        learning_rate=5e-3,
        weight_decay=1e-4,
        epochs=20,
        seed=0,
        similarity="dot",
        first_stage_k=10,
        encoder=None,
    ):
        self.dim = dim
        self.encoder_seed = encoder_seed
        self.normalize = normalize
        self.layer_dims = layer_dims
        self.n_heads = n_heads
        self.readout = readout
        self.variant = variant
        self.dropout = dropout
        self.virtual_node = virtual_node
        self.tau = tau
        self.n_easy = n_easy
        self.m_hard = m_hard
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.seed = seed
        self.similarity = similarity
        self.first_stage_k = first_stage_k
        self.encoder = encoder

    # -- configuration ----------------------------------------------------

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            in_dim=self.dim,
            layer_dims=list(self.layer_dims),
            n_heads=self.n_heads,
            readout=self.readout,
            variant=self.variant,
            dropout=self.dropout,
            virtual_node=self.virtual_node,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            tau=self.tau,
            n_easy=self.n_easy,
            m_hard=self.m_hard,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            seed=self.seed,
            similarity=self.similarity,
        )

    def _make_encoder(self):
        if self.encoder is not None:
            return self.encoder
        return HashingEncoder(dim=self.dim, normalize=self.normalize, seed=self.encoder_seed).fit()

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("call fit() or initialize() first")

    # -- estimator API ----------------------------------------------------

    def initialize(self, X=None):
        """Set up encoder and a freshly initialised network without training."""
        self.model_config()
        self.train_config()
        self.encoder_ = self._make_encoder()
        self.builder_ = GraphBuilder(self.encoder_, self.virtual_node)
        self.net_ = EdgeGATNetwork(self.model_config(), seed=self.seed)
        self.history_ = []
        self._graph_cache = {}
        if X is not None:
            cases = check_cases(X)
            self.bm25_ = BM25().fit([c.text for c in cases], [c.case_id for c in cases])
        return self

    def fit(self, X, y: Mapping[str, Sequence[str]], callback=None):
        cases = check_cases(X)
        self.initialize(cases)
        graphs = self._graphs(cases)
        texts = {c.case_id: c.text for c in cases}
        trainer = ContrastiveTrainer(
            self.net_, graphs, texts, y, self.train_config(), bm25=self.bm25_
        )
        self.history_ = []
        for _ in range(self.epochs):
            stats = trainer.train_epoch()
            self.history_.append(stats)
            if callback is not None:
                callback(stats)
        return self

    def _graphs(self, cases) -> dict:
        out = {}
        for c in cases:
            key = (c.case_id, c.fact_text, c.issue_text, repr(c.fact_triplets), repr(c.issue_triplets))
            pair = self._graph_cache.get(key)
            if pair is None:
                pair = self.builder_.build_case(c)
                self._graph_cache[key] = pair
            out[c.case_id] = pair
        return out

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        cases = check_cases(X)
        graphs = self._graphs(cases)
        return self.net_.encode([graphs[c.case_id] for c in cases])

    def rank(
        self,
        queries,
        pool=None,
        two_stage: bool = False,
        k: int | None = None,
    ) -> list[RankedList]:
        """Rank ``pool`` (default: the fitted corpus) for every query case."""
        self._check_fitted()
        queries = check_cases(queries)
        pool = check_cases(pool) if pool is not None else None
        if pool is None:
            raise ValueError("pass the candidate pool explicitly")
        qvecs = self.transform(queries)
        pvecs = self.transform(pool)
        pool_ids = [c.case_id for c in pool]
        out = []
        if two_stage:
            bm25 = self._bm25_for(pool)
            vec_of = dict(zip(pool_ids, pvecs))
            for q, qv in zip(queries, qvecs):
                first = bm25_first_stage(bm25, q, pool_ids, self.first_stage_k)
                out.append(rerank(first, vec_of, qv, self.similarity))
        else:
            for q, qv in zip(queries, qvecs):
                out.append(rank_by_vectors(q.case_id, qv, pool_ids, pvecs, self.similarity))
        if k is not None:
            out = [RankedList(r.query_id, r.items[:k]) for r in out]
        return out

    def _bm25_for(self, pool) -> BM25:
        ids = [c.case_id for c in pool]
        bm25 = getattr(self, "bm25_", None)
        if bm25 is None or not set(ids) <= set(bm25.ids_):
            bm25 = BM25().fit([c.text for c in pool], ids)
        return bm25

    def score(self, X, y, two_stage: bool = False) -> float:
        """MRR@5 of the queries in ``y`` against the pool ``X``."""
        cases = check_cases(X)
        by_id = {c.case_id: c for c in cases}
        queries = [by_id[q] for q in y]
        return evaluate(self.rank(queries, cases, two_stage), y).mrr

    # -- persistence ------------------------------------------------------

    def save(self, path, extra: dict | None = None) -> None:
        self._check_fitted()
        enc = self.encoder_.config() if hasattr(self.encoder_, "config") else {}
        meta = {"estimator": self.get_params(deep=False) | {"encoder": None}, "encoder": enc}
        meta["history"] = self.history_
        if extra:
            meta.update(extra)
        save_checkpoint(self.net_, path, meta)

    @classmethod
    def load(cls, path) -> "EdgeGATRetriever":
        net, header = load_checkpoint(path)
        params = dict(header["extra"]["estimator"])
        params["layer_dims"] = tuple(params["layer_dims"])
        params.pop("encoder", None)
        est = cls(**params)
        est.encoder = encoder_from_config(header["extra"]["encoder"])
        est.initialize()
        est.net_ = net
        est.history_ = header["extra"].get("history", [])
        return est
