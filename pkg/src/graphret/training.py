"""Contrastive training with random, in-batch and BM25-mined negatives."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .bm25 import BM25
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    """A loss or parameter became NaN or infinite."""


@dataclass
class TrainConfig:
    tau: float = 0.1
    n_easy: int = 1
    m_hard: int = 5
    batch_size: int = 16
    learning_rate: float = 5e-3
    weight_decay: float = 1e-4
    epochs: int = 20
    seed: int = 0
    similarity: str = "dot"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.n_easy < 0 or self.m_hard < 0:
            raise ValueError("negative sample counts must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.similarity not in ("dot", "cosine"):
            raise ValueError(f"similarity must be 'dot' or 'cosine', got {self.similarity!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _stack(vectors) -> list[Tensor]:
    if vectors is None:
        return []
    if isinstance(vectors, Tensor):
        return [vectors] if vectors.rows else []
    return [v for v in vectors if v.rows]


def contrastive_loss(
    h_q: Tensor,
    h_pos: Tensor,
    easy_negs=None,
    hard_negs=None,
    tau: float = 0.1,
    similarity: str = "dot",
) -> Tensor:
    """``-log softmax`` of the positive among positive and negatives at temperature ``tau``.

    Negatives may be given as lists of row vectors or as stacked matrices.
    With no negatives the loss is exactly zero.
    """
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    cands = T.concat_rows(h_pos, *_stack(easy_negs), *_stack(hard_negs))
    if cands.cols != h_q.cols:
        raise T.ShapeError(f"query has dim {h_q.cols}, candidates {cands.cols}")
    if similarity == "cosine":
        h_q = T.normalize_rows(h_q)
        h_pos = T.normalize_rows(h_pos)
        cands = T.normalize_rows(cands)
    elif similarity != "dot":
        raise ValueError(f"unknown similarity {similarity!r}")
    logits = T.scale(T.matmul(h_q, T.transpose(cands)), 1.0 / tau)
    pos = T.scale(T.matmul(h_q, T.transpose(h_pos)), 1.0 / tau)
    return T.sub(T.logsumexp(logits), pos)


def contrastive_loss_from_scores(s_pos: float, s_negs: Sequence[float], tau: float) -> float:
    """Scalar loss given similarities directly (no gradient)."""
    z = np.array([s_pos, *s_negs], dtype=np.float64) / tau
    m = z.max()
    return float(m + math.log(np.exp(z - m).sum()) - z[0])


def mine_hard_negatives(
    query_id: str,
    query_text: str,
    bm25: BM25,
    m: int,
    relevant_ids,
    candidate_pool=None,
) -> list[str]:
    """Top-``m`` BM25 hits for the query that are neither relevant nor the query."""
    if m <= 0:
        return []
    skip = set(relevant_ids) | {query_id}
    if candidate_pool is not None:
        allowed = set(candidate_pool)
        skip |= {d for d in bm25.ids_ if d not in allowed}
    hits = bm25.top_k(query_text, m, exclude=skip)
    if len(hits) < m:
        log.warning("query %s: only %d hard negatives available (wanted %d)", query_id, len(hits), m)
    return [d for d, _ in hits]


class Adam:
    """Adam with decoupled weight decay (the decay is scaled by the learning rate)."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p.data
            p.data -= self.lr * update


def _sample_without(rng, population: Sequence[str], k: int, exclude: set) -> list[str]:
    options = [c for c in population if c not in exclude]
    if k <= 0 or not options:
        return []
    k = min(k, len(options))
    return [options[i] for i in rng.choice(len(options), size=k, replace=False)]


class ContrastiveTrainer:
    """Holds the sampling state and optimiser across epochs.

    ``graphs`` maps case id to its ``(fact_graph, issue_graph)`` pair and
    ``texts`` to the lexical text used for hard-negative mining. ``pool``
    lists the candidate ids negatives are drawn from (default: all of
    ``graphs``).
    """

    def __init__(
        self,
        net,
        graphs: Mapping[str, tuple],
        texts: Mapping[str, str],
        labels: Mapping[str, Sequence[str]],
        cfg: TrainConfig,
        pool: Sequence[str] | None = None,
        bm25: BM25 | None = None,
    ):
        self.net = net
        self.graphs = graphs
        self.cfg = cfg
        self.pool = sorted(pool if pool is not None else graphs)
        self.rng = np.random.default_rng(cfg.seed)
        self.drop_rng = np.random.default_rng([cfg.seed, 1])
        self.epoch = 0

        self.queries: list[str] = []
        self.positives: dict[str, list[str]] = {}
        self.skipped: list[str] = []
        for q in sorted(labels):
            pos = [r for r in labels[q] if r in graphs] if q in graphs else []
            if not pos:
                log.warning("query %s has no usable relevant case; skipped", q)
                self.skipped.append(q)
                continue
            self.queries.append(q)
            self.positives[q] = pos

        self.hard: dict[str, list[str]] = {}
        if cfg.m_hard > 0 and self.queries:
            if bm25 is None:
                bm25 = BM25().fit([texts[c] for c in self.pool], self.pool)
            # BM25 scores are static, so one mining pass serves every epoch.
            for q in self.queries:
                self.hard[q] = mine_hard_negatives(
                    q, texts[q], bm25, cfg.m_hard, self.positives[q], self.pool
                )
        self.opt = Adam(net.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)

    def _plan(self, batch):
        plan = []
        for q in batch:
            rel = set(self.positives[q]) | {q}
            pos = self.positives[q][int(self.rng.integers(len(self.positives[q])))]
            easy = _sample_without(self.rng, self.pool, self.cfg.n_easy, rel)
            plan.append((q, pos, easy, self.hard.get(q, [])))
        return plan

    def _step(self, plan) -> list[float]:
        cfg = self.cfg
        batch_pos = [p for _, p, _, _ in plan]
        rows: dict[str, int] = {}
        for q, pos, easy, hneg in plan:
            for c in (q, pos, *easy, *hneg):
                rows.setdefault(c, len(rows))
        ids = list(rows)

        self.opt.zero_grad()
        values = []
        with Tape() as tape:
            reps = self.net.case_representation(
                [self.graphs[c][0] for c in ids],
                [self.graphs[c][1] for c in ids],
                training=True,
                rng=self.drop_rng,
            )
            total = None
            for qi, (q, pos, easy, hneg) in enumerate(plan):
                excl = set(self.positives[q]) | {q}
                in_batch = sorted({p for j, p in enumerate(batch_pos) if j != qi and p not in excl})
                easy_rows = [rows[c] for c in easy] + [rows[c] for c in in_batch]
                loss_q = contrastive_loss(
                    T.gather_rows(reps, [rows[q]]),
                    T.gather_rows(reps, [rows[pos]]),
                    T.gather_rows(reps, easy_rows) if easy_rows else None,
                    T.gather_rows(reps, [rows[c] for c in hneg]) if hneg else None,
                    tau=cfg.tau,
                    similarity=cfg.similarity,
                )
                values.append(loss_q.item())
                total = loss_q if total is None else T.add(total, loss_q)
            total = T.scale(total, 1.0 / len(plan))
            if not math.isfinite(total.item()):
                raise NumericalError(f"non-finite loss in epoch {self.epoch}")
            tape.backward(total)
        self.opt.step()
        return values

    def train_epoch(self) -> dict:
        order = [self.queries[i] for i in self.rng.permutation(len(self.queries))]
        losses: list[float] = []
        for start in range(0, len(order), self.cfg.batch_size):
            losses += self._step(self._plan(order[start:start + self.cfg.batch_size]))
        for p in self.net.parameters():
            if not np.all(np.isfinite(p.data)):
                raise NumericalError(f"non-finite parameter after epoch {self.epoch}")
        stats = {
            "epoch": self.epoch,
            "mean_loss": float(np.mean(losses)) if losses else 0.0,
            "n_queries": len(losses),
            "skipped": len(self.skipped),
        }
        log.info("epoch %d mean loss %.5f", self.epoch, stats["mean_loss"])
        self.epoch += 1
        return stats


def train(
    net,
    graphs: Mapping[str, tuple],
    texts: Mapping[str, str],
    labels: Mapping[str, Sequence[str]],
    cfg: TrainConfig,
    pool: Sequence[str] | None = None,
    bm25: BM25 | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> list[dict]:
    """Train ``net`` in place for ``cfg.epochs``; returns per-epoch stats."""
    trainer = ContrastiveTrainer(net, graphs, texts, labels, cfg, pool, bm25)
    history = []
    for _ in range(cfg.epochs):
        stats = trainer.train_epoch()
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return history
