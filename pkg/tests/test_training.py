import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphret import tensor as T
from graphret.bm25 import BM25
from graphret.gradcheck import check_gradients
from graphret.graph import GraphBuilder
from graphret.encoder import HashingEncoder
from graphret.model import EdgeGATNetwork, ModelConfig, save_checkpoint
from graphret.synth import SynthConfig, generate
from graphret.tensor import Tensor
from graphret.training import (
    Adam,
    ContrastiveTrainer,
    NumericalError,
    TrainConfig,
    contrastive_loss,
    contrastive_loss_from_scores,
    mine_hard_negatives,
    train,
)

from oracles import bm25_hand


def _vec(*xs):
    return Tensor([list(xs)])


def test_equal_similarities_give_ln3():
    q = _vec(1.0, 0.0)
    for tau in (0.01, 0.1, 1.0, 3.0):
        loss = contrastive_loss(q, _vec(1.0, 5.0), [_vec(1.0, -2.0)], [_vec(1.0, 9.0)], tau=tau)
        assert loss.item() == pytest.approx(math.log(3), abs=1e-12)


def test_no_negatives_gives_exact_zero():
    assert contrastive_loss(_vec(0.3, 0.4), _vec(2.0, -1.0), [], [], tau=0.1).item() == 0.0


def test_scalar_oracle():
    # s(q,pos)=1, one easy negative with s=0, tau=1
    loss = contrastive_loss(_vec(1.0, 0.0), _vec(1.0, 0.0), [_vec(0.0, 1.0)], None, tau=1.0)
    assert loss.item() == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-12)
    assert loss.item() == pytest.approx(0.31326, abs=1e-5)


def test_cosine_similarity_option():
    loss = contrastive_loss(_vec(2.0, 0.0), _vec(5.0, 0.0), [_vec(0.0, 3.0)], None, tau=1.0, similarity="cosine")
    assert loss.item() == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-12)


def test_bad_tau():
    with pytest.raises(ValueError):
        contrastive_loss(_vec(1.0), _vec(1.0), [], [], tau=0.0)
    with pytest.raises(ValueError):
        TrainConfig(tau=-1.0)


sims = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(sims, st.lists(sims, max_size=6), st.floats(-50, 50), st.floats(0.05, 5))
def test_shift_invariance(s_pos, s_negs, c, tau):
    a = contrastive_loss_from_scores(s_pos, s_negs, tau)
    b = contrastive_loss_from_scores(s_pos + c, [s + c for s in s_negs], tau)
    assert abs(a - b) < 1e-9


@settings(max_examples=200, deadline=None)
@given(sims, st.lists(sims, max_size=6), st.floats(0.05, 5), st.floats(0.2, 5))
def test_temperature_scaling(s_pos, s_negs, tau, k):
    a = contrastive_loss_from_scores(s_pos, s_negs, k * tau)
    b = contrastive_loss_from_scores(s_pos / k, [s / k for s in s_negs], tau)
    assert abs(a - b) < 1e-9


def test_taped_loss_matches_scalar_form():
    rng = np.random.default_rng(0)
    q, p = Tensor(rng.normal(size=(1, 4))), Tensor(rng.normal(size=(1, 4)))
    easy, hard = Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(3, 4)))
    got = contrastive_loss(q, p, easy, hard, tau=0.5).item()
    s = lambda a, b: float(a.data[0] @ b)  # noqa: E731
    want = contrastive_loss_from_scores(s(q, p.data[0]), [s(q, r) for r in np.vstack([easy.data, hard.data])], 0.5)
    assert got == pytest.approx(want, abs=1e-12)


def test_loss_gradient_wrt_query():
    rng = np.random.default_rng(1)
    q = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
    p, e, h = (Tensor(rng.normal(size=(r, 5))) for r in (1, 2, 3))
    for sim in ("dot", "cosine"):
        ok, worst = check_gradients(lambda: contrastive_loss(q, p, e, h, tau=0.3, similarity=sim), [q])
        assert ok, worst


# -- hard negatives -------------------------------------------------------

TOY = {
    "d1": "visa refused spouse",
    "d2": "visa refused visa appeal",
    "d3": "tax assessment appeal",
    "d4": "spouse sponsorship visa",
    "d5": "criminal record",
}


def _toy_index():
    return BM25().fit(list(TOY.values()), list(TOY))


def test_mining_order_matches_hand_bm25():
    hand = bm25_hand(TOY, "visa refused")
    expected = [d for d in sorted(hand, key=lambda d: (-hand[d], d)) if hand[d] > 0 and d != "d1"]
    got = mine_hard_negatives("d1", "visa refused", _toy_index(), 2, relevant_ids=[])
    assert got == expected[:2]


def test_mining_skips_relevant_hits():
    got = mine_hard_negatives("d1", "visa refused", _toy_index(), 1, relevant_ids=["d2"])
    assert got == ["d4"]


def test_mining_zero_and_short(caplog):
    assert mine_hard_negatives("d1", "visa", _toy_index(), 0, []) == []
    with caplog.at_level(logging.WARNING):
        got = mine_hard_negatives("d1", "visa", _toy_index(), 10, [], candidate_pool=["d1", "d2", "d3"])
    assert got == ["d2", "d3"]
    assert "only 2 hard negatives" in caplog.text


# -- epochs ---------------------------------------------------------------


def _setup(n_cases=25, n_clusters=5, seed=0):
    cases, train_labels, _ = generate(SynthConfig(n_cases=n_cases, n_clusters=n_clusters, seed=seed))
    builder = GraphBuilder(HashingEncoder().fit())
    graphs = {c.case_id: builder.build_case(c) for c in cases}
    texts = {c.case_id: c.text for c in cases}
    return cases, graphs, texts, train_labels


def test_lr_zero_leaves_parameters_bit_identical():
    _, graphs, texts, labels = _setup()
    net = EdgeGATNetwork(ModelConfig())
    before = [p.data.copy() for p in net.parameters()]
    train(net, graphs, texts, labels, TrainConfig(learning_rate=0.0, weight_decay=0.0, epochs=1))
    for b, p in zip(before, net.parameters()):
        assert b.tobytes() == p.data.tobytes()


def test_self_positive_without_negatives_gives_zero_loss():
    _, graphs, texts, _ = _setup()
    qid = sorted(graphs)[0]
    net = EdgeGATNetwork(ModelConfig())
    cfg = TrainConfig(n_easy=0, m_hard=0, epochs=1)
    stats = train(net, {qid: graphs[qid]}, texts, {qid: [qid]}, cfg)
    assert stats[0]["mean_loss"] == 0.0


def test_query_without_positives_is_skipped(caplog):
    _, graphs, texts, labels = _setup()
    labels = dict(labels)
    labels["ghost"] = ["case00"]
    labels[sorted(labels)[0]] = []
    net = EdgeGATNetwork(ModelConfig())
    with caplog.at_level(logging.WARNING):
        trainer = ContrastiveTrainer(net, graphs, texts, labels, TrainConfig(epochs=1))
    assert len(trainer.skipped) == 2
    assert trainer.train_epoch()["skipped"] == 2
    assert "no usable relevant case" in caplog.text


def test_in_batch_negatives_exclude_own_relevant_cases():
    _, graphs, texts, labels = _setup()
    trainer = ContrastiveTrainer(EdgeGATNetwork(ModelConfig()), graphs, texts, labels, TrainConfig())
    for q in trainer.queries:
        assert q not in trainer.hard[q]
        assert not set(trainer.hard[q]) & set(trainer.positives[q])
        _, pos, easy, _ = trainer._plan([q])[0]
        assert pos in trainer.positives[q]
        assert not set(easy) & (set(trainer.positives[q]) | {q})


def test_loss_decreases_over_first_five_epochs():
    _, graphs, texts, labels = _setup()
    assert len(labels) == 20
    net = EdgeGATNetwork(ModelConfig())
    losses = [s["mean_loss"] for s in train(net, graphs, texts, labels, TrainConfig(epochs=5))]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses
    # regression bound frozen from the reference run (seed 0)
    assert losses[-1] <= FROZEN_EPOCH5_LOSS * (1 + 1e-9)


FROZEN_EPOCH5_LOSS = 0.5204304449331247


def test_training_is_deterministic(tmp_path):
    _, graphs, texts, labels = _setup()
    paths = []
    for i in range(2):
        net = EdgeGATNetwork(ModelConfig(), seed=3)
        train(net, graphs, texts, labels, TrainConfig(epochs=2, seed=3))
        paths.append(tmp_path / f"{i}.ckpt")
        save_checkpoint(net, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_nan_raises_numerical_error():
    _, graphs, texts, labels = _setup()
    net = EdgeGATNetwork(ModelConfig())
    net.layers[0].W_s.data[0, 0] = np.nan
    with pytest.raises(NumericalError):
        train(net, graphs, texts, labels, TrainConfig(epochs=1))


def test_adam_first_step():
    p = Tensor([[1.0, -2.0]], requires_grad=True)
    p.grad = np.array([[0.5, -0.1]])
    opt = Adam([p], lr=0.1, weight_decay=0.01)
    opt.step()
    # bias-corrected first step moves each entry by lr*sign(g), plus decoupled decay
    expected = np.array([[1.0, -2.0]]) - 0.1 * (np.sign([[0.5, -0.1]]) + 0.01 * np.array([[1.0, -2.0]]))
    np.testing.assert_allclose(p.data, expected, rtol=0, atol=1e-7)
