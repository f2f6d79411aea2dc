import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graphret import tensor as T
from graphret.gradcheck import check_gradients, max_relative_error
from graphret.tensor import DomainError, ShapeError, Tape, Tensor

from gradcases import GRAD_CASES
from oracles import softmax_hp


def test_matmul_identity():
    out = T.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3], [4]]))
    assert out.data.tolist() == [[3], [4]]


def test_matmul_hand_arithmetic():
    assert T.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data.tolist() == [[11]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient_3x3():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    ok, worst = check_gradients(lambda: T.sum_all(T.matmul(a, b)), [a])
    assert worst < 1e-6


def test_softmax_uniform():
    np.testing.assert_allclose(T.softmax(Tensor([0.0, 0.0, 0.0])).data[0], [1 / 3] * 3, rtol=0, atol=1e-15)


def test_softmax_no_overflow():
    out = T.softmax(Tensor([1000.0, 0.0])).data[0]
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(1.0) and out[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_matches_extended_precision():
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = rng.normal(scale=3.0, size=5)
        np.testing.assert_allclose(T.softmax(Tensor(v)).data[0], softmax_hp(v), rtol=0, atol=1e-12)


def test_softmax_empty_is_domain_error():
    with pytest.raises(DomainError):
        T.softmax(Tensor(np.zeros((1, 0))))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e6, 1e6)))
def test_softmax_sums_to_one(v):
    out = T.softmax(Tensor(v)).data
    assert np.all(np.isfinite(out))
    assert abs(out.sum() - 1.0) < 1e-9


@pytest.mark.parametrize("x,expected", [(2.0, 2.0), (-1.0, -0.2), (0.0, 0.0)])
def test_leaky_relu_values(x, expected):
    assert T.leaky_relu(Tensor([[x]]), 0.2).item() == pytest.approx(expected)


def test_leaky_relu_gradient_at_zero_is_one():
    x = Tensor([[0.0]], requires_grad=True)
    with Tape() as tape:
        tape.backward(T.leaky_relu(x, 0.2))
    assert x.grad[0, 0] == 1.0


def test_leaky_relu_rejects_bad_slope():
    with pytest.raises(ValueError):
        T.leaky_relu(Tensor([1.0]), 1.5)


def test_concat_values():
    assert T.concat(Tensor([1, 2]), Tensor([3])).data.tolist() == [[1, 2, 3]]
    assert T.concat(Tensor(np.zeros((1, 0))), Tensor([5])).data.tolist() == [[5]]


def test_concat_rejects_matrices():
    with pytest.raises(ShapeError):
        T.concat(Tensor(np.ones((2, 2))), Tensor([1.0]))


def test_concat_gradient_splits_back_to_segments():
    parts = [Tensor(np.ones((1, n)), requires_grad=True) for n in (2, 0, 3)]
    w = Tensor(np.arange(5.0)[None, :])
    with Tape() as tape:
        tape.backward(T.sum_all(T.mul(T.concat(*parts), w)))
    assert [p.grad.shape for p in parts] == [(1, 2), (1, 0), (1, 3)]
    assert parts[0].grad.tolist() == [[0, 1]] and parts[2].grad.tolist() == [[2, 3, 4]]


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_op_gradients_match_finite_differences(name):
    for seed in range(3):
        fn, params = GRAD_CASES[name](np.random.default_rng(seed))
        ok, worst = check_gradients(fn, params, eps=1e-5, rtol=1e-4)
        assert ok, f"{name}: worst relative error {worst}"


def test_backward_populates_every_reachable_grad():
    rng = np.random.default_rng(1)
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    with Tape() as tape:
        mid = T.matmul(a, b)
        tape.backward(T.sum_all(T.exp(mid)))
    for t in (a, b, mid):
        assert t.grad is not None and t.grad.shape == t.shape and np.all(t.grad != 0)


def test_tape_replays_in_reverse_order():
    order = []
    a = Tensor([[1.0]], requires_grad=True)
    with Tape() as tape:
        b = T.scale(a, 2.0)
        c = T.exp(b)
        d = T.sum_all(c)
    outputs = [r.output for r in tape.records]
    assert outputs == [b, c, d]
    for rec in tape.records:
        fn = rec.backward
        rec.backward = (lambda f, o: (lambda g: (order.append(o), f(g))[1]))(fn, rec.output)
    tape.backward(d)
    assert order == [d, c, b]


def test_cleared_tape_leaves_no_stale_gradients():
    a = Tensor([[2.0]], requires_grad=True)
    tape = Tape()
    for _ in range(3):
        a.zero_grad()
        tape.clear()
        with tape:
            tape.backward(T.mul(a, a))
        assert a.grad[0, 0] == pytest.approx(4.0)


def test_ops_outside_tape_record_nothing():
    a = Tensor([[1.0, 2.0]], requires_grad=True)
    with Tape() as tape:
        pass
    T.exp(a)
    assert len(tape) == 0


def test_broadcast_shape_error():
    with pytest.raises(ShapeError):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_log_domain_error():
    with pytest.raises(DomainError):
        T.log(Tensor([[-1.0]]))


def test_dropout_eval_is_identity_and_train_is_inverted():
    rng = np.random.default_rng(0)
    x = Tensor(np.ones((200, 50)))
    assert T.dropout(x, 0.5, rng, training=False) is x
    y = T.dropout(x, 0.5, rng, training=True).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05


def test_max_relative_error_small_entries_use_absolute_bound():
    assert max_relative_error(np.array([1e-5]), np.array([0.0])) == float("inf")
    assert max_relative_error(np.array([1e-7]), np.array([0.0])) == 0.0
    assert math.isclose(max_relative_error(np.array([1.01]), np.array([1.0])), 0.01, rel_tol=1e-9)
