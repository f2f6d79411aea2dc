"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every tensor is two-dimensional ``(rows, cols)``; a vector is a single row.
Operations are only recorded while a :class:`Tape` is active, so code that
runs outside ``with Tape():`` behaves like inference and builds no graph.

    >>> a = Tensor([[1.0, 2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     y = sum_all(matmul(a, Tensor([[3.0], [4.0]])))
    ...     tape.backward(y)
    >>> a.grad.tolist()
    [[3.0, 4.0]]
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "DomainError",
    "Tensor",
    "Tape",
    "active_tape",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "matmul",
    "transpose",
    "exp",
    "log",
    "leaky_relu",
    "softmax",
    "logsumexp",
    "concat",
    "concat_cols",
    "concat_rows",
    "dot",
    "sum_all",
    "mean_rows",
    "mean_of",
    "gather_rows",
    "segment_sum",
    "segment_mean",
    "segment_softmax",
    "normalize_rows",
    "dropout",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """Operand values fall outside the operation's domain."""


class Tensor:
    """A real matrix that may take part in gradient accumulation."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are at most 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = np.zeros_like(arr) if requires_grad else None
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def is_vector(self) -> bool:
        return self.data.shape[0] == 1

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Record:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


_TAPES: list["Tape"] = []


def active_tape() -> "Tape | None":
    return _TAPES[-1] if _TAPES else None


class Tape:
    """Ordered log of differentiable operations for one training step."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        self.records.clear()

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(x) into ``x.grad`` for every taped input."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            return
        loss.grad = np.ones_like(loss.data)
        for rec in reversed(self.records):
            g_out = rec.output.grad
            if not g_out.any():
                continue
            grads = rec.backward(g_out)
            for inp, g in zip(rec.inputs, grads):
                if g is not None and inp.requires_grad:
                    inp.grad += g


def _result(arr: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(arr, track)
    if track:
        tape.records.append(_Record(tuple(inputs), out, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(i for i in (0, 1) if shape[i] == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for i in (0, 1):
        if a.shape[i] != b.shape[i] and 1 not in (a.shape[i], b.shape[i]):
            raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}")


# -- elementwise ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive entry")
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    """``x`` where ``x >= 0`` else ``slope * x``; the derivative at 0 is 1."""
    if not 0.0 < slope < 1.0:
        raise DomainError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    local = np.where(a.data >= 0, 1.0, slope)
    return _result(a.data * local, (a,), lambda g: (g * local,))


# -- linear algebra ------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    return _result(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def dot(a: Tensor, b: Tensor) -> Tensor:
    if not (a.is_vector and b.is_vector) or a.cols != b.cols:
        raise ShapeError(f"dot: need equal-length vectors, got {a.shape} and {b.shape}")
    return _result(
        np.array([[float(a.data[0] @ b.data[0])]]),
        (a, b),
        lambda g: (g * b.data, g * a.data),
    )


# -- reductions ----------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    return _result(
        np.array([[a.data.sum()]]),
        (a,),
        lambda g: (np.full_like(a.data, g[0, 0]),),
    )


def mean_rows(a: Tensor) -> Tensor:
    """Mean over the rows of ``a``: one vector per column."""
    if a.rows == 0:
        raise DomainError("mean over an empty set of vectors")
    n = a.rows
    return _result(
        a.data.mean(axis=0, keepdims=True),
        (a,),
        lambda g: (np.repeat(g / n, n, axis=0),),
    )


def mean_of(vectors: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of a set of equal-length vectors."""
    return mean_rows(concat_rows(*vectors))


def softmax(v: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction."""
    if v.cols == 0:
        raise DomainError("softmax of an empty vector")
    z = v.data - v.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _result(out, (v,), backward)


def logsumexp(v: Tensor) -> Tensor:
    """Row-wise ``log(sum(exp(v)))``, shape ``(rows, 1)``."""
    if v.cols == 0:
        raise DomainError("logsumexp of an empty vector")
    m = v.data.max(axis=1, keepdims=True)
    e = np.exp(v.data - m)
    s = e.sum(axis=1, keepdims=True)
    out = m + np.log(s)
    p = e / s
    return _result(out, (v,), lambda g: (g * p,))


def normalize_rows(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm; all-zero rows stay zero."""
    norms = np.sqrt((a.data**2).sum(axis=1, keepdims=True))
    safe = np.maximum(norms, eps)
    out = a.data / safe

    def backward(g):
        return ((g - out * (g * out).sum(axis=1, keepdims=True)) / safe,)

    return _result(out, (a,), backward)


# -- structural ----------------------------------------------------------


def concat(*vectors: Tensor) -> Tensor:
    """Join vectors end to end."""
    for v in vectors:
        if not v.is_vector:
            raise ShapeError(f"concat expects vectors, got shape {v.shape}")
    return concat_cols(*vectors)


def concat_cols(*mats: Tensor) -> Tensor:
    if not mats:
        raise ShapeError("concat of nothing")
    rows = {m.rows for m in mats}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[m.shape for m in mats]}")
    bounds = np.cumsum([0] + [m.cols for m in mats])

    def backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(mats)))

    return _result(np.concatenate([m.data for m in mats], axis=1), mats, backward)


def concat_rows(*mats: Tensor) -> Tensor:
    if not mats:
        raise ShapeError("concat of nothing")
    cols = {m.cols for m in mats}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ {[m.shape for m in mats]}")
    bounds = np.cumsum([0] + [m.rows for m in mats])

    def backward(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(mats)))

    return _result(np.concatenate([m.data for m in mats], axis=0), mats, backward)


def gather_rows(a: Tensor, index) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _result(a.data[idx], (a,), backward)


def segment_sum(a: Tensor, segments, n_segments: int) -> Tensor:
    """Sum rows of ``a`` that share a segment id; empty segments give zeros."""
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != (a.rows,):
        raise ShapeError(f"segment_sum: {seg.shape[0]} ids for {a.rows} rows")
    out = np.zeros((n_segments, a.cols))
    np.add.at(out, seg, a.data)
    return _result(out, (a,), lambda g: (g[seg],))


def segment_mean(a: Tensor, segments, n_segments: int) -> Tensor:
    """Row mean per segment; an empty segment yields the zero vector."""
    seg = np.asarray(segments, dtype=np.int64)
    counts = np.bincount(seg, minlength=n_segments).astype(np.float64)
    inv = 1.0 / np.maximum(counts, 1.0)
    summed = segment_sum(a, seg, n_segments)
    return mul(summed, Tensor._wrap(inv[:, None], False))


def segment_softmax(a: Tensor, segments, n_segments: int) -> Tensor:
    """Softmax over the rows of each segment, independently per column."""
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != (a.rows,):
        raise ShapeError(f"segment_softmax: {seg.shape[0]} ids for {a.rows} rows")
    seg_max = np.full((n_segments, a.cols), -np.inf)
    np.maximum.at(seg_max, seg, a.data)
    e = np.exp(a.data - seg_max[seg])
    denom = np.zeros((n_segments, a.cols))
    np.add.at(denom, seg, e)
    out = e / denom[seg]

    def backward(g):
        inner = np.zeros((n_segments, a.cols))
        np.add.at(inner, seg, g * out)
        return (out * (g - inner[seg]),)

    return _result(out, (a,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate); eval mode is identity."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    keep = 1.0 - rate
    mask = (rng.random(a.shape) < keep) / keep
    return _result(a.data * mask, (a,), lambda g: (g * mask,))
