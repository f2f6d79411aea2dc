"""Central finite-difference gradient checking.

The numeric side only ever calls ``fn`` with no tape active, so it shares
nothing with the reverse-mode path it is used to verify.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def analytic_grads(fn: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = fn()
        tape.backward(loss)
    return [p.grad.copy() for p in params]


def numeric_grads(
    fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5
) -> list[np.ndarray]:
    out = []
    for p in params:
        g = np.zeros_like(p.data)
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + eps
            up = fn().item()
            p.data[idx] = orig - eps
            down = fn().item()
            p.data[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        out.append(g)
    return out


def max_relative_error(
    analytic: np.ndarray, numeric: np.ndarray, abs_floor: float = 1e-3, atol: float = 1e-6
) -> float:
    """Worst relative error, ignoring entries where both sides are tiny.

    Entries whose true gradient is below ``abs_floor`` are held to an
    absolute bound ``atol`` instead; a failing one reports ``inf``.
    """
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    small = np.abs(numeric) < abs_floor
    if np.any(np.abs(analytic[small] - numeric[small]) > atol):
        return float("inf")
    big = ~small
    if not big.any():
        return 0.0
    return float(np.max(np.abs(analytic[big] - numeric[big]) / np.abs(numeric[big])))


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    rtol: float = 1e-4,
) -> tuple[bool, float]:
    """Return ``(ok, worst_relative_error)`` over every entry of ``params``."""
    a = analytic_grads(fn, params)
    n = numeric_grads(fn, params, eps)
    worst = max((max_relative_error(x, y) for x, y in zip(a, n)), default=0.0)
    return worst < rtol, worst
