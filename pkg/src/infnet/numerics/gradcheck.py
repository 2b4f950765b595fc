from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function with respect to ``x``."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x).item()
        flat[i] = orig - h
        down = f(x).item()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Max elementwise relative error between backprop and central differences.

    The error for one element is ``|a - n| / max(1, |a|, |n|)``.
    """
    if x.data.dtype != np.float64:
        raise ValueError("grad_check requires float64 tensors")
    x.requires_grad = True
    x.zero_grad()
    loss = f(x)
    backward(loss)
    analytic = x.grad.copy()
    numeric = numeric_grad(f, x, h)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def directional_grad_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    rng: np.random.Generator,
    n_dirs: int = 2,
    h: float = 1e-5,
) -> float:
    """Gradient check along random unit directions, one tensor at a time.

    ``f`` reads the tensors in ``params`` and returns a scalar. For every tensor
    and direction ``v`` the backprop value ``g . v`` is compared with
    ``(f(x + h v) - f(x - h v)) / 2h`` using the same error measure as
    :func:`grad_check`. Two forward passes per direction instead of two per
    element, so large models stay cheap to check.
    """
    for x in params.values():
        if x.data.dtype != np.float64:
            raise ValueError("directional_grad_check requires float64 tensors")
        x.requires_grad = True
        x.zero_grad()
    backward(f())
    worst = 0.0
    for x in params.values():
        analytic_grad = x.grad.copy()
        base = x.data.copy()
        for _ in range(n_dirs):
            v = rng.normal(size=base.shape)
            v /= np.linalg.norm(v)
            x.data = base + h * v
            up = f().item()
            x.data = base - h * v
            down = f().item()
            x.data = base
            numeric = (up - down) / (2.0 * h)
            analytic = float(np.sum(analytic_grad * v))
            worst = max(worst, abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric)))
    return worst
