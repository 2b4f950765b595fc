"""Differentiable operators used by the InfNet model.

Only the broadcasting the model needs is supported: a trailing-dimension
vector (bias) against a matrix, and scalars.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, make_result

BCE_EPS = 1e-7
LEAKY_SLOPE = 0.2


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_result(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a.data, b.data)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return make_result(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a.data, b.data)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return make_result(ad * bd, (a, b), bw, "mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        return g @ bd.T, ad.T @ g

    return make_result(ad @ bd, (a, b), bw, "matmul")


def linear(x, weight, bias=None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].data
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
            t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax
        ):
            shapes = [t.shape for t in tensors]
            raise ValueError(f"concat: incompatible shapes {shapes} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=ax))

    return make_result(np.concatenate([t.data for t in tensors], axis=ax), tensors, bw, "concat")


def stack(tensors, axis: int = 1) -> Tensor:
    """Stack equal-shape tensors along a new axis."""
    tensors = [as_tensor(t) for t in tensors]
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ValueError(f"stack: shapes differ {[t.shape for t in tensors]}")
    n = len(tensors)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return make_result(np.stack([t.data for t in tensors], axis=axis), tensors, bw, "stack")


def select(x, index: int, axis: int = 1) -> Tensor:
    """Take one slice along ``axis`` (drops the axis)."""
    x = as_tensor(x)
    shape = x.shape

    def bw(g):
        out = np.zeros(shape, dtype=g.dtype)
        idx = [slice(None)] * len(shape)
        idx[axis] = index
        out[tuple(idx)] = g
        return (out,)

    return make_result(np.take(x.data, index, axis=axis), (x,), bw, "select")


def gather_rows(x, index: np.ndarray) -> Tensor:
    """``x[index]`` for a 2-D tensor and an integer index vector."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def bw(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, index, g)
        return (out,)

    return make_result(x.data[index], (x,), bw, "gather_rows")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape

    def bw(g):
        return (g.reshape(old),)

    return make_result(x.data.reshape(shape), (x,), bw, "reshape")


def leaky_relu(x, alpha: float = LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha).astype(x.data.dtype)

    def bw(g):
        return (g * slope,)

    return make_result(x.data * slope, (x,), bw, "leaky_relu")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)

    def bw(g):
        return (g * y * (1.0 - y),)

    return make_result(y, (x,), bw, "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - y * y),)

    return make_result(y, (x,), bw, "tanh")


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def bw(g):
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(x.data.sum()), (x,), bw, "sum")


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    shape, n = x.shape, x.data.size

    def bw(g):
        return (np.full(shape, g / n, dtype=x.data.dtype),)

    return make_result(np.asarray(x.data.mean()), (x,), bw, "mean")


def segment_softmax(logits, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a 1-D logit vector within each segment.

    Segment ids need not be sorted; every element is normalized against the
    elements sharing its id.
    """
    logits = as_tensor(logits)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if logits.ndim != 1 or logits.shape[0] != seg.shape[0]:
        raise ValueError(
            f"segment_softmax: logits {logits.shape} vs segment ids {seg.shape}"
        )
    z = logits.data
    seg_max = np.full(num_segments, -np.inf, dtype=z.dtype)
    np.maximum.at(seg_max, seg, z)
    ez = np.exp(z - seg_max[seg])
    denom = np.zeros(num_segments, dtype=z.dtype)
    np.add.at(denom, seg, ez)
    y = ez / denom[seg]

    def bw(g):
        dot = np.zeros(num_segments, dtype=g.dtype)
        np.add.at(dot, seg, g * y)
        return (y * (g - dot[seg]),)

    return make_result(y, (logits,), bw, "segment_softmax")


def weighted_segment_sum(weights, vectors, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """``out[s] = sum_{e: seg[e]=s} weights[e] * vectors[e]``; empty segments are zero."""
    weights, vectors = as_tensor(weights), as_tensor(vectors)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if (
        weights.ndim != 1
        or vectors.ndim != 2
        or weights.shape[0] != vectors.shape[0]
        or seg.shape[0] != weights.shape[0]
    ):
        raise ValueError(
            "weighted_segment_sum: weights "
            f"{weights.shape}, vectors {vectors.shape}, segment ids {seg.shape}"
        )
    w, v = weights.data, vectors.data
    out = np.zeros((num_segments, v.shape[1]), dtype=v.dtype)
    np.add.at(out, seg, w[:, None] * v)

    def bw(g):
        ge = g[seg]
        return (ge * v).sum(axis=1), ge * w[:, None]

    return make_result(out, (weights, vectors), bw, "weighted_segment_sum")


def segment_sum(vectors, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    vectors = as_tensor(vectors)
    seg = np.asarray(segment_ids, dtype=np.int64)
    out = np.zeros((num_segments,) + vectors.shape[1:], dtype=vectors.data.dtype)
    np.add.at(out, seg, vectors.data)

    def bw(g):
        return (g[seg],)

    return make_result(out, (vectors,), bw, "segment_sum")


def gru_cell(x, h_prev, params: dict) -> Tensor:
    """Standard GRU update ``h' = (1 - z) * n + z * h``.

    ``params`` holds ``W_z, W_r, W_n`` (input), ``U_z, U_r, U_n`` (recurrent)
    and biases ``b_z, b_r, b_n``.
    """
    z = sigmoid(add(add(matmul(x, params["W_z"]), matmul(h_prev, params["U_z"])), params["b_z"]))
    r = sigmoid(add(add(matmul(x, params["W_r"]), matmul(h_prev, params["U_r"])), params["b_r"]))
    n = tanh(add(add(matmul(x, params["W_n"]), mul(r, matmul(h_prev, params["U_n"]))), params["b_n"]))
    return add(mul(sub(1.0, z), n), mul(z, h_prev))


def masked_self_attention(seq, w_query, w_key, w_value) -> Tensor:
    """Single-head causal scaled dot-product attention.

    ``seq`` is (N, T, c); position t attends to positions 0..t only.
    Returns (N, T, c).
    """
    seq, wq, wk, wv = (as_tensor(t) for t in (seq, w_query, w_key, w_value))
    if seq.ndim != 3 or wq.shape[0] != seq.shape[2]:
        raise ValueError(
            f"masked_self_attention: sequence {seq.shape} vs query weight {wq.shape}"
        )
    x = seq.data
    n, t_len, _ = x.shape
    q = x @ wq.data
    k = x @ wk.data
    v = x @ wv.data
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = np.einsum("ntd,nsd->nts", q, k) * scale
    mask = np.triu(np.ones((t_len, t_len), dtype=bool), k=1)
    scores = np.where(mask, -np.inf, scores)
    scores = scores - scores.max(axis=-1, keepdims=True)
    att = np.exp(scores)
    att /= att.sum(axis=-1, keepdims=True)
    out = np.einsum("nts,nsd->ntd", att, v)

    def bw(g):
        d_att = np.einsum("ntd,nsd->nts", g, v)
        d_v = np.einsum("nts,ntd->nsd", att, g)
        d_scores = att * (d_att - (d_att * att).sum(axis=-1, keepdims=True)) * scale
        d_q = np.einsum("nts,nsd->ntd", d_scores, k)
        d_k = np.einsum("nts,ntd->nsd", d_scores, q)
        flat = x.reshape(n * t_len, -1)
        d_x = d_q @ wq.data.T + d_k @ wk.data.T + d_v @ wv.data.T
        return (
            d_x,
            flat.T @ d_q.reshape(n * t_len, -1),
            flat.T @ d_k.reshape(n * t_len, -1),
            flat.T @ d_v.reshape(n * t_len, -1),
        )

    return make_result(out, (seq, wq, wk, wv), bw, "masked_self_attention")


def mean_over_steps(seq) -> Tensor:
    """Average a (N, T, c) sequence over its step axis."""
    seq = as_tensor(seq)
    if seq.ndim != 3:
        raise ValueError(f"mean_over_steps: expected (N, T, c), got {seq.shape}")
    t_len = seq.shape[1]

    def bw(g):
        return (np.repeat(g[:, None, :] / t_len, t_len, axis=1),)

    return make_result(seq.data.mean(axis=1), (seq,), bw, "mean_over_steps")


def binary_cross_entropy(y, y_hat) -> Tensor:
    """Mean BCE with predictions clamped to [BCE_EPS, 1 - BCE_EPS]."""
    y_hat = as_tensor(y_hat)
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=y_hat.data.dtype)
    if y.shape != y_hat.shape:
        raise ValueError(f"binary_cross_entropy: labels {y.shape} vs predictions {y_hat.shape}")
    p = y_hat.data
    clipped = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    n = max(p.size, 1)
    loss = -(y * np.log(clipped) + (1.0 - y) * np.log(1.0 - clipped)).sum() / n
    inside = (p >= BCE_EPS) & (p <= 1.0 - BCE_EPS)

    def bw(g):
        d = (-(y / clipped) + (1.0 - y) / (1.0 - clipped)) / n
        return (g * d * inside,)

    return make_result(np.asarray(loss), (y_hat,), bw, "binary_cross_entropy")
