"""Minimal reverse-mode autodiff over numpy arrays."""

from .checkpoint import CheckpointError, load_arrays, save_arrays
from .gradcheck import directional_grad_check, grad_check, numeric_grad
from .ops import (
    BCE_EPS,
    add,
    binary_cross_entropy,
    concat,
    gather_rows,
    gru_cell,
    leaky_relu,
    linear,
    masked_self_attention,
    matmul,
    mean_all,
    mean_over_steps,
    mul,
    reshape,
    segment_softmax,
    segment_sum,
    select,
    sigmoid,
    stack,
    sub,
    sum_all,
    tanh,
    weighted_segment_sum,
)
from .optim import AdamState, adam_step, glorot, zeros
from .tensor import Tensor, as_tensor, backward, build_tape, get_default_dtype, set_default_dtype

__all__ = [
    "AdamState",
    "BCE_EPS",
    "CheckpointError",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "binary_cross_entropy",
    "build_tape",
    "concat",
    "gather_rows",
    "get_default_dtype",
    "glorot",
    "directional_grad_check",
    "grad_check",
    "gru_cell",
    "leaky_relu",
    "linear",
    "load_arrays",
    "masked_self_attention",
    "matmul",
    "mean_all",
    "mean_over_steps",
    "mul",
    "numeric_grad",
    "reshape",
    "save_arrays",
    "segment_softmax",
    "segment_sum",
    "select",
    "set_default_dtype",
    "sigmoid",
    "stack",
    "sub",
    "sum_all",
    "tanh",
    "weighted_segment_sum",
    "zeros",
]
