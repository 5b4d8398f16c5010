"""Minimal reverse-mode autodiff over numpy arrays."""
from .gradcheck import GradCheckReport, grad_check, relative_error
from .ops import (
    ShapeError,
    add,
    batch_norm,
    batched_matmul,
    concat_lastdim,
    gather_rows,
    layer_norm,
    linear,
    max_over_axis,
    mean,
    mul,
    relu,
    reshape,
    slice_axis,
    slice_lastdim,
    softmax_lastdim,
    sub,
    sum,
    transpose_last2,
)
from .tensor import (
    NonFiniteError,
    Tape,
    Tensor,
    active_tape,
    as_tensor,
    get_default_dtype,
    precision,
    set_default_dtype,
)

__all__ = [
    "GradCheckReport", "NonFiniteError", "ShapeError", "Tape", "Tensor",
    "active_tape", "add", "as_tensor", "batch_norm", "batched_matmul",
    "concat_lastdim", "gather_rows", "get_default_dtype", "grad_check",
    "layer_norm", "linear", "max_over_axis", "mean", "mul", "precision",
    "relative_error", "relu", "reshape", "set_default_dtype", "slice_axis",
    "slice_lastdim", "softmax_lastdim", "sub", "sum", "transpose_last2",
]
