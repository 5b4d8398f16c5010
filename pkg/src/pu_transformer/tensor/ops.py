"""Differentiable operators.

Each op computes its forward value with numpy and hands a closure mapping the
output gradient to per-input gradients to :func:`make_result`.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..geometry import kernels
from .tensor import Tensor, as_tensor, make_result


class ShapeError(ValueError):
    """Operand extents are incompatible."""


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _pair(x, y):
    if isinstance(x, Tensor):
        return x, as_tensor(y, like=x)
    y = as_tensor(y)
    return as_tensor(x, like=y), y


def add(x, y) -> Tensor:
    x, y = _pair(x, y)
    try:
        out = x.data + y.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {x.shape} with {y.shape}") from None

    def backward(g):
        return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)

    return make_result("add", out, (x, y), backward)


def sub(x, y) -> Tensor:
    x, y = _pair(x, y)
    try:
        out = x.data - y.data
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {x.shape} with {y.shape}") from None

    def backward(g):
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    return make_result("sub", out, (x, y), backward)


def mul(x, y) -> Tensor:
    x, y = _pair(x, y)
    try:
        out = x.data * y.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {x.shape} with {y.shape}") from None

    def backward(g):
        return _unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)

    return make_result("mul", out, (x, y), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result("relu", x.data * mask, (x,), lambda g: (g * mask,))


def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ W + b`` over the last axis (a 1x1 convolution on point features)."""
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeError(f"linear: bias {b.shape} does not match weight {W.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, W.shape[0])
    out = x2 @ W.data
    if b is not None:
        out += b.data
    out = out.reshape(lead + (W.shape[1],))

    def backward(g):
        g2 = g.reshape(-1, W.shape[1])
        gx = (g2 @ W.data.T).reshape(x.shape) if x.requires_grad else None
        gW = x2.T @ g2 if W.requires_grad else None
        gb = g2.sum(axis=0) if b is not None and b.requires_grad else None
        return (gx, gW, gb) if b is not None else (gx, gW)

    inputs = (x, W, b) if b is not None else (x, W)
    return make_result("linear", out, inputs, backward)


def batched_matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the trailing two axes; leading axes must agree."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"batched_matmul: cannot contract {a.shape} with {b.shape}")
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"batched_matmul: leading dims differ, {a.shape} vs {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return ga, gb

    return make_result("batched_matmul", out, (a, b), backward)


def transpose_last2(x: Tensor) -> Tensor:
    out = np.swapaxes(x.data, -1, -2)
    return make_result("transpose", out, (x,), lambda g: (np.swapaxes(g, -1, -2),))


def softmax_lastdim(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_result("softmax", y, (x,), backward)


def concat_lastdim(xs: Sequence[Tensor]) -> Tensor:
    xs = list(xs)
    lead = xs[0].shape[:-1]
    for t in xs[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(f"concat: leading dims differ, {xs[0].shape} vs {t.shape}")
    widths = [t.shape[-1] for t in xs]
    out = np.concatenate([t.data for t in xs], axis=-1)
    bounds = np.cumsum([0] + widths)

    def backward(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return make_result("concat", out, xs, backward)


def slice_axis(x: Tensor, axis: int, start: int, width: int) -> Tensor:
    axis = axis % x.ndim
    if start < 0 or width < 1 or start + width > x.shape[axis]:
        raise IndexError(f"slice [{start}, {start + width}) outside axis {axis} of {x.shape}")
    sl = (slice(None),) * axis + (slice(start, start + width),)
    out = x.data[sl]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        return (gx,)

    return make_result("slice", out, (x,), backward)


def slice_lastdim(x: Tensor, start: int, width: int) -> Tensor:
    return slice_axis(x, -1, start, width)


def gather_rows(x: Tensor, idx) -> Tensor:
    """Group rows by neighbour index.

    ``x`` is ``[..., N, C]`` and ``idx`` is ``[..., M, k]`` with the same
    leading dims; the result is ``[..., M, k, C]``.  Indices are constants.
    """
    idx = np.asarray(idx)
    n, c = x.shape[-2], x.shape[-1]
    lead = x.shape[:-2]
    if idx.shape[:-2] != lead:
        raise ShapeError(f"gather_rows: index {idx.shape} does not match leading dims of {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index out of range [0, {n})")
    nb = int(np.prod(lead, dtype=np.int64))
    offsets = (np.arange(nb, dtype=np.int64) * n).reshape(lead + (1, 1))
    flat = (idx + offsets).reshape(-1)
    src = x.data.reshape(-1, c)
    out = src[flat].reshape(idx.shape + (c,))

    def backward(g):
        gx = np.zeros((nb * n, c), dtype=x.dtype)
        kernels.scatter_add_rows(gx, flat, g.reshape(-1, c))
        return (gx.reshape(x.shape),)

    return make_result("gather_rows", out, (x,), backward)


def max_over_axis(x: Tensor, axis: int) -> Tensor:
    """Max-pool over ``axis``; the gradient goes to the first argmax."""
    axis = axis % x.ndim
    arg = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, arg, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return make_result("max", out, (x,), backward)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return make_result("sum", out, (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype),)

    return make_result("mean", out, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return make_result("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def _normalize(x: np.ndarray, axes, eps: float):
    mu = x.mean(axis=axes, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return xc * inv, inv, mu, var


def _normalize_backward(gxhat, xhat, inv, axes):
    m1 = gxhat.mean(axis=axes, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=axes, keepdims=True)
    return inv * (gxhat - m1 - xhat * m2)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Per-position normalisation over the channel (last) axis."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: affine params {gamma.shape}/{beta.shape} vs channels {c}")
    xhat, inv, _, _ = _normalize(x.data, -1, eps)
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(x.ndim - 1))
        gx = _normalize_backward(g * gamma.data, xhat, inv, -1) if x.requires_grad else None
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result("layer_norm", out, (x, gamma, beta), backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Normalise each channel over every non-channel axis.

    In train mode batch statistics are used and the running buffers are
    updated in place as ``running = momentum * running + (1 - momentum) * batch``
    (unbiased variance).  In eval mode the running buffers are used.
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batch_norm: affine params {gamma.shape}/{beta.shape} vs channels {c}")
    axes = tuple(range(x.ndim - 1))
    if not train:
        inv = 1.0 / np.sqrt(running_var + eps)
        scale = (gamma.data * inv).astype(x.dtype)
        out = (x.data - running_mean.astype(x.dtype)) * scale + beta.data
        xhat = (x.data - running_mean.astype(x.dtype)) * inv.astype(x.dtype)

        def backward_eval(g):
            return g * scale, (g * xhat).sum(axis=axes), g.sum(axis=axes)

        return make_result("batch_norm", out, (x, gamma, beta), backward_eval)

    count = x.size // c
    if count < 2:
        raise ValueError("batch_norm: train mode needs at least 2 positions per channel (variance undefined)")
    xhat, inv, mu, var = _normalize(x.data, axes, eps)
    out = xhat * gamma.data + beta.data
    running_mean *= momentum
    running_mean += (1.0 - momentum) * mu.reshape(c)
    running_var *= momentum
    running_var += (1.0 - momentum) * var.reshape(c) * (count / (count - 1))

    def backward(g):
        gx = _normalize_backward(g * gamma.data, xhat, inv, axes) if x.requires_grad else None
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return make_result("batch_norm", out, (x, gamma, beta), backward)
