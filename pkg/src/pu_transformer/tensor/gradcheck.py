"""Central-difference check of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import NonFiniteError, Tape, Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    per_tensor: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    @property
    def failures(self) -> list:
        return [name for name, err in self.per_tensor.items() if not err < self.tol]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is zero (dead ReLUs,
    biases feeding a normalisation, softmax-invariant shifts) from dividing
    round-off by round-off: below it the error is effectively absolute.
    Central differences at ``h=1e-5`` in float64 carry ~1e-10 of noise, so
    the default floor leaves two orders of magnitude of headroom at ``tol=1e-4``.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _scalar(f: Callable[[], Tensor]) -> float:
    out = f()
    v = float(np.asarray(out.data).reshape(-1)[0])
    if out.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {out.shape}")
    if not np.isfinite(v):
        raise NonFiniteError("grad_check: function value is not finite")
    return v


def grad_check(
    f: Callable[[], Tensor],
    wrt: Sequence[Tensor] | Tensor,
    h: float = 1e-5,
    tol: float = 1e-4,
    names: Sequence[str] | None = None,
    floor: float = 1e-4,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f()`` against central differences.

    ``f`` is called with no arguments and must read the tensors in ``wrt``
    (it is re-evaluated after each in-place perturbation).  Use float64
    tensors; at float32 the differences are dominated by round-off.
    """
    if isinstance(wrt, Tensor):
        wrt = [wrt]
    wrt = list(wrt)
    if names is None:
        names = [t.name or f"arg{i}" for i, t in enumerate(wrt)]
    for t in wrt:
        t.requires_grad = True
        t.grad = None

    with Tape() as tape:
        loss = f()
    if loss.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("grad_check: function value is not finite")
    tape.backward(loss)

    report = GradCheckReport(max_rel_error=0.0, tol=tol)
    for name, t in zip(names, wrt):
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = np.empty_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = _scalar(f)
            flat[i] = orig - h
            fm = _scalar(f)
            flat[i] = orig
            numeric.reshape(-1)[i] = (fp - fm) / (2.0 * h)
        err = float(relative_error(analytic, numeric, floor).max()) if t.size else 0.0
        report.per_tensor[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
    return report
