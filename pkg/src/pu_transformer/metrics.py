"""Chamfer training loss and CD / HD / P2F evaluation metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import kernels
from .surfaces import Surface
from .tensor import Tensor
from .tensor.tensor import make_result

UNIT = 1e3  # reported metrics are in units of 1e-3


def _points(x, name):
    arr = np.asarray(x.data if isinstance(x, Tensor) else x)
    if arr.ndim < 2 or arr.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (..., n, 3), got {arr.shape}")
    if arr.shape[-2] == 0:
        raise ValueError(f"{name} is empty")
    return arr


def chamfer_loss(S: Tensor, T) -> Tensor:
    """Symmetric squared Chamfer loss, averaged over the batch.

    ``mean_i min_j |S_i - T_j|^2 + mean_j min_i |T_j - S_i|^2`` for ``[n, 3]``
    inputs; ``[B, n, 3]`` inputs give the mean of the per-sample losses.
    Nearest-neighbour pairings are constants of the step; the gradient
    flows through the paired differences into ``S`` (and ``T`` if it is a
    tensor that requires grad).
    """
    s = _points(S, "S")
    T = T if isinstance(T, Tensor) else Tensor(np.asarray(T), dtype=s.dtype)
    t = _points(T, "T")
    if s.ndim != t.ndim or s.shape[:-2] != t.shape[:-2]:
        raise ValueError(f"chamfer_loss: batch shapes differ, {s.shape} vs {t.shape}")
    s3 = s.reshape((-1,) + s.shape[-2:])
    t3 = t.reshape((-1,) + t.shape[-2:])
    B, n, m = s3.shape[0], s3.shape[1], t3.shape[1]
    d_st = np.empty_like(s3)
    d_ts = np.empty_like(t3)
    a_st = np.empty((B, n), dtype=np.int64)
    a_ts = np.empty((B, m), dtype=np.int64)
    for b in range(B):
        a_st[b] = kernels.nearest(s3[b], t3[b])[1]
        a_ts[b] = kernels.nearest(t3[b], s3[b])[1]
        d_st[b] = s3[b] - t3[b][a_st[b]]
        d_ts[b] = t3[b] - s3[b][a_ts[b]]
    loss = ((d_st * d_st).sum(-1).mean(-1) + (d_ts * d_ts).sum(-1).mean(-1)).mean()
    out = np.asarray(loss, dtype=s.dtype)

    def backward(g):
        g = float(np.asarray(g).reshape(-1)[0]) / B
        gs = (2.0 * g / n) * d_st
        gt = (2.0 * g / m) * d_ts
        gs_total = gs.copy()
        gt_total = gt.copy()
        for b in range(B):
            np.add.at(gt_total[b], a_st[b], -gs[b])
            np.add.at(gs_total[b], a_ts[b], -gt[b])
        return gs_total.reshape(s.shape), gt_total.reshape(t.shape)

    return make_result("chamfer_loss", out, (S, T), backward)


def _nearest_both(S, T):
    s = _points(S, "S").reshape(-1, 3)
    t = _points(T, "T").reshape(-1, 3)
    return kernels.nearest(s, t)[0], kernels.nearest(t, s)[0]


def chamfer_distance(S, T) -> float:
    """``(mean_s min_t |s - t| + mean_t min_s |s - t|) / 2`` with Euclidean distances."""
    d_st, d_ts = _nearest_both(S, T)
    return 0.5 * (float(np.sqrt(d_st).mean()) + float(np.sqrt(d_ts).mean()))


def hausdorff_distance(S, T) -> float:
    """Symmetric Hausdorff distance."""
    d_st, d_ts = _nearest_both(S, T)
    return float(math.sqrt(max(d_st.max(), d_ts.max())))


def p2f_distance(S, surface: Surface) -> float:
    """Mean distance from the points of ``S`` to ``surface``."""
    s = _points(S, "S").reshape(-1, 3)
    return float(np.mean(surface.distance(s)))


@dataclass(frozen=True)
class MetricReport:
    """CD / HD / P2F in units of 1e-3 (``p2f`` is None without a reference surface)."""

    cd: float
    hd: float
    p2f: Optional[float]
    n_pred: int
    n_gt: int

    def values(self) -> dict:
        return {"cd_e-3": self.cd, "hd_e-3": self.hd, "p2f_e-3": self.p2f,
                "n_pred": self.n_pred, "n_gt": self.n_gt}

    def has_nan(self) -> bool:
        return any(isinstance(v, float) and math.isnan(v) for v in (self.cd, self.hd, self.p2f))

    def to_line(self) -> str:
        return " ".join(f"{k}={_fmt(v)}" for k, v in self.values().items())

    def to_kv(self) -> str:
        return "".join(f"{k}: {_fmt(v)}\n" for k, v in self.values().items())

    @classmethod
    def from_line(cls, line: str) -> "MetricReport":
        kv = dict(item.split("=", 1) for item in line.split())
        p2f = kv["p2f_e-3"]
        return cls(cd=float(kv["cd_e-3"]), hd=float(kv["hd_e-3"]),
                   p2f=None if p2f == "none" else float(p2f),
                   n_pred=int(kv["n_pred"]), n_gt=int(kv["n_gt"]))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def evaluate(pred, gt, surface: Optional[Surface] = None) -> MetricReport:
    pred = _points(pred, "pred").reshape(-1, 3)
    gt = _points(gt, "gt").reshape(-1, 3)
    p2f = p2f_distance(pred, surface) * UNIT if surface is not None else None
    return MetricReport(cd=chamfer_distance(pred, gt) * UNIT, hd=hausdorff_distance(pred, gt) * UNIT,
                        p2f=p2f, n_pred=len(pred), n_gt=len(gt))
