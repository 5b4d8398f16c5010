"""Encoder building blocks: positional fusion, shifted-channel attention, shuffle."""
from __future__ import annotations

import math

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from .config import ModelConfig, SCMSAConfig
from .params import ParamView


def _batched_index(nbr: np.ndarray, lead: tuple) -> np.ndarray:
    nbr = np.asarray(nbr, dtype=np.int64)
    if nbr.ndim == 2 and lead:
        nbr = np.broadcast_to(nbr, lead + nbr.shape)
    return nbr


def self_index(nbr: np.ndarray) -> np.ndarray:
    """Index array of ``nbr``'s shape whose row ``i`` is ``[i] * k``."""
    n, k = nbr.shape[-2:]
    rows = np.broadcast_to(np.arange(n)[:, None], (n, k))
    return np.broadcast_to(rows, nbr.shape).copy()


def relative_positions(P: Tensor, nbr: np.ndarray) -> Tensor:
    """Neighbour coordinates minus centre coordinates, ``[..., N, k, 3]``."""
    nbr = _batched_index(nbr, P.shape[:-2])
    Pj = T.gather_rows(P, nbr)
    return T.sub(Pj, T.gather_rows(P, self_index(nbr)))


def local_context(X: Tensor, nbr: np.ndarray) -> Tensor:
    """``concat[dup_k(X); X_j - X]`` as ``[..., N, k, 2C]``."""
    nbr = _batched_index(nbr, X.shape[:-2])
    dup = T.gather_rows(X, self_index(nbr))
    rel = T.sub(T.gather_rows(X, nbr), dup)
    return T.concat_lastdim([dup, rel])


def _grouped_linear(X: Tensor, nbr: np.ndarray, W: Tensor, b: Tensor) -> Tensor:
    # concat[dup(X); X_j - X] @ W == X @ (W_top - W_bot) + (X @ W_bot)_j
    c = X.shape[-1]
    w_top = T.slice_axis(W, 0, 0, c)
    w_bot = T.slice_axis(W, 0, c, c)
    centre = T.linear(X, T.sub(w_top, w_bot), b)
    nb = T.gather_rows(T.linear(X, w_bot), _batched_index(nbr, X.shape[:-2]))
    return T.add(T.reshape(centre, centre.shape[:-1] + (1, centre.shape[-1])), nb)


def _mlp_bn_relu(h: Tensor, p: ParamView, bn: str, cfg: ModelConfig, train: bool) -> Tensor:
    h = T.batch_norm(h, p[f"{bn}.gamma"], p[f"{bn}.beta"], p.buffer(f"{bn}.running_mean"),
                     p.buffer(f"{bn}.running_var"), train, cfg.bn_momentum, cfg.bn_eps)
    return T.relu(h)


def positional_fusion(P: Tensor, F: Tensor, nbr: np.ndarray, p: ParamView, cfg: ModelConfig,
                      train: bool = False, literal: bool = False) -> Tensor:
    """Fuse local geometric and feature context, then max-pool over neighbours.

    Each context ``concat[dup_k(X); X_j - X]`` goes through its own
    linear + batch-norm + ReLU producing ``C'/2`` channels; the two halves are
    concatenated and max-pooled over the ``k`` neighbours, giving ``[..., N, C']``.
    ``literal=True`` materialises the ``2C``-wide grouped context before the
    linear layer; the default applies the linear layer before grouping,
    which is algebraically identical and ``k`` times cheaper.
    """
    if P.shape[:-1] != F.shape[:-1]:
        raise ValueError(f"positional_fusion: points {P.shape} and features {F.shape} not row-aligned")
    W_phi, W_theta = p["W_phi"], p["W_theta"]
    if W_theta.shape[0] != 2 * F.shape[-1]:
        raise ValueError(f"positional_fusion: feature width {F.shape[-1]} does not match {W_theta.shape}")
    if literal:
        geo = T.linear(local_context(P, nbr), W_phi, p["b_phi"])
        feat = T.linear(local_context(F, nbr), W_theta, p["b_theta"])
    else:
        geo = _grouped_linear(P, nbr, W_phi, p["b_phi"])
        feat = _grouped_linear(F, nbr, W_theta, p["b_theta"])
    geo = _mlp_bn_relu(geo, p, "bn_phi", cfg, train)
    feat = _mlp_bn_relu(feat, p, "bn_theta", cfg, train)
    return T.max_over_axis(T.concat_lastdim([geo, feat]), axis=-2)


def sc_msa(I: Tensor, p: ParamView, sc: SCMSAConfig, scale: bool = False) -> Tensor:
    """Shifted-channel multi-head self-attention over the points of ``I``.

    Q, K, V come from three linear maps; head ``m`` attends with the channel
    window ``[m*d, m*d + w)`` of each, and the ``M`` head outputs are
    concatenated and mapped back to ``C'`` by a final linear layer.
    """
    if I.shape[-1] != sc.c_prime:
        raise ValueError(f"sc_msa: input width {I.shape[-1]} != C'={sc.c_prime}")
    if I.shape[-2] == 0:
        raise ValueError("sc_msa: empty point set")
    Q = T.linear(I, p["Wq"], p["bq"])
    K = T.linear(I, p["Wk"], p["bk"])
    V = T.linear(I, p["Wv"], p["bv"])
    heads = []
    for start in sc.window_starts():
        Qm = T.slice_lastdim(Q, start, sc.w)
        Km = T.slice_lastdim(K, start, sc.w)
        Vm = T.slice_lastdim(V, start, sc.w)
        logits = T.batched_matmul(Qm, T.transpose_last2(Km))
        if scale:
            logits = T.mul(logits, 1.0 / math.sqrt(sc.w))
        A = T.softmax_lastdim(logits)
        heads.append(T.batched_matmul(A, Vm))
    return T.linear(T.concat_lastdim(heads), p["Wo"], p["bo"])


def _norm(x: Tensor, p: ParamView, name: str, cfg: ModelConfig, train: bool) -> Tensor:
    if cfg.encoder_norm == "layer":
        return T.layer_norm(x, p[f"{name}.gamma"], p[f"{name}.beta"], cfg.ln_eps)
    return T.batch_norm(x, p[f"{name}.gamma"], p[f"{name}.beta"], p.buffer(f"{name}.running_mean"),
                        p.buffer(f"{name}.running_var"), train, cfg.bn_momentum, cfg.bn_eps)


def transformer_encoder(P: Tensor, F: Tensor, nbr: np.ndarray, p: ParamView, cfg: ModelConfig,
                        layer: int, train: bool = False) -> Tensor:
    """One encoder: fusion, then attention and MLP branches with residuals.

    ``G = PosFus(P, F)``, ``G' = SC-MSA(Norm(G)) + G``,
    ``out = ReLU(Linear(Norm(G'))) + G'``.
    """
    G = positional_fusion(P, F, nbr, p.view("posfus"), cfg, train)
    Gp = T.add(sc_msa(_norm(G, p, "norm1", cfg, train), p.view("attn"), cfg.scmsa(layer), cfg.attn_scale), G)
    h = T.relu(T.linear(_norm(Gp, p, "norm2", cfg, train), p["mlp.W"], p["mlp.b"]))
    return T.add(h, Gp)


def shuffle(F: Tensor, r: int) -> Tensor:
    """``[..., N, C] -> [..., rN, C/r]``: row ``i*r + s`` takes channels ``[s*C/r, (s+1)*C/r)`` of row ``i``."""
    n, c = F.shape[-2:]
    if r < 1 or c % r:
        raise ValueError(f"shuffle: r={r} does not divide C={c}")
    return T.reshape(F, F.shape[:-2] + (n * r, c // r))


def unshuffle(F: Tensor, r: int) -> Tensor:
    n, c = F.shape[-2:]
    if r < 1 or n % r:
        raise ValueError(f"unshuffle: r={r} does not divide N={n}")
    return T.reshape(F, F.shape[:-2] + (n // r, c * r))
