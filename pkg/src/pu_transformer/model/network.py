"""Head, encoder body and shuffle tail."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .. import tensor as T
from ..geometry import knn_batch
from ..tensor import Tensor
from .blocks import shuffle, transformer_encoder
from .config import ModelConfig
from .params import ModelParams


def forward(P, cfg: ModelConfig, params: ModelParams, train: bool = False,
            nbr: Optional[np.ndarray] = None) -> Tensor:
    """Upsample ``[N, 3]`` or ``[B, N, 3]`` points to ``[..., rN, 3]``.

    The kNN graph is built once from the raw coordinates (unless ``nbr`` is
    given) and shared by every encoder.  ``train`` selects batch statistics
    in the batch-norm layers and updates their running buffers.
    """
    P = P if isinstance(P, Tensor) else Tensor(P, dtype=cfg.dtype)
    if P.shape[-1] != 3 or P.ndim not in (2, 3):
        raise ValueError(f"forward: expected [N, 3] or [B, N, 3] points, got {P.shape}")
    squeeze = P.ndim == 2
    if squeeze:
        P = T.reshape(P, (1,) + P.shape)
    n = P.shape[1]
    if n < cfg.k:
        raise ValueError(f"forward: N={n} is smaller than k={cfg.k}")
    if nbr is None:
        nbr = knn_batch(P.data, cfg.k)
    elif nbr.ndim == 2:
        nbr = np.broadcast_to(nbr, (P.shape[0],) + nbr.shape)

    head = params.view("head")
    F = T.linear(P, head["W"], head["b"])
    F = T.batch_norm(F, head["bn.gamma"], head["bn.beta"], head.buffer("bn.running_mean"),
                     head.buffer("bn.running_var"), train, cfg.bn_momentum, cfg.bn_eps)
    F = T.relu(F)
    for l in range(cfg.L):
        F = transformer_encoder(P, F, nbr, params.view(f"enc{l + 1}"), cfg, l, train)
    S = T.linear(shuffle(F, cfg.r), params["tail.W"], params["tail.b"])
    if squeeze:
        S = T.reshape(S, S.shape[1:])
    return S


class PUTransformer:
    """Config + parameters bundle with a callable forward."""

    def __init__(self, cfg: ModelConfig, params: Optional[ModelParams] = None, seed: int = 0):
        from .params import init_params

        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)

    def __call__(self, P, train: bool = False, nbr=None) -> Tensor:
        return forward(P, self.cfg, self.params, train=train, nbr=nbr)

    def upsample(self, P) -> np.ndarray:
        """Eval-mode forward returning a float64 array."""
        return np.asarray(self(P, train=False).data, dtype=np.float64)
