"""Finite-difference gradient suite over a tiny model."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .geometry import knn
from .metrics import chamfer_loss
from .model import TINY_GRADCHECK, ModelConfig, forward, init_params
from .model.params import _block_of
from .tensor import Tensor, grad_check

TINY_POINTS = 8


def gradcheck_suite(seed: int = 0, h: float = 1e-5, tol: float = 1e-4, train: bool = True):
    """Check every parameter and the input points of a tiny float64 model.

    Returns ``(report, per_block)`` where ``per_block`` maps block names
    (``head``, ``enc1.attn``, ..., ``input``) to their max relative error.
    """
    cfg = ModelConfig(**TINY_GRADCHECK)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed)
    for t in params.trainable():
        # non-trivial affines and biases so every path carries gradient
        if t.name.endswith(("gamma", "beta")) or t.name.rsplit(".", 1)[-1].startswith("b"):
            t.data[...] += 0.3 * rng.standard_normal(t.shape)
    P = Tensor(rng.uniform(-1, 1, (TINY_POINTS, 3)), dtype="float64", name="input")
    target = rng.uniform(-1, 1, (cfg.r * TINY_POINTS, 3))
    nbr = knn(P.data, cfg.k)

    def f():
        return chamfer_loss(forward(P, cfg, params, train=train, nbr=nbr), target)

    wrt = params.trainable() + [P]
    names = list(params.tensors) + ["input"]
    report = grad_check(f, wrt, h=h, tol=tol, names=names)
    per_block: "OrderedDict[str, float]" = OrderedDict()
    for name, err in report.per_tensor.items():
        blk = "input" if name == "input" else _block_of(name)
        per_block[blk] = max(per_block.get(blk, 0.0), err)
    return report, per_block
