"""Named trainable tensors and normalisation buffers."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator, Mapping

import numpy as np

from ..tensor import Tensor
from .config import ModelConfig


def _norm_shapes(prefix: str, c: int, out: dict) -> None:
    out[f"{prefix}.gamma"] = (c,)
    out[f"{prefix}.beta"] = (c,)


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple]":
    """Ordered name -> shape map of every trainable tensor."""
    s: "OrderedDict[str, tuple]" = OrderedDict()
    h = cfg.head_channels
    s["head.W"] = (3, h)
    s["head.b"] = (h,)
    _norm_shapes("head.bn", h, s)
    for l, (cin, cp) in enumerate(cfg.encoder_io(), start=1):
        sc = cfg.scmsa(l - 1)
        e = f"enc{l}"
        half = cp // 2
        s[f"{e}.posfus.W_phi"] = (6, half)
        s[f"{e}.posfus.b_phi"] = (half,)
        _norm_shapes(f"{e}.posfus.bn_phi", half, s)
        s[f"{e}.posfus.W_theta"] = (2 * cin, half)
        s[f"{e}.posfus.b_theta"] = (half,)
        _norm_shapes(f"{e}.posfus.bn_theta", half, s)
        _norm_shapes(f"{e}.norm1", cp, s)
        for q in ("q", "k", "v"):
            s[f"{e}.attn.W{q}"] = (cp, cp)
            s[f"{e}.attn.b{q}"] = (cp,)
        s[f"{e}.attn.Wo"] = (sc.concat_width, cp)
        s[f"{e}.attn.bo"] = (cp,)
        _norm_shapes(f"{e}.norm2", cp, s)
        s[f"{e}.mlp.W"] = (cp, cp)
        s[f"{e}.mlp.b"] = (cp,)
    cl = cfg.channels[-1] // cfg.r
    s["tail.W"] = (cl, 3)
    s["tail.b"] = (3,)
    return s


def buffer_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple]":
    """Running statistics of every batch-norm layer."""
    b: "OrderedDict[str, tuple]" = OrderedDict()
    names = ["head.bn"]
    widths = [cfg.head_channels]
    for l, (_, cp) in enumerate(cfg.encoder_io(), start=1):
        names += [f"enc{l}.posfus.bn_phi", f"enc{l}.posfus.bn_theta"]
        widths += [cp // 2, cp // 2]
        if cfg.encoder_norm == "batch":
            names += [f"enc{l}.norm1", f"enc{l}.norm2"]
            widths += [cp, cp]
    for n, c in zip(names, widths):
        b[f"{n}.running_mean"] = (c,)
        b[f"{n}.running_var"] = (c,)
    return b


def _block_of(name: str) -> str:
    parts = name.split(".")
    if parts[0].startswith("enc"):
        return f"{parts[0]}.{parts[1]}"
    return parts[0]


def param_count(cfg: ModelConfig, by_block: bool = False):
    """Number of trainable scalars; optionally broken down per block."""
    counts: "OrderedDict[str, int]" = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        blk = _block_of(name)
        counts[blk] = counts.get(blk, 0) + int(np.prod(shape))
    total = sum(counts.values())
    return (total, counts) if by_block else total


class ParamView:
    """Read access to one block's tensors by their local names."""

    def __init__(self, params: "ModelParams", prefix: str):
        self._params = params
        self._prefix = prefix

    def __getitem__(self, name: str) -> Tensor:
        return self._params.tensors[f"{self._prefix}.{name}"]

    def buffer(self, name: str) -> np.ndarray:
        return self._params.buffers[f"{self._prefix}.{name}"]

    def view(self, sub: str) -> "ParamView":
        return ParamView(self._params, f"{self._prefix}.{sub}")


class ModelParams:
    """Trainable tensors plus batch-norm running statistics, keyed by name."""

    def __init__(self, cfg: ModelConfig, tensors: Mapping[str, Tensor], buffers: Mapping[str, np.ndarray]):
        self.cfg = cfg
        self.tensors = OrderedDict(tensors)
        self.buffers = OrderedDict(buffers)
        expected = param_shapes(cfg)
        if list(self.tensors) != list(expected):
            missing = set(expected) ^ set(self.tensors)
            raise KeyError(f"parameter names do not match config: {sorted(missing)[:5]}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {self.tensors[name].shape} != {shape}")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def view(self, prefix: str) -> ParamView:
        return ParamView(self, prefix)

    def trainable(self) -> list:
        return list(self.tensors.values())

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.cfg,
            {n: Tensor(t.data.copy(), requires_grad=t.requires_grad, name=n) for n, t in self.tensors.items()},
            {n: b.copy() for n, b in self.buffers.items()},
        )

    def astype(self, dtype: str) -> "ModelParams":
        cfg = self.cfg.replace(dtype=dtype)
        return ModelParams(
            cfg,
            {n: Tensor(t.data, dtype=dtype, requires_grad=t.requires_grad, name=n) for n, t in self.tensors.items()},
            {n: b.astype(dtype) for n, b in self.buffers.items()},
        )


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Xavier-uniform weights, zero biases, unit/zero norm affines.

    Weights are drawn in ``param_shapes`` order from one generator, so the
    result is a pure function of ``(cfg, seed)``.
    """
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("W"):
            fan_in, fan_out = shape
            s = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-s, s, size=shape)
        elif leaf == "gamma":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        tensors[name] = Tensor(data, dtype=cfg.dtype, requires_grad=True, name=name)
    buffers = OrderedDict()
    for name, shape in buffer_shapes(cfg).items():
        fill = 1.0 if name.endswith("running_var") else 0.0
        buffers[name] = np.full(shape, fill, dtype=cfg.dtype)
    return ModelParams(cfg, tensors, buffers)
