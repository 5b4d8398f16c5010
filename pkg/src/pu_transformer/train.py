"""Minibatch training on synthetic sparse/dense pairs."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import SampleRecord, read_dataset, save_checkpoint
from .data.checkpoint import encode_checkpoint
from .geometry import knn_batch, normalize_points
from .metrics import MetricReport, chamfer_loss, evaluate
from .model import ModelConfig, ModelParams, forward, init_params
from .tensor import NonFiniteError, Tape

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, detail: str = ""):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}{': ' + detail if detail else ''}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr0: float = 1e-3
    lr_decay: float = 0.7
    decay_interval: int = 20
    seed: int = 0
    optimizer: str = "adam"
    max_steps: Optional[int] = None
    dataset: Optional[str] = None
    checkpoint: Optional[str] = None

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.epochs < 1 or self.batch_size < 1 or self.decay_interval < 1:
            raise ValueError("epochs, batch_size and decay_interval must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def lr_at(self, epoch: int) -> float:
        """Step decay: ``lr0 * lr_decay ** (epoch // decay_interval)`` (0-based epochs)."""
        return self.lr0 * self.lr_decay ** (epoch // self.decay_interval)


PRESETS = {
    # 64 patches / batch 8 / 25 epochs = 200 optimizer steps
    "desk": dict(epochs=25, batch_size=8),
    "paper": dict(epochs=100, batch_size=64),
}


def preset(name: str, **overrides) -> TrainConfig:
    kw = dict(PRESETS[name])
    kw.update(overrides)
    return TrainConfig(**kw)


class Adam:
    def __init__(self, params: Sequence, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


class SGD:
    def __init__(self, params: Sequence, lr: float = 1e-3):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= (self.lr * p.grad).astype(p.dtype)


def make_optimizer(name: str, params, lr: float):
    return Adam(params, lr) if name == "adam" else SGD(params, lr)


def normalized_pairs(records: Sequence[SampleRecord]):
    """Stack samples, each normalised by its sparse input's centroid and radius."""
    xs, ys = [], []
    for rec in records:
        sp, c, s = normalize_points(rec.sparse)
        xs.append(sp)
        ys.append((np.asarray(rec.dense) - c) / s)
    return np.stack(xs), np.stack(ys)


def eval_loss(params: ModelParams, cfg: ModelConfig, sparse: np.ndarray, dense: np.ndarray,
              batch_size: int = 8) -> float:
    """Mean eval-mode Chamfer loss over normalised ``[B, n, 3]`` inputs."""
    total = 0.0
    for lo in range(0, len(sparse), batch_size):
        x = sparse[lo:lo + batch_size].astype(cfg.dtype)
        y = dense[lo:lo + batch_size].astype(cfg.dtype)
        total += chamfer_loss(forward(x, cfg, params, train=False), y).item() * len(x)
    return total / len(sparse)


def blob_hash(data: bytes) -> str:
    """Git-style content hash (sha1 of ``blob <len>\\0<data>``)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class RunManifest:
    model_config: dict
    train_config: dict
    checkpoint_hash: str = ""
    losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    steps: int = 0
    final_metrics: Optional[dict] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def train(records: Sequence[SampleRecord], cfg: ModelConfig, tcfg: TrainConfig,
          params: Optional[ModelParams] = None, checkpoint: Optional[str] = None):
    """Train and return ``(best_params, manifest)``.

    The epoch order is ``default_rng([seed, epoch]).permutation``; the kNN graph
    of every input is computed once up front.  With ``checkpoint`` set, the
    parameters of the best epoch (lowest mean loss) are written there.
    """
    if not records:
        raise ValueError("training set is empty")
    params = params if params is not None else init_params(cfg, tcfg.seed)
    sparse, dense = normalized_pairs(records)
    sparse = sparse.astype(cfg.dtype)
    dense = dense.astype(cfg.dtype)
    nbr = knn_batch(sparse, cfg.k)
    opt = make_optimizer(tcfg.optimizer, params.trainable(), tcfg.lr0)
    manifest = RunManifest(model_config=asdict(cfg), train_config=asdict(tcfg))
    best_loss, best = math.inf, params.copy()
    steps = 0
    for epoch in range(tcfg.epochs):
        opt.lr = tcfg.lr_at(epoch)
        order = np.random.default_rng([tcfg.seed, epoch]).permutation(len(sparse))
        t0 = time.perf_counter()
        losses = []
        for bi, lo in enumerate(range(0, len(order), tcfg.batch_size)):
            if tcfg.max_steps is not None and steps >= tcfg.max_steps:
                break
            idx = order[lo:lo + tcfg.batch_size]
            params.zero_grad()
            try:
                with Tape() as tape:
                    S = forward(sparse[idx], cfg, params, train=True, nbr=nbr[idx])
                    loss = chamfer_loss(S, dense[idx])
                tape.backward(loss)
            except NonFiniteError as exc:
                raise TrainingDivergedError(epoch, bi, str(exc)) from exc
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, bi)
            opt.step()
            steps += 1
            losses.append(value)
        if not losses:
            break
        mean_loss = float(np.mean(losses))
        manifest.losses.append(mean_loss)
        manifest.epoch_seconds.append(time.perf_counter() - t0)
        log.info("epoch %d lr %.3g loss %.6f (%.1fs)", epoch, opt.lr, mean_loss, manifest.epoch_seconds[-1])
        if mean_loss < best_loss:
            best_loss, best = mean_loss, params.copy()
            if checkpoint:
                save_checkpoint(best, cfg, checkpoint)
    manifest.steps = steps
    if checkpoint:
        manifest.checkpoint_hash = blob_hash(encode_checkpoint(best, cfg))
    return best, manifest


def sample_metrics(params: ModelParams, cfg: ModelConfig, rec: SampleRecord) -> MetricReport:
    """Upsample one whole sample in a single forward pass and score it in its native scale."""
    sp, c, s = normalize_points(rec.sparse)
    out = forward(sp.astype(cfg.dtype), cfg, params, train=False).data.astype(np.float64) * s + c
    return evaluate(out, rec.dense, rec.surface)


def train_from_dataset(dataset: str, cfg: ModelConfig, tcfg: TrainConfig, checkpoint: Optional[str] = None,
                       manifest_path: Optional[str] = None):
    records = read_dataset(dataset)
    best, manifest = train(records, cfg, tcfg, checkpoint=checkpoint)
    manifest.final_metrics = sample_metrics(best, cfg, records[0]).values()
    if manifest_path:
        Path(manifest_path).write_text(manifest.to_json() + "\n", encoding="utf-8")
    return best, manifest
