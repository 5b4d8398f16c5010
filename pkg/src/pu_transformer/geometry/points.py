"""Coordinate-space algorithms: kNN, farthest point sampling, seed patches, noise."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels


def as_cloud(points, name: str = "cloud") -> np.ndarray:
    """Validate an ``N x 3`` array of finite coordinates."""
    pts = np.asarray(points)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must have shape (N, 3), got {pts.shape}")
    if pts.shape[0] < 1:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(pts).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    return pts


def knn(cloud, k: int, backend: Optional[str] = None) -> np.ndarray:
    """Exact k nearest neighbours of every point, self first.

    Rows are ordered by (squared distance, index); the query point itself is
    always entry 0 even when exact duplicates exist.
    """
    pts = as_cloud(cloud)
    if k < 1 or k > len(pts):
        raise ValueError(f"knn: k={k} must be in [1, N={len(pts)}]")
    return kernels.knn_query(pts, pts, k, self_first=True, backend=backend)


def knn_batch(clouds: np.ndarray, k: int) -> np.ndarray:
    """``knn`` applied to each cloud of a ``B x N x 3`` stack."""
    return np.stack([knn(c, k) for c in clouds])


def fps(cloud, m: int, start: int = 0, backend: Optional[str] = None) -> np.ndarray:
    """Greedy max-min subset of ``m`` indices beginning at ``start``.

    Ties go to the lower index and an index is never picked twice, so
    ``m == N`` yields a permutation.
    """
    pts = as_cloud(cloud)
    if m < 1 or m > len(pts):
        raise ValueError(f"fps: m={m} must be in [1, N={len(pts)}]")
    if not 0 <= start < len(pts):
        raise ValueError(f"fps: start={start} out of range")
    return kernels.fps(pts, m, start, backend=backend)


def normalize_points(points: np.ndarray):
    """Centre on the centroid and scale into the unit ball.

    Returns ``(normalized, centroid, scale)``; coincident points get scale 1.
    """
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = float(np.sqrt((centered * centered).sum(axis=1)).max())
    if scale == 0.0:
        scale = 1.0
    return centered / scale, centroid, scale


def denormalize_points(points: np.ndarray, centroid: np.ndarray, scale: float) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) * scale + centroid


@dataclass
class Patch:
    indices: np.ndarray
    points: np.ndarray
    centroid: np.ndarray
    scale: float

    def denormalize(self, points: Optional[np.ndarray] = None) -> np.ndarray:
        return denormalize_points(self.points if points is None else points, self.centroid, self.scale)


@dataclass
class PatchSet:
    patches: list = field(default_factory=list)
    n_parent: int = 0

    def __len__(self) -> int:
        return len(self.patches)

    def __iter__(self):
        return iter(self.patches)

    def __getitem__(self, i) -> Patch:
        return self.patches[i]

    def coverage(self) -> np.ndarray:
        """Number of patches containing each parent point."""
        counts = np.zeros(self.n_parent, dtype=np.int64)
        for p in self.patches:
            np.add.at(counts, p.indices, 1)
        return counts


def extract_patches(cloud, patch_size: int, coverage_factor: float = 3.0) -> PatchSet:
    """Cut a cloud into normalised seed patches that jointly cover every point.

    ``ceil(N * coverage_factor / patch_size)`` seeds are drawn by FPS and each
    patch is the ``patch_size`` nearest points of its seed.  While some point is
    uncovered, the uncovered point farthest from all seeds becomes a new seed.
    """
    pts = as_cloud(cloud)
    n = len(pts)
    if patch_size < 1 or patch_size > n:
        raise ValueError(f"extract_patches: patch_size={patch_size} must be in [1, N={n}]")
    # a patch of every point is the whole cloud: one is enough
    n_seeds = 1 if patch_size == n else min(n, max(1, math.ceil(n * coverage_factor / patch_size)))
    seeds = list(fps(pts, n_seeds))
    groups = list(kernels.knn_query(pts[seeds], pts, patch_size))
    covered = np.zeros(n, dtype=bool)
    for g in groups:
        covered[g] = True

    seed_dist = kernels.nearest(pts, pts[seeds])[0]
    while not covered.all():
        cand = np.where(covered, -1.0, seed_dist)
        s = int(np.argmax(cand))
        g = kernels.knn_query(pts[s:s + 1], pts, patch_size)[0]
        seeds.append(s)
        groups.append(g)
        covered[g] = True
        d = kernels.nearest(pts, pts[s:s + 1])[0]
        np.minimum(seed_dist, d, out=seed_dist)

    patches = []
    for g in groups:
        normed, centroid, scale = normalize_points(pts[g])
        patches.append(Patch(indices=np.asarray(g, dtype=np.int64), points=normed,
                             centroid=centroid, scale=scale))
    return PatchSet(patches=patches, n_parent=n)


def merge_upsampled(patches: Sequence[np.ndarray], target: int) -> np.ndarray:
    """Concatenate de-normalised patch outputs and FPS them down to ``target`` points."""
    if not patches:
        raise ValueError("merge_upsampled: no patches given")
    allpts = np.concatenate([as_cloud(p, "patch") for p in patches], axis=0)
    if len(allpts) < target:
        raise ValueError(f"merge_upsampled: {len(allpts)} points available, {target} requested")
    return allpts[fps(allpts, target)]


def add_noise(cloud, beta: float, seed: int) -> np.ndarray:
    """``cloud + beta * g`` with ``g`` i.i.d. standard normal per coordinate."""
    if beta < 0:
        raise ValueError(f"add_noise: beta must be >= 0, got {beta}")
    pts = as_cloud(cloud)
    if beta == 0:
        return pts.copy()
    rng = np.random.default_rng(seed)
    return pts + beta * rng.standard_normal(pts.shape)


def min_spacing(cloud) -> float:
    """Smallest distance between two distinct entries of the cloud."""
    pts = as_cloud(cloud)
    if len(pts) < 2:
        return math.inf
    idx = kernels.knn_query(pts, pts, 2, self_first=True)
    d = pts[idx[:, 1]] - pts
    return float(np.sqrt((d * d).sum(axis=1)).min())
