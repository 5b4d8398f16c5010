"""Synthetic sparse/dense training pairs drawn from reference surfaces."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geometry import fps
from ..surfaces import Surface, parse_surface
from .xyz import read_xyz, write_xyz

OVERSAMPLE = 20
MANIFEST = "manifest.txt"


@dataclass
class SampleRecord:
    id: str
    sparse: np.ndarray
    dense: np.ndarray
    surface: Surface
    sparse_index: np.ndarray | None = None


def generate_sample(surface: Surface, n_in: int, r: int, rng: np.random.Generator) -> tuple:
    """Dense ground truth and sparse input for one surface draw.

    ``OVERSAMPLE * r * n_in`` uniform surface points are thinned by FPS to
    ``r * n_in`` (a blue-noise stand-in for Poisson disk sampling), and the
    sparse input is an FPS subset of that dense set.
    """
    pool = surface.sample(OVERSAMPLE * r * n_in, rng)
    dense = pool[fps(pool, r * n_in)]
    sparse_index = fps(dense, n_in)
    return dense[sparse_index], dense, sparse_index


def generate_dataset(shapes: Sequence[Surface | str], n_in: int, r: int, count: int, seed: int) -> list:
    """``count`` samples cycling through ``shapes``; sample ``i`` uses generator ``[seed, i]``."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not shapes:
        raise ValueError("need at least one surface")
    if n_in < 1 or r < 1:
        raise ValueError("n_in and r must be positive")
    surfaces = [parse_surface(s) if isinstance(s, str) else s for s in shapes]
    records = []
    for i in range(count):
        surf = surfaces[i % len(surfaces)]
        rng = np.random.default_rng([seed, i])
        sparse, dense, idx = generate_sample(surf, n_in, r, rng)
        records.append(SampleRecord(f"{surf.kind}_{i:05d}", sparse, dense, surf, idx))
    return records


def write_dataset(records: Sequence[SampleRecord], out_dir) -> Path:
    """Write ``<id>_sparse.xyz`` / ``<id>_dense.xyz`` pairs and ``manifest.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in records:
        sp, de = f"{rec.id}_sparse.xyz", f"{rec.id}_dense.xyz"
        write_xyz(rec.sparse, out / sp)
        write_xyz(rec.dense, out / de)
        lines.append(f"{rec.id} {sp} {de} {rec.surface.spec()}\n")
    (out / MANIFEST).write_text("".join(lines), encoding="utf-8")
    return out / MANIFEST


def read_dataset(path) -> list:
    """Load a dataset directory (or its manifest file)."""
    p = Path(path)
    manifest = p / MANIFEST if p.is_dir() else p
    if not manifest.exists():
        raise FileNotFoundError(f"no dataset manifest at {manifest}")
    root = manifest.parent
    records = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{manifest}:{lineno}: expected '<id> <sparse> <dense> <surface>'")
        sid, sp, de, spec = parts
        records.append(SampleRecord(sid, read_xyz(root / sp), read_xyz(root / de), parse_surface(spec)))
    if not records:
        raise ValueError(f"dataset {manifest} is empty")
    return records
