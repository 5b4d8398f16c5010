"""Plain-text ``.xyz`` point files: one ``x y z`` line per point."""
from __future__ import annotations

import math

import numpy as np


class XYZParseError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


def parse_xyz(text: str, path: str = "<string>") -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise XYZParseError(path, lineno, f"expected 3 fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise XYZParseError(path, lineno, f"not a number in {s!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise XYZParseError(path, lineno, "non-finite coordinate")
        rows.append(vals)
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def read_xyz(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        return parse_xyz(fh.read(), str(path))


def format_xyz(points) -> str:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("refusing to write non-finite coordinates")
    return "".join(f"{x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in pts.tolist())


def write_xyz(points, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_xyz(points))
