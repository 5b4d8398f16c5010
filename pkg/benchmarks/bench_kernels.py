"""Time the compiled geometry kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py --points 2048 --k 20 --repeats 5

Each kernel runs on identical inputs under both backends; outputs are checked
for bitwise equality before timings are reported (best of ``--repeats``).
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from pu_transformer.geometry import kernels


def _cases(n: int, k: int, m: int, rng: np.random.Generator):
    P = rng.normal(size=(n, 3))
    Q = rng.normal(size=(n // 4, 3))
    idx = rng.integers(0, n // 8, size=n * k)
    src = rng.normal(size=(n * k, 64)).astype(np.float32)

    def scatter(b):
        out = np.zeros((n // 8, 64), np.float32)
        kernels.scatter_add_rows(out, idx, src, backend=b)
        return out

    return {
        f"knn_query n={n} k={k}": lambda b: kernels.knn_query(P, P, k, True, backend=b),
        f"fps n={n} m={m}": lambda b: kernels.fps(P, m, 0, backend=b),
        f"nearest {n // 4}x{n}": lambda b: kernels.nearest(Q, P, backend=b),
        f"scatter_add_rows {n * k}x64": scatter,
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2048)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--fps-m", type=int, default=512)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)
    try:
        kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1

    rng = np.random.default_rng(a.seed)
    print(f"{'kernel':<30} {'python ms':>10} {'cython ms':>10} {'speedup':>8}  same")
    for name, fn in _cases(a.points, a.k, a.fps_m, rng).items():
        same = _same(fn("python"), fn("cython"))
        t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=a.repeats)) * 1e3 for b in ("python", "cython")}
        print(f"{name:<30} {t['python']:>10.2f} {t['cython']:>10.2f} {t['python'] / t['cython']:>7.1f}x  {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
