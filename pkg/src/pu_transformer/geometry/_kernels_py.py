"""Pure numpy versions of the compiled geometry kernels.

Same contracts and the same floating point evaluation order as ``_ckernels``,
so either backend yields identical indices and distances.
"""
import numpy as np

_CHUNK = 1 << 22  # max entries of a distance block held at once


def _sqdist_block(a, b):
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    dz = a[:, None, 2] - b[None, :, 2]
    return dx * dx + dy * dy + dz * dz


def _row_chunks(n_rows, n_cols):
    step = max(1, _CHUNK // max(n_cols, 1))
    for lo in range(0, n_rows, step):
        yield lo, min(lo + step, n_rows)


def knn_query(queries, points, k, self_first=False):
    out = np.empty((len(queries), k), dtype=np.int64)
    for lo, hi in _row_chunks(len(queries), len(points)):
        d = _sqdist_block(queries[lo:hi], points)
        if self_first:
            rows = np.arange(lo, hi)
            d[rows - lo, rows] = -1.0
        out[lo:hi] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def fps(points, m, start):
    n = len(points)
    sel = np.empty(m, dtype=np.int64)
    mind = np.full(n, np.inf)
    cur = start
    for it in range(m):
        sel[it] = cur
        mind[cur] = -1.0
        d = _sqdist_block(points[cur:cur + 1], points)[0]
        np.minimum(mind, d, out=mind)
        cur = int(np.argmax(mind))
    return sel


def nearest(a, b):
    dist = np.empty(len(a))
    arg = np.empty(len(a), dtype=np.int64)
    for lo, hi in _row_chunks(len(a), len(b)):
        d = _sqdist_block(a[lo:hi], b)
        j = np.argmin(d, axis=1)
        arg[lo:hi] = j
        dist[lo:hi] = d[np.arange(hi - lo), j]
    return dist, arg


def scatter_add_rows(out, idx, src):
    np.add.at(out, idx, src)
