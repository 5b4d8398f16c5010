"""Backend selection for the geometry kernels.

The compiled extension is used when it imports cleanly; setting
``PU_TRANSFORMER_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("PU_TRANSFORMER_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython" / "python"), or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def knn_query(queries, points, k, self_first=False, backend=None):
    return get_backend(backend).knn_query(_f64(queries), _f64(points), int(k), bool(self_first))


def fps(points, m, start=0, backend=None):
    return get_backend(backend).fps(_f64(points), int(m), int(start))


def nearest(a, b, backend=None):
    """Squared distance and index of the closest row of ``b`` for each row of ``a``."""
    return get_backend(backend).nearest(_f64(a), _f64(b))


def scatter_add_rows(out, idx, src, backend=None):
    """In place ``out[idx[i]] += src[i]``; ``out`` must be C-contiguous."""
    src = np.ascontiguousarray(src, dtype=out.dtype)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    get_backend(backend).scatter_add_rows(out, idx, src)
