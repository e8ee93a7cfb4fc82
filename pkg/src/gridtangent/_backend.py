"""Select the compiled kernels when available, else the NumPy fallback.

Set ``GRIDTANGENT_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pyfallback

NAME = "python"
_impl = _pyfallback

if os.environ.get("GRIDTANGENT_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _ext as _impl  # noqa: F811
        NAME = "cython"
    except ImportError:
        _impl = _pyfallback


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def gather(idx, wts, feats):
    return _impl.gather(_i64(idx), _f64(wts), _f64(feats))


def scatter_add(idx, wts, vals, m):
    return _impl.scatter_add(_i64(idx), _f64(wts), _f64(vals), int(m))


def gtk_pairwise(idx_a, w_a, idx_b, w_b):
    return _impl.gtk_pairwise(_i64(idx_a), _f64(w_a), _i64(idx_b), _f64(w_b))
