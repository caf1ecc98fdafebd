"""Kernel backend selection.

The compiled extension is preferred; ``DUALHEAD_PD_PURE=1`` forces the
NumPy fallback. Inputs are coerced to C-contiguous arrays of a single float
dtype so both backends see identical layouts.
"""

import os

import numpy as np

from . import _pykernels

_compiled = None
if os.environ.get("DUALHEAD_PD_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pykernels


def _c(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype)


# conv1d always runs through BLAS matmuls; a compiled loop was slower.
def conv1d_forward(x, w, b):
    dt = np.result_type(x, w, b)
    return _pykernels.conv1d_forward(_c(x, dt), _c(w, dt), _c(b, dt))


def conv1d_backward(x, w, gy):
    dt = np.result_type(x, w, gy)
    return _pykernels.conv1d_backward(_c(x, dt), _c(w, dt), _c(gy, dt))


def dwt_step(frames, lo, hi):
    dt = np.result_type(frames, np.float32)
    return _impl.dwt_step(_c(frames, dt), _c(lo, dt), _c(hi, dt))


def hardest_pairs(emb, labels):
    return _impl.hardest_pairs(_c(emb, np.float64), _c(labels, np.int64))
