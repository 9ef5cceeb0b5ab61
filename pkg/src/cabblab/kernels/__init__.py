"""Hot numeric kernels with two interchangeable backends.

The compiled backend is used when available; set CABBLAB_BACKEND=numpy to
force the pure-numpy fallback, or CABBLAB_BACKEND=numba to require the
compiled one (import error surfaces instead of falling back).
Both expose the same three functions: sparse_dot, predict_batch, run_epoch.
"""

from __future__ import annotations

import os

from . import numpy_backend
from .numpy_backend import LOSS_CLAMP_HI, LOSS_CLAMP_LO

_VALID = ("numba", "numpy")


def _select():
    requested = os.environ.get("CABBLAB_BACKEND", "").strip().lower()
    if requested and requested not in _VALID:
        raise ValueError(
            f"CABBLAB_BACKEND={requested!r} not recognized; expected one of {_VALID}"
        )
    if requested == "numpy":
        return numpy_backend
    try:
        from . import numba_backend
    except ImportError:
        if requested == "numba":
            raise
        return numpy_backend
    return numba_backend


_impl = _select()

BACKEND = _impl.NAME
sparse_dot = _impl.sparse_dot
predict_batch = _impl.predict_batch
run_epoch = _impl.run_epoch

__all__ = [
    "BACKEND",
    "LOSS_CLAMP_HI",
    "LOSS_CLAMP_LO",
    "numpy_backend",
    "predict_batch",
    "run_epoch",
    "sparse_dot",
]
