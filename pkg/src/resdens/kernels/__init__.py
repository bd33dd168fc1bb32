"""Hot loops behind the tensor and image operations.

The backend is chosen once at import time from ``RESDENS_KERNELS``:
``numba`` (default when numba imports) or ``numpy``. Both produce
bit-identical results; see ``benchmarks/bench_kernels.py`` for timings.
"""
import os
import warnings

from . import _numpy

_requested = os.environ.get("RESDENS_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"RESDENS_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

_impl = _numpy
if _requested == "numba":
    try:
        from . import _numba as _impl  # noqa: F811
    except ImportError:  # pragma: no cover - depends on environment
        warnings.warn("numba unavailable; falling back to numpy kernels", RuntimeWarning)
        _impl = _numpy

BACKEND = "numba" if _impl is not _numpy else "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
avgpool_forward = _impl.avgpool_forward
avgpool_backward = _impl.avgpool_backward
bilinear_sample = _impl.bilinear_sample

__all__ = [
    "BACKEND",
    "im2col",
    "col2im",
    "avgpool_forward",
    "avgpool_backward",
    "bilinear_sample",
]
