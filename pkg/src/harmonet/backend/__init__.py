"""Kernel backend selection.

Two interchangeable implementations of the im2col/col2im patch kernels exist:
a compiled Cython extension and a pure NumPy fallback. The compiled one is
picked automatically when importable; set ``HARMONET_BACKEND=numpy`` or
``HARMONET_BACKEND=compiled`` to force a choice (the latter raises if the
extension was not built). Both produce identical results; see
benchmarks/backend_benchmark.py for a speed comparison.
"""

import os

import numpy as np

from . import numpy_backend

_SUPPORTED = (np.float32, np.float64)

_requested = os.environ.get("HARMONET_BACKEND", "auto")
if _requested not in ("auto", "compiled", "numpy"):
    raise RuntimeError(f"HARMONET_BACKEND must be auto|compiled|numpy, got {_requested!r}")

_kernels = None
if _requested != "numpy":
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        _kernels = None
        if _requested == "compiled":
            raise ImportError(
                "HARMONET_BACKEND=compiled but the harmonet._kernels extension "
                "is not built; reinstall with a C compiler available"
            )
    else:
        from . import _kernels as _kernels  # type: ignore[no-redef]

BACKEND = "compiled" if _kernels is not None else "numpy"


def _check(img):
    if img.dtype.type not in _SUPPORTED:
        raise TypeError(f"kernel backend supports f32/f64, got {img.dtype}")


def im2col(img, k, stride):
    """(N, C, H, W) -> (N*OH*OW, C*K*K); padding is the caller's job."""
    _check(img)
    if _kernels is None:
        return numpy_backend.im2col(img, k, stride)
    n, c, h, w = img.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    img = np.ascontiguousarray(img)
    out = np.empty((n * oh * ow, c * k * k), dtype=img.dtype)
    _kernels.im2col_kernel(img, k, stride, out)
    return out


def col2im(cols, img_shape, k, stride):
    """Adjoint of im2col: scatter-add back to (N, C, H, W)."""
    _check(cols)
    if _kernels is None:
        return numpy_backend.col2im(cols, img_shape, k, stride)
    cols = np.ascontiguousarray(cols)
    out = np.zeros(img_shape, dtype=cols.dtype)
    _kernels.col2im_kernel(cols, k, stride, out)
    return out
