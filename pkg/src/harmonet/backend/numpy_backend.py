"""Pure NumPy implementations of the patch gather/scatter kernels.

Used when the compiled extension is unavailable (or when forced via
``HARMONET_BACKEND=numpy``). Loops run over the K*K kernel offsets only; the
per-offset work is a strided array copy, so this stays vectorised.
"""

import numpy as np


def im2col(img, k, stride):
    """(N, C, H, W) -> (N*OH*OW, C*K*K) matrix of flattened receptive fields.

    The caller has already applied any zero padding.
    """
    n, c, h, w = img.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    col = np.empty((n, c, k, k, oh, ow), dtype=img.dtype)
    for ky in range(k):
        y_end = ky + stride * oh
        for kx in range(k):
            x_end = kx + stride * ow
            col[:, :, ky, kx] = img[:, :, ky:y_end:stride, kx:x_end:stride]
    return np.ascontiguousarray(col.transpose(0, 4, 5, 1, 2, 3)).reshape(n * oh * ow, c * k * k)


def col2im(cols, img_shape, k, stride):
    """Adjoint of im2col: scatter-add columns back onto an (N, C, H, W) grid."""
    n, c, h, w = img_shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    col = cols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros(img_shape, dtype=cols.dtype)
    for ky in range(k):
        y_end = ky + stride * oh
        for kx in range(k):
            x_end = kx + stride * ow
            # each (ky, kx) slice hits disjoint pixels, so += is collision-free
            img[:, :, ky:y_end:stride, kx:x_end:stride] += col[:, :, ky, kx]
    return img
