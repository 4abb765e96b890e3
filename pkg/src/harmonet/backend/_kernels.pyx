# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled patch gather/scatter kernels.

These two routines are the hot inner loops of every convolution and pooling
operation: im2col turns the sliding K x K windows of an (N, C, H, W) image
batch into a matrix so the surrounding code can hand the contraction to BLAS,
and col2im is its adjoint (scatter-add). Padding is applied by the caller, so
no bounds handling happens here.
"""

import numpy as np

ctypedef fused real:
    float
    double


def im2col_kernel(real[:, :, :, ::1] img, Py_ssize_t k, Py_ssize_t stride,
                  real[:, ::1] out):
    """Fill out[(n*oh+oy)*ow+ox, (c*k+ky)*k+kx] = img[n, c, oy*stride+ky, ox*stride+kx]."""
    cdef Py_ssize_t n_imgs = img.shape[0]
    cdef Py_ssize_t chans = img.shape[1]
    cdef Py_ssize_t h = img.shape[2]
    cdef Py_ssize_t w = img.shape[3]
    cdef Py_ssize_t oh = (h - k) // stride + 1
    cdef Py_ssize_t ow = (w - k) // stride + 1
    cdef Py_ssize_t n, c, oy, ox, ky, kx, row, base
    with nogil:
        for n in range(n_imgs):
            for oy in range(oh):
                for ox in range(ow):
                    row = (n * oh + oy) * ow + ox
                    for c in range(chans):
                        base = c * k * k
                        for ky in range(k):
                            for kx in range(k):
                                out[row, base + ky * k + kx] = \
                                    img[n, c, oy * stride + ky, ox * stride + kx]


def col2im_kernel(real[:, ::1] cols, Py_ssize_t k, Py_ssize_t stride,
                  real[:, :, :, ::1] out):
    """Scatter-add the adjoint of im2col_kernel into a zero-initialised out."""
    cdef Py_ssize_t n_imgs = out.shape[0]
    cdef Py_ssize_t chans = out.shape[1]
    cdef Py_ssize_t h = out.shape[2]
    cdef Py_ssize_t w = out.shape[3]
    cdef Py_ssize_t oh = (h - k) // stride + 1
    cdef Py_ssize_t ow = (w - k) // stride + 1
    cdef Py_ssize_t n, c, oy, ox, ky, kx, row, base
    with nogil:
        for n in range(n_imgs):
            for oy in range(oh):
                for ox in range(ow):
                    row = (n * oh + oy) * ow + ox
                    for c in range(chans):
                        base = c * k * k
                        for ky in range(k):
                            for kx in range(k):
                                out[n, c, oy * stride + ky, ox * stride + kx] += \
                                    cols[row, base + ky * k + kx]
