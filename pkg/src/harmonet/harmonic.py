"""Harmonic convolution blocks: fixed DCT filter responses, learned mixing.

Two mathematically equivalent execution paths exist when the block is linear:

* expanded: every active cosine filter is applied depthwise to every input
  channel, giving a (batch, N*F, H', W') coefficient tensor z that is
  optionally batch-normalised per coefficient and then mixed by a learned
  1x1 combination. Required whenever ``normalize=True``.
* folded: the learned coefficients are folded into ordinary K x K kernels
  g[m, n] = sum_f w[m, n, f] * psi_f first, so the block becomes a single
  standard convolution. Much smaller intermediate state; linear blocks only.

Weights keep the full (M, N, K, K) shape regardless of the active filter
subset; coefficients outside the subset are hard-masked to zero (and their
gradients zeroed), which keeps both code paths and checkpoints shape-stable.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dct import FilterBank
from .nn import (BatchNorm, Layer, Parameter, conv2d_backward, conv2d_forward,
                 conv2d_output_hw, resolve_dtype, uniform_init)


class HarmonicBlock(Layer):
    """Convolution with a fixed L1-normalised DCT filter bank.

    Only the (M, N, K, K) combination weights are learned. ``lam`` keeps the
    filters with u+v < lam, ``truncate`` keeps the first T zigzag filters;
    at most one of the two may be given. ``normalize`` inserts per-coefficient
    batch normalization (no affine terms) between filtering and combination
    and forces the expanded path. ``algorithm`` may pin 1 (expanded) or
    2 (folded); the default picks 1 when normalizing and 2 otherwise.
    """

    kind = "harmonic"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 lam=None, truncate=None, normalize=False, algorithm=None,
                 rng=None, dtype=np.float32):
        dtype = resolve_dtype(dtype)
        rng = rng or np.random.default_rng(0)
        if lam is not None and truncate is not None:
            raise ValueError("give at most one of lam= and truncate=")
        if algorithm not in (None, 1, 2):
            raise ValueError(f"algorithm must be 1 or 2, got {algorithm}")
        if normalize and algorithm == 2:
            raise ValueError("normalize=True requires the expanded path (algorithm 1)")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.normalize = normalize
        self.algorithm = algorithm if algorithm is not None else (1 if normalize else 2)
        self.bank = FilterBank(kernel_size)
        if lam is not None:
            self.active_pairs = self.bank.lambda_subset(lam)
        elif truncate is not None:
            self.active_pairs = self.bank.truncation_prefix(truncate)
        else:
            self.active_pairs = list(self.bank.order)
        self._us = np.array([u for (u, _) in self.active_pairs])
        self._vs = np.array([v for (_, v) in self.active_pairs])
        self.weight_mask = np.zeros((kernel_size, kernel_size), dtype=bool)
        self.weight_mask[self._us, self._vs] = True

        k = kernel_size
        w = uniform_init(rng, (out_channels, in_channels, k, k), in_channels * k * k, dtype)
        w[:, :, ~self.weight_mask] = 0
        self.weights = Parameter(w, name="weights")
        self.coeff_bn = (BatchNorm(in_channels * len(self.active_pairs), affine=False,
                                   dtype=dtype)
                         if normalize else None)
        self._dtype = dtype
        self._cache = None
        self._fold_cache = None

    # -- filter bank access (overridden by blocks with a learnable bank) ----

    def bank_filters(self):
        """Active filters as an (F, K, K) array in the block dtype."""
        return self.bank.filters(self.active_pairs, normalized=True, dtype=self._dtype)

    def _accumulate_bank_grad(self, grad_filters):
        pass  # the DCT bank is fixed

    def _fold_token(self):
        return (self.weights.version,)

    # -----------------------------------------------------------------------

    def params(self):
        return [self.weights]

    def sublayers(self):
        return [self.coeff_bn] if self.coeff_bn is not None else []

    def state_arrays(self):
        items = [("weights", self.weights.value)]
        if self.coeff_bn is not None:
            items.append(("coeff_bn.running_mean", self.coeff_bn.running_mean))
            items.append(("coeff_bn.running_var", self.coeff_bn.running_var))
        return items

    def out_shape(self, in_shape):
        n, c, h, w = in_shape
        oh, ow = conv2d_output_hw(h, w, self.kernel_size, self.stride, self.padding)
        return (n, self.out_channels, oh, ow)

    def active_weights(self):
        """Learned coefficients restricted to the subset, shape (M, N, F)."""
        return self.weights.value[:, :, self._us, self._vs]

    def mask_grad(self):
        self.weights.grad[:, :, ~self.weight_mask] = 0

    # -- expanded path (basis responses materialised) -----------------------

    def forward_expanded(self, x, train=True):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        b, n, h, w = x.shape
        f = len(self.active_pairs)
        filters = self.bank_filters()[:, None, :, :]  # (F, 1, K, K)
        z, cols = conv2d_forward(x.reshape(b * n, 1, h, w), filters,
                                 self.stride, self.padding, return_cache=True)
        oh, ow = z.shape[2:]
        z = z.reshape(b, n * f, oh, ow)
        if self.coeff_bn is not None:
            z = self.coeff_bn.forward(z, train=train)
        w_mat = self.active_weights().reshape(self.out_channels, n * f)
        z2 = z.reshape(b, n * f, oh * ow)
        out = np.matmul(w_mat, z2)  # (B, M, OH*OW)
        self._cache = ("expanded", x.shape, cols, z2, (oh, ow))
        return np.ascontiguousarray(out.reshape(b, self.out_channels, oh, ow))

    def _backward_expanded(self, grad_out):
        _, x_shape, cols, z2, (oh, ow) = self._cache
        b, n, h, w = x_shape
        f = len(self.active_pairs)
        m = self.out_channels
        g2 = grad_out.reshape(b, m, oh * ow)
        grad_wmat = np.einsum("bms,bqs->mq", g2, z2)
        self.weights.grad[:, :, self._us, self._vs] += grad_wmat.reshape(m, n, f)
        w_mat = self.active_weights().reshape(m, n * f)
        gz = np.matmul(w_mat.T, g2).reshape(b, n * f, oh, ow)
        if self.coeff_bn is not None:
            gz = self.coeff_bn.backward(gz)
        filters = self.bank_filters()[:, None, :, :]
        gx, gfilt = conv2d_backward(gz.reshape(b * n, f, oh, ow), (b * n, 1, h, w),
                                    filters, cols, self.stride, self.padding)
        self._accumulate_bank_grad(gfilt[:, 0])
        return gx.reshape(x_shape)

    # -- folded path (single convolution) -----------------------------------

    def fold_weights(self):
        """g[m, n] = sum over active (u, v) of w[m, n, u, v] * psi[u, v]."""
        if self.normalize:
            raise ValueError("folding is invalid with per-coefficient normalization")
        return np.einsum("mnf,fkl->mnkl", self.active_weights(), self.bank_filters())

    def folded_kernels(self, use_cache=False):
        if use_cache:
            token = self._fold_token()
            if self._fold_cache is None or self._fold_cache[0] != token:
                self._fold_cache = (token, self.fold_weights())
            return self._fold_cache[1]
        return self.fold_weights()

    def forward_folded(self, x, train=True):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        kernels = self.folded_kernels(use_cache=not train)
        out, cols = conv2d_forward(x, kernels, self.stride, self.padding, return_cache=True)
        self._cache = ("folded", x.shape, cols, kernels)
        return out

    def _backward_folded(self, grad_out):
        _, x_shape, cols, kernels = self._cache
        gx, gkern = conv2d_backward(grad_out, x_shape, kernels, cols,
                                    self.stride, self.padding)
        filters = self.bank_filters()
        self.weights.grad[:, :, self._us, self._vs] += np.einsum(
            "mnkl,fkl->mnf", gkern, filters)
        self._accumulate_bank_grad(
            np.einsum("mnf,mnkl->fkl", self.active_weights(), gkern))
        return gx

    # -----------------------------------------------------------------------

    def forward(self, x, train=True):
        if self.algorithm == 1:
            return self.forward_expanded(x, train=train)
        return self.forward_folded(x, train=train)

    def backward(self, grad_out):
        mode = self._cache[0]
        if mode == "expanded":
            grad_in = self._backward_expanded(grad_out)
        else:
            grad_in = self._backward_folded(grad_out)
        self.mask_grad()
        return grad_in


@dataclass
class CostReport:
    """Analytic multiply-add count and the largest live activation."""

    madds: int
    peak_intermediate_elems: int
    ratio_vs_standard_conv: Fraction


def cost_report(block, input_shape, algorithm):
    """Multiply-add accounting for one forward pass over ``input_shape``.

    A madd is one multiply-accumulate of a convolution/combination stage
    (zero-padded taps included, batch-norm excluded). The ratio is the
    overhead over a standard convolution of the same geometry: per batch for
    the expanded path, and relative to the per-image convolution cost for the
    one-time fold of the folded path.
    """
    if algorithm not in (1, 2):
        raise ValueError(f"algorithm must be 1 or 2, got {algorithm}")
    b, n, h, w = input_shape
    if n != block.in_channels:
        raise ValueError(f"expected {block.in_channels} input channels, got {n}")
    k = block.kernel_size
    m = block.out_channels
    f = len(block.active_pairs)
    oh, ow = conv2d_output_hw(h, w, k, block.stride, block.padding)
    standard = b * m * n * k * k * oh * ow
    input_elems = b * n * h * w
    output_elems = b * m * oh * ow
    if algorithm == 1:
        basis = b * n * f * k * k * oh * ow
        combine = b * m * n * f * oh * ow
        madds = basis + combine
        ratio = Fraction(madds - standard, standard)
        peak = max(input_elems, b * n * f * oh * ow, output_elems)
    else:
        fold = m * n * f * k * k
        madds = fold + standard
        ratio = Fraction(fold, m * n * k * k * oh * ow)
        peak = max(input_elems, output_elems, m * n * k * k)
    return CostReport(madds=madds, peak_intermediate_elems=peak,
                      ratio_vs_standard_conv=ratio)


# -- counter-instrumented reference loops (tiny inputs only) ----------------


def conv2d_reference_counted(x, kernels, stride=1, padding=0):
    """Direct-summation convolution that counts every multiply-add executed.

    Padded taps are multiplied like any other, matching the analytic count
    b * o * c * k^2 * oh * ow.
    """
    b, c, h, w = x.shape
    o, _, k, _ = kernels.shape
    oh, ow = conv2d_output_hw(h, w, k, stride, padding)
    xp = np.pad(x.astype(np.float64),
                ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((b, o, oh, ow))
    madds = 0
    for bi in range(b):
        for oi in range(o):
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for ky in range(k):
                            for kx in range(k):
                                acc += (xp[bi, ci, oy * stride + ky, ox * stride + kx]
                                        * kernels[oi, ci, ky, kx])
                                madds += 1
                    out[bi, oi, oy, ox] = acc
    return out, madds


def expanded_reference_counted(block, x):
    """Loop implementation of the expanded path (normalize=False), counted."""
    if block.normalize:
        raise ValueError("reference counting covers the linear block only")
    b, n, h, w = x.shape
    f = len(block.active_pairs)
    filters = block.bank_filters().astype(np.float64)
    z, basis_madds = conv2d_reference_counted(
        x.reshape(b * n, 1, h, w), filters[:, None], block.stride, block.padding)
    oh, ow = z.shape[2:]
    z = z.reshape(b, n * f, oh, ow)
    w_mat = block.active_weights().reshape(block.out_channels, n * f).astype(np.float64)
    out = np.zeros((b, block.out_channels, oh, ow))
    madds = basis_madds
    for bi in range(b):
        for m in range(block.out_channels):
            for q in range(n * f):
                out[bi, m] += w_mat[m, q] * z[bi, q]
                madds += oh * ow
    return out, madds


def folded_reference_counted(block, x):
    """Loop implementation of the folded path (fold + one convolution), counted."""
    filters = block.bank_filters().astype(np.float64)
    w_act = block.active_weights().astype(np.float64)
    m, n, f = w_act.shape
    k = block.kernel_size
    g = np.zeros((m, n, k, k))
    madds = 0
    for mi in range(m):
        for ni in range(n):
            for fi in range(f):
                g[mi, ni] += w_act[mi, ni, fi] * filters[fi]
                madds += k * k
    out, conv_madds = conv2d_reference_counted(x, g, block.stride, block.padding)
    return out, madds + conv_madds
