"""Model builders for the benchmark experiments.

All MNIST-scale variants share one topology; only the spatial-filter stage
differs:

* ``conv``      - learned 3x3 convolutions
* ``harmonic``  - fixed DCT bank, learned combination (first block also
                  batch-normalises the DCT coefficients)
* ``separable`` - harmonic structure, but the K*K spatial filters are
                  randomly initialised and learned (shared across channels)

The shallow model is a single normalised harmonic block + ReLU + linear
classifier used for the stride/truncation sweeps on 32x32 inputs.
"""

import numpy as np

from .harmonic import HarmonicBlock
from .nn import (AvgPool2d, BatchNorm, Conv2d, Dense, Flatten, Network, ReLU,
                 UpsampleNearest, Parameter, resolve_dtype, uniform_init)

MNIST_STAGE_WIDTHS = (32, 64, 128)
VARIANTS = ("conv", "separable", "harmonic")


class SeparableBlock(HarmonicBlock):
    """Harmonic block whose filter bank is a learned parameter.

    The bank holds K*K spatial filters shared across input channels; the
    combination stage is identical to the harmonic block's.
    """

    kind = "separable"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 normalize=False, algorithm=None, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        super().__init__(in_channels, out_channels, kernel_size, stride=stride,
                         padding=padding, normalize=normalize, algorithm=algorithm,
                         rng=rng, dtype=dtype)
        dtype = resolve_dtype(dtype)
        k = kernel_size
        self.filters = Parameter(
            uniform_init(rng, (k * k, k, k), k * k, dtype), name="filters")

    def bank_filters(self):
        return self.filters.value

    def _accumulate_bank_grad(self, grad_filters):
        self.filters.grad += grad_filters

    def _fold_token(self):
        return (self.weights.version, self.filters.version)

    def params(self):
        return [self.weights, self.filters]

    def state_arrays(self):
        return super().state_arrays() + [("filters", self.filters.value)]


def _spatial_stage(variant, n_in, n_out, first, algorithm, rng, dtype):
    if variant == "conv":
        return Conv2d(n_in, n_out, 3, padding=1, rng=rng, dtype=dtype)
    if variant == "harmonic":
        return HarmonicBlock(n_in, n_out, 3, padding=1, normalize=first,
                             algorithm=1 if first else algorithm, rng=rng, dtype=dtype)
    if variant == "separable":
        return SeparableBlock(n_in, n_out, 3, padding=1, normalize=first,
                              algorithm=1 if first else algorithm, rng=rng, dtype=dtype)
    raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")


def build_mnist_model(variant, algorithm=2, dtype=np.float32, seed=0):
    """Three spatial stages (32, 64, 128 filters) with BN+ReLU after each
    layer, overlapping 3x3/stride-2 average pooling between stages, then a
    512-unit dense layer and a 10-way classifier. 28x28 inputs pool to
    14x14 and 7x7.
    """
    rng = np.random.default_rng(seed)
    layers = []
    n_in = 1
    for i, width in enumerate(MNIST_STAGE_WIDTHS):
        layers.append(_spatial_stage(variant, n_in, width, i == 0, algorithm, rng, dtype))
        layers.append(BatchNorm(width, dtype=dtype))
        layers.append(ReLU())
        if i < 2:
            layers.append(AvgPool2d(3, stride=2, padding=1))
        n_in = width
    layers.append(Flatten())
    layers.append(Dense(128 * 7 * 7, 512, rng=rng, dtype=dtype))
    layers.append(BatchNorm(512, dtype=dtype))
    layers.append(ReLU())
    layers.append(Dense(512, 10, rng=rng, dtype=dtype))
    return Network(layers)


# feature counts balancing parameter budgets across strides (paper protocol)
BALANCED_FEATURES = {
    4: {1: 16, 2: 50, 4: 200},
    8: {1: 16, 4: 200, 8: 625},
}
SWEEP_STRIDES = {4: (1, 2, 4), 8: (1, 4, 8)}


def build_shallow_model(k, stride, mode="replicate", truncate=None,
                        in_channels=3, input_hw=(32, 32), num_classes=10,
                        dtype=np.float32, seed=0):
    """One normalised harmonic block + ReLU + linear softmax classifier.

    ``replicate`` mode keeps 16 output features at every stride and resizes
    strided feature maps back to the stride-1 resolution; ``balanced`` mode
    instead grows the feature count with the stride to roughly match
    parameter budgets (e.g. 16/50/200 for K=4 at strides 1/2/4).
    """
    if mode not in ("replicate", "balanced"):
        raise ValueError(f"mode must be replicate|balanced, got {mode!r}")
    if stride not in SWEEP_STRIDES.get(k, ()):
        raise ValueError(f"stride {stride} not in {SWEEP_STRIDES.get(k)} for k={k}")
    h, w = input_hw
    if mode == "balanced":
        features = BALANCED_FEATURES[k][stride]
    else:
        features = 16
    rng = np.random.default_rng(seed)
    layers = [
        HarmonicBlock(in_channels, features, k, stride=stride, padding=0,
                      truncate=truncate, normalize=True, rng=rng, dtype=dtype),
        ReLU(),
    ]
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    if mode == "replicate" and stride > 1:
        full_oh, full_ow = h - k + 1, w - k + 1
        layers.append(UpsampleNearest((full_oh, full_ow)))
        oh, ow = full_oh, full_ow
    layers.append(Flatten())
    layers.append(Dense(features * oh * ow, num_classes, rng=rng, dtype=dtype))
    return Network(layers)


def count_parameters(model):
    return sum(int(np.prod(p.value.shape)) for p in model.params())


def layer_kinds(model):
    """Topology fingerprint used for variant-parity assertions."""
    return [layer.kind for layer in model.layers]
