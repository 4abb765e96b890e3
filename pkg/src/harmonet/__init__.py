"""harmonet: DCT filter-bank (harmonic) convolution blocks.

Convolutional layers whose spatial filters are a fixed, L1-normalised 2-D
DCT-II basis; only the per-frequency combination weights are learned. The
package bundles the two equivalent block formulations (expanded and folded),
the windowed-transform identities behind strided banks, a small trainable
CNN engine, dataset loaders, and the limited-data experiment drivers.
"""

from .backend import BACKEND
from .dct import FilterBank, build_basis, export_filters, zigzag_order
from .harmonic import CostReport, HarmonicBlock, cost_report
from .nn import (AvgPool2d, BatchNorm, Conv2d, Dense, Flatten, Network,
                 Parameter, ReLU, SoftmaxCrossEntropy, UpsampleNearest,
                 conv2d_backward, conv2d_forward)
from .optim import SGD

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "FilterBank", "build_basis", "export_filters", "zigzag_order",
    "CostReport", "HarmonicBlock", "cost_report",
    "AvgPool2d", "BatchNorm", "Conv2d", "Dense", "Flatten", "Network",
    "Parameter", "ReLU", "SoftmaxCrossEntropy", "UpsampleNearest",
    "conv2d_backward", "conv2d_forward", "SGD", "__version__",
]
