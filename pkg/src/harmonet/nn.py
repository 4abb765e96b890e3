"""Minimal dense-tensor network engine with reverse-mode differentiation.

Tensors are C-contiguous NumPy arrays; feature maps use (batch, channel,
height, width) order. Every layer implements ``forward`` (caching what its
backward needs) and ``backward`` (returning the input gradient and
accumulating parameter gradients). Convolution is cross-correlation (no
kernel flip) with zero padding, evaluated as an im2col gather followed by a
BLAS matmul; the gather/scatter kernels live in :mod:`harmonet.backend`.
"""

import numpy as np

from . import backend

DTYPES = {"f32": np.float32, "f64": np.float64}


def resolve_dtype(dtype):
    """Accept 'f32'/'f64' tags or NumPy dtypes, return the NumPy type."""
    if isinstance(dtype, str):
        try:
            return DTYPES[dtype]
        except KeyError:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}, got {dtype!r}")
    dt = np.dtype(dtype).type
    if dt not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    return dt


def dtype_tag(dt):
    return "f32" if np.dtype(dt) == np.float32 else "f64"


class Parameter:
    """A learned tensor with its gradient and momentum buffer.

    ``version`` increments on every in-place update made through ``assign`` or
    the optimizer; caches keyed on it (e.g. folded harmonic filters) stay
    coherent.
    """

    __slots__ = ("name", "value", "grad", "momentum_buffer", "version")

    def __init__(self, value, name=""):
        self.name = name
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.momentum_buffer = np.zeros_like(self.value)
        self.version = 0

    def assign(self, value):
        value = np.asarray(value, dtype=self.value.dtype)
        if value.shape != self.value.shape:
            raise ValueError(
                f"parameter {self.name!r}: cannot assign shape {value.shape} "
                f"to {self.value.shape}"
            )
        self.value[...] = value
        self.version += 1

    def zero_grad(self):
        self.grad[...] = 0

    @property
    def shape(self):
        return self.value.shape


def conv2d_output_hw(h, w, k, stride, padding):
    """Spatial output extents of a K x K cross-correlation."""
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ValueError(
            f"non-positive conv output extent for input {h}x{w}, "
            f"k={k}, stride={stride}, padding={padding}"
        )
    return oh, ow


def _pad_nchw(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, kernels, stride=1, padding=0, return_cache=False):
    """Cross-correlate (N, C, H, W) input with (O, C, K, K) kernels.

    Output element (n, o, i, j) is the sum over the receptive field at stride
    offset (i, j) with zero padding.
    """
    if x.ndim != 4 or kernels.ndim != 4:
        raise ValueError("conv2d expects 4-d input and kernels")
    n, c, h, w = x.shape
    o, ck, kh, kw = kernels.shape
    if kh != kw:
        raise ValueError("conv2d kernels must be square")
    if ck != c:
        raise ValueError(f"channel mismatch: input has {c}, kernels expect {ck}")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError("kernel larger than padded input")
    oh, ow = conv2d_output_hw(h, w, kh, stride, padding)
    cols = backend.im2col(_pad_nchw(x, padding), kh, stride)
    out = cols @ kernels.reshape(o, -1).T  # (N*OH*OW, O)
    out = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    if return_cache:
        return out, cols
    return out


def conv2d_backward(grad_out, x_shape, kernels, cols, stride=1, padding=0):
    """Gradients of sum(grad_out * conv2d_forward(x, kernels)) wrt x and kernels.

    ``cols`` is the im2col cache from the forward pass.
    """
    n, c, h, w = x_shape
    o, _, kh, _ = kernels.shape
    oh, ow = conv2d_output_hw(h, w, kh, stride, padding)
    if grad_out.shape != (n, o, oh, ow):
        raise ValueError(f"upstream grad shape {grad_out.shape} != {(n, o, oh, ow)}")
    g = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1)).reshape(n * oh * ow, o)
    grad_kernels = (g.T @ cols).reshape(kernels.shape)
    grad_cols = g @ kernels.reshape(o, -1)
    padded_shape = (n, c, h + 2 * padding, w + 2 * padding)
    grad_padded = backend.col2im(grad_cols, padded_shape, kh, stride)
    if padding:
        grad_x = grad_padded[:, :, padding:padding + h, padding:padding + w]
        grad_x = np.ascontiguousarray(grad_x)
    else:
        grad_x = grad_padded
    return grad_x, grad_kernels


class Layer:
    """Base layer: stateless shape function plus cached forward/backward."""

    kind = "layer"

    def params(self):
        return []

    def forward(self, x, train=True):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def out_shape(self, in_shape):
        raise NotImplementedError

    def state_arrays(self):
        """(suffix, array) pairs to serialise: parameters plus running stats."""
        return [(p.name, p.value) for p in self.params()]


def uniform_init(rng, shape, fan_in, dtype):
    """Variance-preserving uniform init on +-sqrt(6/fan_in)."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 rng=None, dtype=np.float32):
        dtype = resolve_dtype(dtype)
        rng = rng or np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size ** 2
        self.weight = Parameter(
            uniform_init(rng, (out_channels, in_channels, kernel_size, kernel_size),
                         fan_in, dtype),
            name="weight",
        )
        self._cache = None

    def params(self):
        return [self.weight]

    def out_shape(self, in_shape):
        n, c, h, w = in_shape
        oh, ow = conv2d_output_hw(h, w, self.kernel_size, self.stride, self.padding)
        return (n, self.out_channels, oh, ow)

    def forward(self, x, train=True):
        out, cols = conv2d_forward(x, self.weight.value, self.stride, self.padding,
                                   return_cache=True)
        self._cache = (x.shape, cols)
        return out

    def backward(self, grad_out):
        x_shape, cols = self._cache
        grad_x, grad_w = conv2d_backward(grad_out, x_shape, self.weight.value, cols,
                                         self.stride, self.padding)
        self.weight.grad += grad_w
        return grad_x


class BatchNorm(Layer):
    """Batch normalization over the channel axis of 2-d or 4-d inputs.

    Train mode normalises with biased batch statistics and updates running
    statistics (momentum 0.1, unbiased variance); eval mode applies the
    running statistics. ``affine=False`` applies no learned scale/shift.
    """

    kind = "batchnorm"

    def __init__(self, num_features, eps=1e-5, momentum=0.1, affine=True,
                 dtype=np.float32):
        dtype = resolve_dtype(dtype)
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.affine = affine
        self.gamma = Parameter(np.ones(num_features, dtype=dtype), "gamma") if affine else None
        self.beta = Parameter(np.zeros(num_features, dtype=dtype), "beta") if affine else None
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)
        self.track_running = True
        self._cache = None

    def params(self):
        return [self.gamma, self.beta] if self.affine else []

    def out_shape(self, in_shape):
        return in_shape

    def state_arrays(self):
        items = super().state_arrays()
        items.append(("running_mean", self.running_mean))
        items.append(("running_var", self.running_var))
        return items

    def _axes_and_shape(self, x):
        if x.ndim == 2:
            return (0,), (1, self.num_features)
        if x.ndim == 4:
            return (0, 2, 3), (1, self.num_features, 1, 1)
        raise ValueError(f"batchnorm expects 2-d or 4-d input, got {x.ndim}-d")

    def forward(self, x, train=True):
        axes, bshape = self._axes_and_shape(x)
        if x.shape[1] != self.num_features:
            raise ValueError(f"expected {self.num_features} channels, got {x.shape[1]}")
        if train:
            if x.shape[0] < 2:
                raise ValueError("batchnorm in train mode needs batch size >= 2")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if self.track_running:
                count = x.size // self.num_features
                unbiased = var * (count / (count - 1))
                self.running_mean += self.momentum * (mean - self.running_mean)
                self.running_var += self.momentum * (unbiased - self.running_var)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
        self._cache = (xhat, inv_std, train, bshape, axes)
        if self.affine:
            return xhat * self.gamma.value.reshape(bshape) + self.beta.value.reshape(bshape)
        return xhat

    def backward(self, grad_out):
        xhat, inv_std, train, bshape, axes = self._cache
        if self.affine:
            self.gamma.grad += (grad_out * xhat).sum(axis=axes)
            self.beta.grad += grad_out.sum(axis=axes)
            grad_xhat = grad_out * self.gamma.value.reshape(bshape)
        else:
            grad_xhat = grad_out
        if not train:
            return grad_xhat * inv_std.reshape(bshape)
        count = grad_out.size // self.num_features
        sum_g = grad_xhat.sum(axis=axes, keepdims=True)
        sum_gx = (grad_xhat * xhat).sum(axis=axes, keepdims=True)
        return (inv_std.reshape(bshape) / count) * (
            count * grad_xhat - sum_g - xhat * sum_gx
        )


class ReLU(Layer):
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=True):
        mask = x > 0
        self._mask = mask
        return np.where(mask, x, x.dtype.type(0))

    def backward(self, grad_out):
        return np.where(self._mask, grad_out, grad_out.dtype.type(0))


class AvgPool2d(Layer):
    """Average pooling; the divisor is always window**2 (zero padding counts)."""

    kind = "avgpool"

    def __init__(self, window, stride=None, padding=0):
        self.window = window
        self.stride = stride or window
        self.padding = padding

    def out_shape(self, in_shape):
        n, c, h, w = in_shape
        oh, ow = conv2d_output_hw(h, w, self.window, self.stride, self.padding)
        return (n, c, oh, ow)

    def forward(self, x, train=True):
        n, c, h, w = x.shape
        k = self.window
        cols = backend.im2col(
            _pad_nchw(x, self.padding).reshape(n * c, 1, h + 2 * self.padding,
                                               w + 2 * self.padding),
            k, self.stride,
        )
        oh, ow = conv2d_output_hw(h, w, k, self.stride, self.padding)
        self._in_shape = x.shape
        out = cols.mean(axis=1).reshape(n, c, oh, ow)
        return np.ascontiguousarray(out)

    def backward(self, grad_out):
        n, c, h, w = self._in_shape
        k = self.window
        oh, ow = grad_out.shape[2:]
        g = (grad_out / (k * k)).reshape(n * c * oh * ow, 1)
        grad_cols = np.repeat(g, k * k, axis=1).astype(grad_out.dtype)
        padded = backend.col2im(
            grad_cols,
            (n * c, 1, h + 2 * self.padding, w + 2 * self.padding),
            k, self.stride,
        ).reshape(n, c, h + 2 * self.padding, w + 2 * self.padding)
        p = self.padding
        if p:
            return np.ascontiguousarray(padded[:, :, p:p + h, p:p + w])
        return padded


class UpsampleNearest(Layer):
    """Nearest-neighbour resize to a fixed target spatial size.

    Source pixel for output (i, j) is (floor(i*H/OH), floor(j*W/OW)); the
    backward pass scatter-adds gradients onto their source pixels.
    """

    kind = "upsample_nearest"

    def __init__(self, target_hw):
        self.target_hw = tuple(target_hw)

    def out_shape(self, in_shape):
        n, c, _, _ = in_shape
        return (n, c, *self.target_hw)

    def _index_maps(self, h, w):
        th, tw = self.target_hw
        iy = (np.arange(th) * h) // th
        ix = (np.arange(tw) * w) // tw
        return iy, ix

    def forward(self, x, train=True):
        self._in_shape = x.shape
        iy, ix = self._index_maps(x.shape[2], x.shape[3])
        return np.ascontiguousarray(x[:, :, iy[:, None], ix[None, :]])

    def backward(self, grad_out):
        n, c, h, w = self._in_shape
        iy, ix = self._index_maps(h, w)
        grad_x = np.zeros(self._in_shape, dtype=grad_out.dtype)
        np.add.at(grad_x, (slice(None), slice(None), iy[:, None], ix[None, :]), grad_out)
        return grad_x


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        n = in_shape[0]
        return (n, int(np.prod(in_shape[1:])))

    def forward(self, x, train=True):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._in_shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, bias=True, rng=None, dtype=np.float32):
        dtype = resolve_dtype(dtype)
        rng = rng or np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(
            uniform_init(rng, (in_features, out_features), in_features, dtype), "weight")
        self.bias = Parameter(np.zeros(out_features, dtype=dtype), "bias") if bias else None

    def params(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def out_shape(self, in_shape):
        return (in_shape[0], self.out_features)

    def forward(self, x, train=True):
        self._x = x
        out = x @ self.weight.value
        if self.bias is not None:
            out += self.bias.value
        return out

    def backward(self, grad_out):
        self.weight.grad += self._x.T @ grad_out
        if self.bias is not None:
            self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value.T


class SoftmaxCrossEntropy:
    """Mean softmax cross-entropy over the batch.

    The logits gradient is (softmax(logits) - onehot(labels)) / batch_size.
    """

    kind = "softmax_xent"

    def forward(self, logits, labels):
        labels = np.asarray(labels)
        n, classes = logits.shape
        if labels.shape != (n,):
            raise ValueError(f"labels shape {labels.shape} != ({n},)")
        if labels.min() < 0 or labels.max() >= classes:
            raise ValueError(f"label outside [0, {classes})")
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        self._probs = probs
        self._labels = labels
        nll = -(shifted[np.arange(n), labels] - np.log(exp.sum(axis=1)))
        return float(nll.mean())

    def backward(self):
        probs, labels = self._probs, self._labels
        n = probs.shape[0]
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1
        return grad / n


class Network:
    """An ordered sequence of layers with a softmax cross-entropy head."""

    def __init__(self, layers, loss=None):
        self.layers = list(layers)
        self.loss = loss or SoftmaxCrossEntropy()

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def loss_and_grads(self, x, labels, train=True):
        """Forward + backward; returns (loss, logits). Grads accumulate."""
        logits = self.forward(x, train=train)
        loss = self.loss.forward(logits, labels)
        grad = self.loss.backward()
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return loss, logits

    def predict(self, x):
        """Class indices; np.argmax breaks exact ties toward the lowest index."""
        return np.argmax(self.forward(x, train=False), axis=1)

    def state_items(self):
        """Ordered (name, array) pairs for checkpointing (params + BN stats)."""
        items = []
        for i, layer in enumerate(self.layers):
            for suffix, arr in layer.state_arrays():
                items.append((f"layer{i}.{layer.kind}.{suffix}", arr))
        return items

    def out_shape(self, in_shape):
        for layer in self.layers:
            in_shape = layer.out_shape(in_shape)
        return in_shape
