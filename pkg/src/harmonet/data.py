"""Dataset ingestion: MNIST IDX and CIFAR-10 binary formats, balanced subsets.

Pixel values are scaled to [0, 1] and standardised with constants computed
once from the full training sets (re-derivable via ``compute_stats`` /
the compute-stats CLI command):

    MNIST:    (x - 0.1307) / 0.3081
    CIFAR-10: per channel, means (0.4914, 0.4822, 0.4465),
              stds  (0.2470, 0.2435, 0.2616)

Subset selection uses the package-pinned splitmix64 stream with Fisher-Yates
shuffling so the same (dataset, size, seed) picks identical samples on every
platform.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

MNIST_IMAGE_MAGIC = 0x00000803
MNIST_LABEL_MAGIC = 0x00000801
MNIST_MEAN, MNIST_STD = 0.1307, 0.3081
CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)
CIFAR_RECORD = 3073  # 1 label byte + 3*32*32 pixels

DATA_DIR_ENV = "HARM_DATA_DIR"


class DataFormatError(ValueError):
    """Raised for malformed dataset files."""


@dataclass
class LabeledDataset:
    images: np.ndarray  # (B, C, H, W) float32
    labels: np.ndarray  # (B,) int64
    class_count: int
    name: str

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataFormatError("image/label count mismatch")
        if self.images.shape[0] == 0:
            raise DataFormatError("empty dataset")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise DataFormatError("label outside class range")

    def __len__(self):
        return self.images.shape[0]


# -- splitmix64: the repo's pinned cross-platform PRNG ----------------------


class SplitMix64:
    """splitmix64 (Steele et al.): 64-bit state, gamma 0x9E3779B97F4A7C15."""

    MASK = (1 << 64) - 1

    def __init__(self, seed):
        self.state = seed & self.MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def below(self, bound):
        """Uniform integer in [0, bound) via modulo (documented, reproducible)."""
        return self.next_u64() % bound

    def shuffle(self, items):
        """In-place Fisher-Yates using this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


# -- MNIST IDX ---------------------------------------------------------------


def _read_exact(f, count, path):
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(f"{path}: truncated file")
    return data


def load_mnist_idx(images_path, labels_path, normalize=True):
    """Parse the big-endian IDX pair into a normalised LabeledDataset."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">4i", _read_exact(f, 16, images_path))
        if magic != MNIST_IMAGE_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, "
                f"expected 0x{MNIST_IMAGE_MAGIC:08x}")
        pixels = np.frombuffer(_read_exact(f, count * rows * cols, images_path),
                               dtype=np.uint8)
    with open(labels_path, "rb") as f:
        magic, label_count = struct.unpack(">2i", _read_exact(f, 8, labels_path))
        if magic != MNIST_LABEL_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, "
                f"expected 0x{MNIST_LABEL_MAGIC:08x}")
        labels = np.frombuffer(_read_exact(f, label_count, labels_path), dtype=np.uint8)
    if count != label_count:
        raise DataFormatError(
            f"image count {count} != label count {label_count}")
    images = pixels.reshape(count, 1, rows, cols).astype(np.float32) / 255.0
    if normalize:
        images = (images - MNIST_MEAN) / MNIST_STD
    return LabeledDataset(images, labels.astype(np.int64), 10, "mnist")


def write_mnist_idx(images_path, labels_path, images_u8, labels):
    """Write an IDX pair (images as uint8 (B, H, W)); test/round-trip helper."""
    b, h, w = images_u8.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4i", MNIST_IMAGE_MAGIC, b, h, w))
        f.write(np.ascontiguousarray(images_u8, dtype=np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2i", MNIST_LABEL_MAGIC, b))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


# -- CIFAR-10 binary ---------------------------------------------------------


def load_cifar10_bin(batch_paths, normalize=True):
    """Parse CIFAR-10 binary batches (3073-byte records, channel-major pixels)."""
    images = []
    labels = []
    for path in batch_paths:
        raw = np.fromfile(path, dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD != 0:
            raise DataFormatError(
                f"{path}: length {raw.size} not a multiple of {CIFAR_RECORD}")
        records = raw.reshape(-1, CIFAR_RECORD)
        batch_labels = records[:, 0]
        if batch_labels.max() > 9:
            raise DataFormatError(f"{path}: label > 9")
        labels.append(batch_labels)
        images.append(records[:, 1:].reshape(-1, 3, 32, 32))
    images = np.concatenate(images).astype(np.float32) / 255.0
    labels = np.concatenate(labels).astype(np.int64)
    if normalize:
        mean = np.array(CIFAR_MEAN, dtype=np.float32).reshape(1, 3, 1, 1)
        std = np.array(CIFAR_STD, dtype=np.float32).reshape(1, 3, 1, 1)
        images = (images - mean) / std
    return LabeledDataset(images, labels, 10, "cifar10")


def write_cifar10_bin(path, images_u8, labels):
    """Write one CIFAR-10 binary batch from uint8 (B, 3, 32, 32); test helper."""
    b = images_u8.shape[0]
    records = np.empty((b, CIFAR_RECORD), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = np.ascontiguousarray(images_u8, dtype=np.uint8).reshape(b, -1)
    records.tofile(path)


# -- subsets and statistics ---------------------------------------------------


def balanced_subset(ds, size, seed):
    """Class-balanced random subset: size/class_count samples of each class.

    Draws per class without replacement, then shuffles the selection; fully
    determined by (dataset order, size, seed) via the splitmix64 stream.
    """
    if size % ds.class_count != 0:
        raise ValueError(f"size {size} not divisible by {ds.class_count} classes")
    per_class = size // ds.class_count
    stream = SplitMix64(seed)
    chosen = []
    for cls in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == cls).tolist()
        if len(idx) < per_class:
            raise ValueError(f"class {cls} has {len(idx)} samples, need {per_class}")
        stream.shuffle(idx)
        chosen.extend(idx[:per_class])
    stream.shuffle(chosen)
    chosen = np.array(chosen)
    return LabeledDataset(ds.images[chosen], ds.labels[chosen], ds.class_count,
                          f"{ds.name}-{size}")


def compute_stats(ds_raw):
    """Per-channel mean/std of a dataset loaded with normalize=False.

    This is the oracle for the frozen normalisation constants above.
    """
    axes = (0, 2, 3)
    mean = ds_raw.images.mean(axis=axes, dtype=np.float64)
    std = ds_raw.images.std(axis=axes, dtype=np.float64)
    return mean, std


# -- standard file layout ------------------------------------------------------

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILES = ["test_batch.bin"]


def default_data_dir():
    return os.environ.get(DATA_DIR_ENV, "data")


def mnist_paths(data_dir, split):
    images, labels = MNIST_FILES[split]
    base = os.path.join(data_dir, "mnist")
    return os.path.join(base, images), os.path.join(base, labels)


def cifar10_paths(data_dir, split):
    names = CIFAR_TRAIN_FILES if split == "train" else CIFAR_TEST_FILES
    base = os.path.join(data_dir, "cifar-10-batches-bin")
    return [os.path.join(base, name) for name in names]


def load_mnist(data_dir, split, normalize=True):
    return load_mnist_idx(*mnist_paths(data_dir, split), normalize=normalize)


def load_cifar10(data_dir, split, normalize=True):
    return load_cifar10_bin(cifar10_paths(data_dir, split), normalize=normalize)
