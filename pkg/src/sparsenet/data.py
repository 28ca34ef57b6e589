"""Dataset loaders (MNIST IDX, CIFAR-10 binary), batching and synthetic data."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

N_CLASSES = 10

# standardisation constants, applied after scaling pixels to [0, 1]
MNIST_MEAN, MNIST_STD = 0.1307, 0.3081
CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", 60000),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", 10000),
}
CIFAR_TRAIN = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST = ["test_batch.bin"]
CIFAR_RECORD = 3073


@dataclass(eq=False)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def subset(self, n: int | None) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n], self.name)

    def astype(self, dtype) -> "Dataset":
        return Dataset(self.images.astype(dtype, copy=False), self.labels, self.name)


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError as exc:
        raise DataError(f"{path}: file not found") from exc


def _find(directory: Path, name: str) -> Path:
    # accept the common "t10k-images.idx3-ubyte" spelling too
    for candidate in (name, name.replace("-idx", ".idx")):
        if (directory / candidate).exists():
            return directory / candidate
    return directory / name


def read_idx_images(path) -> np.ndarray:
    path = Path(path)
    raw = _read(path)
    if len(raw) < 16:
        raise DataError(f"{path}: truncated IDX header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != 0x00000803:
        raise DataError(f"{path}: bad magic 0x{magic:08x}, expected 0x00000803")
    if len(raw) != 16 + n * rows * cols:
        raise DataError(f"{path}: expected {n * rows * cols} pixel bytes, found {len(raw) - 16}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    raw = _read(path)
    if len(raw) < 8:
        raise DataError(f"{path}: truncated IDX header")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != 0x00000801:
        raise DataError(f"{path}: bad magic 0x{magic:08x}, expected 0x00000801")
    if len(raw) != 8 + n:
        raise DataError(f"{path}: expected {n} label bytes, found {len(raw) - 8}")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size and labels.max() >= N_CLASSES:
        raise DataError(f"{path}: label {int(labels.max())} outside [0, {N_CLASSES})")
    return labels


def normalize_mnist(pixels: np.ndarray, dtype=np.float32) -> np.ndarray:
    x = pixels.astype(np.float32) / 255.0
    return ((x - MNIST_MEAN) / MNIST_STD).astype(dtype, copy=False)


def normalize_cifar(pixels: np.ndarray, dtype=np.float32) -> np.ndarray:
    x = pixels.astype(np.float32) / 255.0
    mean = np.asarray(CIFAR_MEAN, dtype=np.float32)[:, None, None]
    std = np.asarray(CIFAR_STD, dtype=np.float32)[:, None, None]
    return ((x - mean) / std).astype(dtype, copy=False)


def load_mnist(directory, dtype=np.float32, expect_counts: bool = True) -> tuple[Dataset, Dataset]:
    """Load the train/test splits as (N, 1, 28, 28) standardised images."""
    directory = Path(directory)
    out = []
    for split, (img_name, lbl_name, count) in MNIST_FILES.items():
        images = read_idx_images(_find(directory, img_name))
        labels = read_idx_labels(_find(directory, lbl_name))
        if len(images) != len(labels):
            raise DataError(f"{split}: {len(images)} images but {len(labels)} labels")
        if expect_counts and len(images) != count:
            raise DataError(f"{split}: expected {count} examples, found {len(images)}")
        out.append(Dataset(normalize_mnist(images[:, None], dtype), labels, f"mnist-{split}"))
    return out[0], out[1]


def read_cifar_batch(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    raw = _read(path)
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise DataError(f"{path}: size {len(raw)} is not a positive multiple of {CIFAR_RECORD}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0]
    if labels.max() >= N_CLASSES:
        raise DataError(f"{path}: label byte {int(labels.max())} outside [0, {N_CLASSES})")
    return rec[:, 1:].reshape(-1, 3, 32, 32), labels


def load_cifar10(directory, dtype=np.float32, expect_counts: bool = True) -> tuple[Dataset, Dataset]:
    directory = Path(directory)
    out = []
    for split, files, count in (("train", CIFAR_TRAIN, 50000), ("test", CIFAR_TEST, 10000)):
        parts = [read_cifar_batch(directory / f) for f in files]
        pixels = np.concatenate([p for p, _ in parts])
        labels = np.concatenate([l for _, l in parts])
        if expect_counts and len(labels) != count:
            raise DataError(f"{split}: expected {count} records, found {len(labels)}")
        out.append(Dataset(normalize_cifar(pixels, dtype), labels, f"cifar10-{split}"))
    return out[0], out[1]


def batches(d: Dataset, batch_size: int, rng: np.random.Generator):
    """One epoch of shuffled minibatches; the last partial batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(len(d))
    for start in range(0, len(d), batch_size):
        idx = order[start : start + batch_size]
        yield d.images[idx], d.labels[idx]


def synthetic_separable(n: int, dims: int, classes: int, rng: np.random.Generator, *, sigma: float = 1.0, shape=None, dtype=np.float32) -> Dataset:
    """Gaussian blobs whose centres sit ``8 * sigma`` apart on scaled basis vectors.

    Centre ``c`` is ``(8 / sqrt(2)) * sigma * e_c`` (classes beyond ``dims``
    wrap onto negative axes), so every pair of centres is at least ``8 sigma``
    apart. Labels cycle through the classes, keeping counts balanced within one.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if dims < (classes + 1) // 2:
        raise ValueError(f"{classes} classes need at least {(classes + 1) // 2} dims")
    scale = 8.0 * sigma / np.sqrt(2.0)
    centres = np.zeros((classes, dims))
    for c in range(classes):
        axis, sign = (c, 1.0) if c < dims else (c - dims, -1.0)
        centres[c, axis] = sign * scale
    labels = np.arange(n) % classes
    labels = labels[rng.permutation(n)]
    x = centres[labels] + rng.normal(0.0, sigma, size=(n, dims))
    x = x.astype(dtype)
    if shape is not None:
        x = x.reshape((n,) + tuple(shape))
    return Dataset(x, labels, "synthetic")
