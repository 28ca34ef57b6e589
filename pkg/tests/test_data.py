import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsenet.data import (
    CIFAR_RECORD,
    MNIST_MEAN,
    MNIST_STD,
    Dataset,
    batches,
    load_cifar10,
    load_mnist,
    read_cifar_batch,
    read_idx_images,
    read_idx_labels,
    synthetic_separable,
)
from sparsenet.errors import DataError, FormatError
from sparsenet.linalg import make_rng


def idx_images(n, rows=28, cols=28, magic=0x803, fill=None):
    pixels = fill if fill is not None else make_rng(n).integers(0, 256, size=n * rows * cols, dtype=np.uint8)
    return struct.pack(">IIII", magic, n, rows, cols) + bytes(pixels)


def idx_labels(labels, magic=0x801):
    return struct.pack(">II", magic, len(labels)) + bytes(labels)


def write_mnist(d, n_train=6, n_test=4, labels=None):
    d.mkdir(exist_ok=True)
    for prefix, n in (("train", n_train), ("t10k", n_test)):
        (d / f"{prefix}-images-idx3-ubyte").write_bytes(idx_images(n))
        (d / f"{prefix}-labels-idx1-ubyte").write_bytes(idx_labels(labels or [i % 10 for i in range(n)]))
    return d


# --- IDX ---------------------------------------------------------------------------


def test_idx_round_trip(tmp_path):
    pixels = np.arange(2 * 3 * 4, dtype=np.uint8)
    (tmp_path / "img").write_bytes(idx_images(2, 3, 4, fill=pixels))
    assert np.array_equal(read_idx_images(tmp_path / "img"), pixels.reshape(2, 3, 4))
    (tmp_path / "lbl").write_bytes(idx_labels([3, 0, 9]))
    assert read_idx_labels(tmp_path / "lbl").tolist() == [3, 0, 9]


@pytest.mark.parametrize(
    "payload",
    [
        idx_images(2, magic=0x801),
        idx_images(2)[:-1],
        idx_images(2) + b"\0",
        b"\0\0\x08",
    ],
    ids=["magic", "truncated", "trailing", "short-header"],
)
def test_idx_images_errors(tmp_path, payload):
    (tmp_path / "img").write_bytes(payload)
    with pytest.raises(DataError):
        read_idx_images(tmp_path / "img")


@pytest.mark.parametrize(
    "payload",
    [idx_labels([1, 2], magic=0x803), idx_labels([1, 2])[:-1], idx_labels([1, 10])],
    ids=["magic", "truncated", "label-range"],
)
def test_idx_labels_errors(tmp_path, payload):
    (tmp_path / "lbl").write_bytes(payload)
    with pytest.raises(DataError):
        read_idx_labels(tmp_path / "lbl")


def test_data_error_is_format_error():
    assert issubclass(DataError, FormatError)


def test_load_mnist_small_files(tmp_path):
    tr, te = load_mnist(write_mnist(tmp_path / "m"), expect_counts=False)
    assert tr.images.shape == (6, 1, 28, 28) and te.images.shape == (4, 1, 28, 28)
    assert tr.images.dtype == np.float32
    raw = read_idx_images(tmp_path / "m" / "train-images-idx3-ubyte")
    expected = ((raw / np.float32(255) - np.float32(MNIST_MEAN)) / np.float32(MNIST_STD)).astype(np.float32)
    np.testing.assert_allclose(tr.images[:, 0], expected, rtol=1e-6)


def test_load_mnist_count_mismatch(tmp_path):
    with pytest.raises(DataError):
        load_mnist(write_mnist(tmp_path / "m"))


def test_load_mnist_missing_files(tmp_path):
    with pytest.raises(DataError):
        load_mnist(tmp_path)


def test_load_mnist_image_label_disagreement(tmp_path):
    d = write_mnist(tmp_path / "m")
    (d / "t10k-labels-idx1-ubyte").write_bytes(idx_labels([1, 2, 3]))
    with pytest.raises(DataError):
        load_mnist(d, expect_counts=False)


def test_load_mnist_is_pure(tmp_path):
    d = write_mnist(tmp_path / "m")
    a, b = load_mnist(d, expect_counts=False), load_mnist(d, expect_counts=False)
    assert a[0].images.tobytes() == b[0].images.tobytes()


# --- CIFAR ---------------------------------------------------------------------------


def cifar_records(labels, seed=0):
    rng = make_rng(seed)
    out = bytearray()
    for lab in labels:
        out.append(lab)
        out += bytes(rng.integers(0, 256, size=CIFAR_RECORD - 1, dtype=np.uint8))
    return bytes(out)


def test_cifar_single_record(tmp_path):
    raw = cifar_records([7])
    assert len(raw) == 3073
    (tmp_path / "b.bin").write_bytes(raw)
    pixels, labels = read_cifar_batch(tmp_path / "b.bin")
    assert labels.tolist() == [7]
    # R plane first, then G, then B; each 32x32 row-major
    assert pixels.shape == (1, 3, 32, 32)
    assert pixels[0, 1, 0, 0] == raw[1 + 1024]
    assert pixels[0, 2, 31, 31] == raw[-1]


@pytest.mark.parametrize("payload", [b"\0" * 3072, b"", cifar_records([1, 10])], ids=["3072-bytes", "empty", "label-byte"])
def test_cifar_errors(tmp_path, payload):
    (tmp_path / "b.bin").write_bytes(payload)
    with pytest.raises(DataError):
        read_cifar_batch(tmp_path / "b.bin")


def test_load_cifar_small(tmp_path):
    for i in range(1, 6):
        (tmp_path / f"data_batch_{i}.bin").write_bytes(cifar_records([i, i + 1], seed=i))
    (tmp_path / "test_batch.bin").write_bytes(cifar_records([0, 9, 3]))
    tr, te = load_cifar10(tmp_path, expect_counts=False)
    assert tr.images.shape == (10, 3, 32, 32) and len(te) == 3
    assert tr.labels.tolist() == [1, 2, 2, 3, 3, 4, 4, 5, 5, 6]
    with pytest.raises(DataError):
        load_cifar10(tmp_path)


# --- real datasets (skipped when absent) --------------------------------------------------


def test_mnist_canonical(mnist):
    tr, te = mnist
    assert tr.images.shape == (60000, 1, 28, 28) and len(te) == 10000
    assert np.bincount(tr.labels, minlength=10).min() > 5000
    assert np.isfinite(tr.images).all()
    lo, hi = -MNIST_MEAN / MNIST_STD, (1 - MNIST_MEAN) / MNIST_STD
    assert tr.images.min() >= lo - 1e-5 and tr.images.max() <= hi + 1e-5
    # the pinned constants should be close to the training-set statistics
    assert abs(float(tr.images.mean())) < 0.01 and abs(float(tr.images.std()) - 1) < 0.01


def test_cifar_canonical(cifar):
    tr, te = cifar
    assert tr.images.shape == (50000, 3, 32, 32) and len(te) == 10000
    assert np.bincount(tr.labels).tolist() == [5000] * 10
    assert np.bincount(te.labels).tolist() == [1000] * 10
    assert np.isfinite(tr.images).all() and np.abs(tr.images).max() < 3


# --- batching --------------------------------------------------------------------------


def small(n=10):
    return Dataset(np.arange(n, dtype=np.float32)[:, None], np.arange(n) % 10)


def test_batch_sizes_keep_partial():
    assert [len(y) for _, y in batches(small(), 3, make_rng(0))] == [3, 3, 3, 1]


def test_batches_seeded():
    a = [x.ravel().tolist() for x, _ in batches(small(), 4, make_rng(1))]
    b = [x.ravel().tolist() for x, _ in batches(small(), 4, make_rng(1))]
    assert a == b


def test_batch_size_validation():
    with pytest.raises(ValueError):
        list(batches(small(), 0, make_rng(0)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.integers(1, 70), st.integers(0, 2**32 - 1))
def test_batches_cover_each_item_once(n, bs, seed):
    seen = np.concatenate([x.ravel() for x, _ in batches(small(n), bs, make_rng(seed))])
    assert sorted(seen.tolist()) == list(range(n))


def test_dataset_length_mismatch():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.zeros(2))


def test_subset():
    d = small()
    assert len(d.subset(4)) == 4 and d.subset(None) is d and d.subset(100) is d


# --- synthetic ---------------------------------------------------------------------------


def nearest_centroid_accuracy(d):
    centres = np.stack([d.images[d.labels == c].mean(axis=0) for c in np.unique(d.labels)])
    pred = np.argmin(((d.images[:, None, :] - centres[None]) ** 2).sum(axis=-1), axis=1)
    return float(np.mean(pred == d.labels))


def test_synthetic_two_class_separable():
    d = synthetic_separable(1000, 5, 2, make_rng(0))
    assert nearest_centroid_accuracy(d) >= 0.99


@pytest.mark.parametrize("classes, dims", [(2, 1), (3, 2), (10, 5), (10, 20)])
def test_synthetic_centres_far_apart(classes, dims):
    d = synthetic_separable(2000, dims, classes, make_rng(1), sigma=0.5)
    centres = np.stack([d.images[d.labels == c].mean(axis=0) for c in range(classes)])
    gaps = np.linalg.norm(centres[:, None] - centres[None], axis=-1)[~np.eye(classes, dtype=bool)]
    assert gaps.min() >= 6 * 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 500), st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_synthetic_labels_balanced(n, classes, seed):
    d = synthetic_separable(n, 10, classes, make_rng(seed))
    counts = np.bincount(d.labels, minlength=classes)
    assert counts.max() - counts.min() <= 1


def test_synthetic_deterministic_and_shaped():
    a = synthetic_separable(50, 16, 3, make_rng(4), shape=(1, 4, 4))
    b = synthetic_separable(50, 16, 3, make_rng(4), shape=(1, 4, 4))
    assert a.images.shape == (50, 1, 4, 4)
    assert a.images.tobytes() == b.images.tobytes() and np.array_equal(a.labels, b.labels)


def test_synthetic_needs_two_classes():
    with pytest.raises(ValueError):
        synthetic_separable(10, 3, 1, make_rng(0))
