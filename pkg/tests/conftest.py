import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA_ROOT = Path(os.environ.get("SPARSENET_DATA", "/root/data"))
MNIST_DIR = Path(os.environ.get("SPARSENET_MNIST", DATA_ROOT / "mnist"))
CIFAR_DIR = Path(os.environ.get("SPARSENET_CIFAR", DATA_ROOT / "cifar-10-batches-bin"))


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (trains on MNIST/CIFAR-10)")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])


@pytest.fixture(scope="session")
def mnist_dir():
    if not (MNIST_DIR / "train-images-idx3-ubyte").exists():
        pytest.skip(f"MNIST not found under {MNIST_DIR} (set SPARSENET_MNIST)")
    return MNIST_DIR


@pytest.fixture(scope="session")
def cifar_dir():
    if not (CIFAR_DIR / "test_batch.bin").exists():
        pytest.skip(f"CIFAR-10 not found under {CIFAR_DIR} (set SPARSENET_CIFAR)")
    return CIFAR_DIR


@pytest.fixture(scope="session")
def mnist(mnist_dir):
    from sparsenet.data import load_mnist

    return load_mnist(mnist_dir)


@pytest.fixture(scope="session")
def cifar(cifar_dir):
    from sparsenet.data import load_cifar10

    return load_cifar10(cifar_dir)
