import numpy as np
import pytest

from supcfa.dataset import Dataset, SyntheticSpec, generate_synthetic
from supcfa.tensor import random_orthonormal

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def noiseless_small():
    spec = SyntheticSpec(
        n=120, d_image=12, d_text=10, num_classes=3, shared_dim=4, noise_sigma=0.0, seed=3
    )
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def noisy_small():
    spec = SyntheticSpec(
        n=90, d_image=9, d_text=7, num_classes=3, shared_dim=3, noise_sigma=0.3, seed=11
    )
    return generate_synthetic(spec)


def random_dataset(rng, n, d_image, d_text, m):
    classes = np.arange(n) % m
    return Dataset(
        rng.standard_normal((n, d_image)), rng.standard_normal((n, d_text)), classes, m
    )


def random_pairs(d_image, d_text, d, count, seed=0):
    return [
        (random_orthonormal(d_image, d, seed + 2 * k), random_orthonormal(d_text, d, seed + 2 * k + 1))
        for k in range(count)
    ]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
