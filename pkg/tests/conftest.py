import numpy as np
import pytest

from mdsc.embedding_io import split
from mdsc.synthgen import SyntheticSpec, generate

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth():
    """K=3 paired dataset, quick to train on."""
    return generate(SyntheticSpec(K=3, latent_dim=6, c_M=8, c_A=7, n_per_class=12, noise_sigma=0.05, seed=3))


@pytest.fixture(scope="session")
def benchmark_data():
    """The acceptance benchmark: K=10 synthetic styles with an 80/20 split."""
    ds, gt = generate(SyntheticSpec(K=10, latent_dim=16, c_M=32, c_A=24, n_per_class=100, noise_sigma=0.05, seed=0))
    train, val = split(ds, 0.8, seed=0)
    return ds, gt, train, val


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
