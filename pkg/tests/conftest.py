import numpy as np
import pytest

from dppcluster.kernel import SymmetricDense, estimate_bandwidth, rbf_kernel


def random_psd(n, rng, rank=None, scale=1.0):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank))
    return scale * (G @ G.T) / rank


def blob_data(rng, n_per=20, centers=((0.0, 0.0), (6.0, 6.0)), sd=0.3):
    X = np.vstack([np.asarray(c) + sd * rng.standard_normal((n_per, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return X, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_kernel(rng):
    X = rng.standard_normal((60, 3))
    return X, rbf_kernel(X, estimate_bandwidth(X))


def packed(M):
    return SymmetricDense.from_dense(M)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:].rstrip(":"))):
            terminalreporter.write_line(line)
