import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> np.ndarray:
    X = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return X + X.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
