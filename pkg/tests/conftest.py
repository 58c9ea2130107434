import numpy as np
import pytest

from sdmpdf.basis import FOURIER, HERMITE, structure_table


@pytest.fixture(scope="session")
def torus_table():
    return structure_table(FOURIER, 2, 2)


@pytest.fixture(scope="session")
def circle_table():
    return structure_table(FOURIER, 1, 1)


@pytest.fixture(scope="session")
def hermite_table():
    return structure_table(HERMITE, 1, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, N, trace_zero=False):
    X = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    X = X + X.conj().T
    if trace_zero:
        X -= np.trace(X) / N * np.eye(N)
    return X


ACCEPTANCE_LINES = []


def record_criterion(label, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
