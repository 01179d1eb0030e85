import numpy as np
import pytest


def ginibre(rng, n, m=None):
    m = n if m is None else m
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def random_psd(rng, n, rank=None):
    G = ginibre(rng, n, rank)
    M = G @ G.conj().T
    return 0.5 * (M + M.conj().T)


def random_pd(rng, n, shift=0.2):
    return random_psd(rng, n) + shift * np.eye(n)


def random_hermitian(rng, n):
    G = ginibre(rng, n)
    return 0.5 * (G + G.conj().T)


def haar(rng, n):
    Q, R = np.linalg.qr(ginibre(rng, n))
    return Q * (np.diagonal(R) / np.abs(np.diagonal(R)))


@pytest.fixture
def rng():
    return np.random.default_rng(20160726)


# filled by test_acceptance; printed once at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
