import numpy as np
import pytest

from riskg.channel import CovarianceSet
from riskg.config import SystemConfig


def rand_psd(rng, n, scale=1.0, rank=None):
    r = n if rank is None else rank
    A = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    return scale * (A @ A.conj().T) / r


def rand_covs(rng, K=2, M=2, N=2, L=1, direct=1.0, cross=0.3, cascade=0.5):
    """Random Hermitian PSD covariances; own links scaled by ``direct``, others by ``cross``."""
    R_d = np.array([[rand_psd(rng, M, direct if i == j else cross) for j in range(K)]
                    for i in range(K)])
    R_r = np.array([[rand_psd(rng, M * N * L, cascade) for j in range(K)] for i in range(K)])
    return CovarianceSet(R_d, R_r, N, L)


def rand_precoders(rng, K, M_e, M, P_A=1.0):
    out = []
    for _ in range(K):
        P = rng.standard_normal((M_e, M)) + 1j * rng.standard_normal((M_e, M))
        out.append(P * np.sqrt(P_A) / np.linalg.norm(P))
    return out


def rand_phases(rng, n):
    return np.exp(2j * np.pi * rng.random(n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_instance(rng):
    cfg = SystemConfig(K=2, M=2, M_e=2, N=2, L=1, P_A=2.0)
    covs = rand_covs(rng)
    P = rand_precoders(rng, 2, 2, 2, 2.0)
    v = rand_phases(rng, 2)
    return cfg, covs, P, v


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
