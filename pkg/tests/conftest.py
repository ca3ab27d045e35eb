import numpy as np
import pytest

from krylov_dre.benchmarks import gen_convdiff2d
from krylov_dre.problem import SolverConfig
from krylov_dre.solver import solve


def random_stable(k, seed, shift=3.0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((k, k)) - shift * np.eye(k)


def dense_a(problem):
    import scipy.sparse as sp

    A = problem.A
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


@pytest.fixture(scope="session")
def convdiff49():
    return gen_convdiff2d(7, seed=7, t_f=1.0)


@pytest.fixture(scope="session")
def config49():
    return SolverConfig(p=2, h=1e-3, tol=1e-10, m_max=20)


@pytest.fixture(scope="session")
def solved49(convdiff49, config49):
    sample_times = np.arange(0.0, 1.0 + 1e-12, 1e-2)
    return solve(convdiff49, config49, sample_times=sample_times)
