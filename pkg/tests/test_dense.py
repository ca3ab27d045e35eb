import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krylov_dre.dense import (
    care_local_root,
    care_residual,
    lyapunov_residual,
    matrix_exponential,
    newton_kleinman_step,
    solve_care,
    solve_lyapunov,
    truncate_svd,
)
from krylov_dre.errors import MaxIterations, NoStabilizingGuess, SpectrumIncompatible

from conftest import random_stable


# ---------------------------------------------------------------- Lyapunov

def test_lyapunov_scalar():
    X = solve_lyapunov(np.array([[-1.0]]), np.array([[2.0]]))
    assert X[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_lyapunov_commuting_case():
    rng = np.random.default_rng(3)
    S = rng.standard_normal((5, 5))
    S = S + S.T
    X = solve_lyapunov(-np.eye(5), S)
    assert np.allclose(X, S / 2.0, atol=1e-13)


def test_lyapunov_random_stable_psd():
    F = random_stable(8, seed=11, shift=4.0)
    rng = np.random.default_rng(12)
    G = rng.standard_normal((8, 3))
    Q = G @ G.T
    X = solve_lyapunov(F, Q)
    assert lyapunov_residual(F, Q, X) <= 1e-10
    assert np.linalg.eigvalsh(X).min() >= -1e-12 * np.linalg.norm(X, 2)


def test_lyapunov_spectrum_incompatible():
    F = np.diag([1.0, -1.0])  # eigenvalue pair sums to zero
    with pytest.raises(SpectrumIncompatible):
        solve_lyapunov(F, np.eye(2))


# ---------------------------------------------------------------- CARE

def test_care_scalar_examples():
    x = solve_care(np.array([[0.0]]), np.array([[1.0]]), np.array([[1.0]]))
    assert x[0, 0] == pytest.approx(1.0, abs=1e-12)
    x = solve_care(np.array([[1.0]]), np.array([[1.0]]), np.array([[0.0]]))
    assert x[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_care_fixed_point_returns_warm_start():
    A = random_stable(5, seed=4)
    rng = np.random.default_rng(5)
    B = rng.standard_normal((5, 2))
    C = rng.standard_normal((2, 5))
    X = solve_care(A, B, C.T @ C)
    X2, info = solve_care(A, B, C.T @ C, x_init=X, return_info=True)
    assert info["iterations"] == 0
    assert np.allclose(X2, X, atol=1e-12)


def test_care_stabilizing_and_residual():
    A = random_stable(6, seed=21)
    rng = np.random.default_rng(22)
    B = rng.standard_normal((6, 2))
    C = rng.standard_normal((2, 6))
    X = solve_care(A, B, C.T @ C)
    assert care_residual(A, B, C.T @ C, X) <= 1e-12
    cl = A - B @ (B.T @ X)
    assert np.linalg.eigvals(cl).real.max() < 0.0


def test_newton_step_scalar_hand_value():
    # a=0, b=1, q=1 from x0=2: next iterate (x0^2+1)/(2 x0) = 1.25
    x1 = newton_kleinman_step(
        np.array([[0.0]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[2.0]])
    )
    assert x1[0, 0] == pytest.approx(1.25, abs=1e-14)


def test_newton_step_stationary_at_solution():
    A = random_stable(4, seed=8)
    rng = np.random.default_rng(9)
    B = rng.standard_normal((4, 1))
    Q = np.eye(4)
    X = solve_care(A, B, Q)
    X1 = newton_kleinman_step(A, B, Q, X)
    assert np.allclose(X1, X, atol=1e-11)


def test_newton_quadratic_convergence():
    A = random_stable(6, seed=31)
    rng = np.random.default_rng(32)
    B = rng.standard_normal((6, 2))
    C = rng.standard_normal((2, 6))
    Q = C.T @ C
    X_star = solve_care(A, B, Q, tol=1e-14, maxit=60)
    X = np.zeros((6, 6))
    errs = []
    for _ in range(8):
        X = newton_kleinman_step(A, B, Q, X)
        errs.append(np.linalg.norm(X - X_star, "fro"))
    errs = np.array(errs)
    # monotone decrease after the first step and at least one clearly
    # quadratic contraction in the tail
    assert np.all(np.diff(errs[1:5]) < 0)
    tail = errs[errs > 1e-13]
    ratios = tail[1:] / tail[:-1] ** 2
    assert ratios.min() < 10.0


def test_care_no_stabilizing_guess():
    # (A, B) with an uncontrollable unstable mode cannot be stabilized
    A = np.diag([1.0, -2.0])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(NoStabilizingGuess):
        solve_care(A, B, np.eye(2))


def test_care_max_iterations():
    A = random_stable(4, seed=41)
    rng = np.random.default_rng(42)
    B = rng.standard_normal((4, 1))
    with pytest.raises(MaxIterations):
        solve_care(A, B, np.eye(4), maxit=1, tol=1e-15)


def test_care_local_root_matches_strict_solver():
    A = random_stable(5, seed=51)
    rng = np.random.default_rng(52)
    B = rng.standard_normal((5, 2))
    C = rng.standard_normal((2, 5))
    Q = C.T @ C
    X_strict = solve_care(A, B, Q)
    X_local = care_local_root(A, B, Q, x_start=X_strict + 1e-3 * np.eye(5))
    assert np.allclose(X_local, X_strict, atol=1e-9)


def test_care_local_root_no_root_raises():
    # scalar -q y^2 + p y + s = 0 with negative discriminant has no real root
    A = np.array([[-0.5]])     # p = 2a = -1
    B = np.array([[2.0]])      # q = 4
    Q = np.array([[-1.0]])     # s = -1; disc = 1 - 16 < 0
    with pytest.raises(MaxIterations):
        care_local_root(A, B, Q, x_start=np.zeros((1, 1)), maxit=40)


# ---------------------------------------------------------------- expm

def test_expm_zero():
    assert np.allclose(matrix_exponential(np.zeros((3, 3))), np.eye(3))


def test_expm_diagonal():
    E = matrix_exponential(np.diag([1.0, -1.0]))
    assert np.allclose(E, np.diag([np.e, 1.0 / np.e]), rtol=1e-13)


def test_expm_nilpotent():
    M = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert np.allclose(matrix_exponential(M), np.eye(2) + M, atol=1e-15)


# ---------------------------------------------------------------- truncation

def test_truncate_identity():
    f = truncate_svd(np.eye(4), 1e-8)
    assert f.rank == 4
    assert np.allclose(f.sigma, 1.0)


def test_truncate_threshold_cut():
    f = truncate_svd(np.diag([1.0, 1e-12]), 1e-8)
    assert f.rank == 1


def test_truncate_constructed_rank():
    rng = np.random.default_rng(61)
    W = rng.standard_normal((10, 3))
    Y = W @ W.T
    f = truncate_svd(Y, 1e-10)
    assert f.rank == 3
    assert np.linalg.norm(Y - f.reconstruct(), 2) <= 1e-10 * f.sigma[0]


def test_truncate_zero_matrix():
    f = truncate_svd(np.zeros((5, 5)), 1e-8)
    assert f.rank == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(2, 12),
       dtol=st.sampled_from([1e-12, 1e-8, 1e-4, 0.5]))
def test_truncate_reconstruction_property(seed, k, dtol):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((k, k))
    Y = W @ W.T
    f = truncate_svd(Y, dtol)
    sigma_max = np.abs(np.linalg.eigvalsh(Y)).max()
    assert np.linalg.norm(Y - f.reconstruct(), 2) <= dtol * sigma_max * (1 + 1e-12)
    assert np.all(f.sigma >= dtol * sigma_max * (1 - 1e-12)) or f.rank == 0
    # orthonormal columns
    if f.rank:
        assert np.linalg.norm(f.U.T @ f.U - np.eye(f.rank)) <= 1e-12
