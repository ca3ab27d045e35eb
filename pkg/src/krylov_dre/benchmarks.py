"""Benchmark problem generators and Matrix Market ingestion.

Randomness is drawn from numpy's PCG64 via SeedSequence streams spawned in a
fixed, documented order (B, then C, then Z0), so a (family, sizes, seed)
triple reproduces its matrices bitwise across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import DimensionMismatch, ParseError, SingularMassStiffness
from .problem import DREProblem


@dataclass
class BenchmarkSpec:
    """Echo of a generator call, sufficient to rerun it exactly."""

    family: str
    n: int
    s: int
    ell: int
    seed: int
    t_f: float
    params: dict = field(default_factory=dict)


def _streams(seed, count):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def default_f1(x, y):
    return 10.0 * x * y


def default_f2(x, y):
    return np.exp(x * x * y)


def default_g1(x, y):
    return 20.0 * y


def gen_convdiff2d(n0, s=2, ell=2, seed=0, t_f=1.0, f1=None, f2=None, g1=None):
    """2-D convection-diffusion operator on the unit square, n = n0^2.

    A is the 5-point discretization of  Lu = Du - f1 u_x + f2 u_y + g1 u  with
    homogeneous Dirichlet conditions: centered second differences for the
    Laplacian, centered first differences for the convection terms, grid
    spacing 1/(n0+1), coefficients sampled at the interior nodes, unknowns
    ordered x-fastest.  B, C and the rank-2 initial factor Z0 have entries
    uniform on [0, 1] from the seed streams.

    The default coefficients are f1 = 10xy, f2 = exp(x^2 y), g1 = 20y; they
    can be overridden (e.g. zeroed to recover the pure Laplacian, whose
    spectrum is known in closed form and pins the discretization convention).
    """
    if n0 < 2:
        raise ValueError("n0 must be >= 2")
    f1 = default_f1 if f1 is None else f1
    f2 = default_f2 if f2 is None else f2
    g1 = default_g1 if g1 is None else g1
    hg = 1.0 / (n0 + 1)
    n = n0 * n0
    rows, cols, vals = [], [], []

    def node(i, j):
        return j * n0 + i

    for j in range(n0):
        for i in range(n0):
            x, y = (i + 1) * hg, (j + 1) * hg
            k = node(i, j)
            rows.append(k); cols.append(k)
            vals.append(-4.0 / hg**2 + g1(x, y))
            if i + 1 < n0:
                rows.append(k); cols.append(node(i + 1, j))
                vals.append(1.0 / hg**2 - f1(x, y) / (2 * hg))
            if i - 1 >= 0:
                rows.append(k); cols.append(node(i - 1, j))
                vals.append(1.0 / hg**2 + f1(x, y) / (2 * hg))
            if j + 1 < n0:
                rows.append(k); cols.append(node(i, j + 1))
                vals.append(1.0 / hg**2 + f2(x, y) / (2 * hg))
            if j - 1 >= 0:
                rows.append(k); cols.append(node(i, j - 1))
                vals.append(1.0 / hg**2 - f2(x, y) / (2 * hg))

    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    rb, rc, rz = _streams(seed, 3)
    B = rb.uniform(size=(n, ell))
    C = rc.uniform(size=(s, n))
    Z0 = rz.uniform(size=(n, 2))
    return DREProblem(A=A, B=B, C=C, Z0=Z0, t_f=t_f)


def heat1d_matrices(n, alpha):
    """FEM mass and stiffness tridiagonals of the 1-D heat benchmark."""
    ones = np.ones(n - 1)
    M = sp.diags([ones, np.full(n, 4.0), ones], (-1, 0, 1), format="csc") / (6.0 * n)
    K = -(alpha * n) * sp.diags([-ones, np.full(n, 2.0), -ones], (-1, 0, 1), format="csc")
    return M, K


def gen_heat1d_fem(n, s=2, alpha=0.05, dt=0.01, seed=0, t_f=2.0):
    """1-D heat-flow control benchmark via first-order B-spline FEM.

    A = -(M - dt*K)^{-1} M and B = dt (M - dt*K)^{-1} F with tridiagonal M, K;
    A is assembled densely through a single factorization of (M - dt*K).
    F (n-by-s) and C (s-by-n) have uniform [0, 1] entries; ell = s; the
    initial state is X0 = 0 (zero n-by-2 factor).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if alpha <= 0 or dt <= 0:
        raise ValueError("alpha and dt must be positive")
    M, K = heat1d_matrices(n, alpha)
    pencil = (M - dt * K).tocsc()
    try:
        lu = sp.linalg.splu(pencil)
    except RuntimeError as exc:
        raise SingularMassStiffness(str(exc)) from exc
    d = np.abs(lu.U.diagonal())
    if d.min() <= 1e-13 * d.max():
        raise SingularMassStiffness("(M - dt*K) is numerically singular")
    A = -lu.solve(M.toarray())
    rf, rc = _streams(seed, 2)
    F = rf.uniform(size=(n, s))
    C = rc.uniform(size=(s, n))
    B = dt * lu.solve(F)
    Z0 = np.zeros((n, 2))
    return DREProblem(A=A, B=B, C=C, Z0=Z0, t_f=t_f)


def _mmread(path):
    try:
        return scipy.io.mmread(path)
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read Matrix Market file {path}: {exc}") from exc


def _dense_from_mm(path):
    M = _mmread(path)
    if sp.issparse(M):
        M = M.toarray()
    return np.atleast_2d(np.asarray(M, dtype=float))


def load_matrixmarket(path_a, path_b, path_c, path_z0=None, t_f=1.0):
    """Assemble a problem from Matrix Market files (A sparse; B, C, Z0 dense).

    Without a Z0 file the initial state is a zero n-by-1 factor.  Dimension
    conformity is checked; symmetric-tagged files are expanded by the reader.
    """
    A = _mmread(path_a)
    A = A.tocsc() if sp.issparse(A) else sp.csc_matrix(A)
    B = _dense_from_mm(path_b)
    C = _dense_from_mm(path_c)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
    if path_z0 is None:
        Z0 = np.zeros((n, 1))
    else:
        Z0 = _dense_from_mm(path_z0)
        if Z0.shape[0] != n:
            raise DimensionMismatch(f"Z0 has {Z0.shape[0]} rows, expected {n}")
    return DREProblem(A=A, B=B, C=C, Z0=Z0, t_f=t_f)
