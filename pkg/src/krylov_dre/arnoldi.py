"""Extended block Arnoldi process for the transposed pair (A^T, C^T).

Builds an orthonormal basis of K^e_m(A^T, C^T) = Range[C^T, A^{-T}C^T,
A^T C^T, A^{-2T}C^T, ...] block by block, together with the projected matrix
T = V^T A^T V.  The projected matrix is accumulated directly from the inner
products V_i^T (A^T V_j) formed during expansion, so the block Hessenberg
structure holds exactly: blocks below the first subdiagonal are never written.

After m expansions the Arnoldi relation

    A^T V_m = V_m T_m + V_{m+1} T_{m+1,m} E_m^T

holds to working accuracy, with V_m the first 2ms basis columns.
"""

from __future__ import annotations

import numpy as np

from .errors import Breakdown, RankDeficientSeed

# Relative threshold on QR diagonals below which a block is declared rank
# deficient (seed -> RankDeficientSeed, expansion -> Breakdown).
RANK_RTOL = 1e-12


class ExtendedKrylovBasis:
    """Orthonormal block basis of K^e(A^T, C^T) plus projected matrices.

    Attributes
    ----------
    V : stacked orthonormal blocks, n-by-(blocks*2s).
    T : projected matrix V^T A^T V, filled column-block by column-block; shape
        (blocks*2s)-by-(order*2s).
    H : raw Gram-Schmidt coefficients (same layout as T).
    Lambda11 : s-by-s upper-triangular factor of the seed QR, with
        C^T = V_1^(1) Lambda11.
    m : number of completed expansions.
    breakdown : True once an expansion found the subspace invariant; the basis
        then spans an A^T-invariant subspace and the last projected column is
        exact with an empty coupling block.
    """

    def __init__(self, V, Lam, s):
        self.V = V
        self.Lambda = Lam
        self.Lambda11 = Lam[:s, :s]
        self.s = s
        self.w = 2 * s
        self.m = 0
        self.breakdown = False
        # orthogonal remainder of A^T V_last at breakdown, for honest residuals
        self.residual_block = None
        self.residual_scale = 0.0
        self.B_m = None  # last projection V_m^T B, cached by projected_matrices
        self.T = np.zeros((self.w, 0))
        self.H = np.zeros((self.w, 0))

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def blocks(self):
        return self.V.shape[1] // self.w

    @property
    def order(self):
        """Largest m for which T_m (and, unless breakdown, T_{m+1,m}) is available."""
        return self.m + 1 if self.breakdown else self.m

    def block(self, j):
        """The (j+1)-th basis block, n-by-2s (0-indexed)."""
        return self.V[:, j * self.w : (j + 1) * self.w]

    def basis_matrix(self, m=None):
        m = self.order if m is None else m
        return self.V[:, : m * self.w]

    def t_square(self, m=None):
        m = self.order if m is None else m
        return self.T[: m * self.w, : m * self.w]

    def t_coupling(self, m=None):
        """T_{m+1,m}, the 2s-by-2s coupling block; None after breakdown."""
        m = self.order if m is None else m
        if self.breakdown and m >= self.order:
            return None
        return self.T[m * self.w : (m + 1) * self.w, (m - 1) * self.w : m * self.w]


def seed(handle, C) -> ExtendedKrylovBasis:
    """Start the process: QR of [C^T, A^{-T}C^T] gives V_1 and Lambda.

    Raises RankDeficientSeed when the R factor has a relatively tiny diagonal
    entry (C^T rank deficient, or A^{-T}C^T parallel to C^T).
    """
    Ct = np.ascontiguousarray(C.T, dtype=float)
    U = np.hstack([Ct, handle.solve_t(Ct)])
    Q, R = np.linalg.qr(U)
    if np.abs(np.diag(R)).min() <= RANK_RTOL * np.linalg.norm(U, 2):
        raise RankDeficientSeed(
            "QR of [C^T, A^{-T}C^T] is numerically rank deficient"
        )
    return ExtendedKrylovBasis(Q, R, C.shape[0])


def expand(basis: ExtendedKrylovBasis, handle) -> ExtendedKrylovBasis:
    """Append the next block and the corresponding projected column.

    The candidate block is [A^T V_m^(1), A^{-T} V_m^(2)], orthogonalized by
    block Gram-Schmidt with one full reorthogonalization pass (the residual
    stop test silently degrades if orthonormality drifts, so two passes are
    always performed).  On rank deficiency the projected matrix is completed
    to square, the breakdown flag is set and Breakdown is raised; the caller
    should accept the current basis, which spans an invariant subspace.
    """
    if basis.breakdown:
        raise Breakdown("cannot expand after breakdown")
    s, w = basis.s, basis.w
    j = basis.m
    Vj = basis.block(j)
    AtV1 = handle.apply_t(Vj[:, :s])
    AtV2 = handle.apply_t(Vj[:, s:])
    AtVj = np.hstack([AtV1, AtV2])
    W = handle.solve_t(np.ascontiguousarray(Vj[:, s:]))

    cand = np.hstack([AtV1, W])
    cand_scale = np.linalg.norm(cand, 2)
    c1 = basis.V.T @ cand
    cand = cand - basis.V @ c1
    c2 = basis.V.T @ cand
    cand = cand - basis.V @ c2
    Hcol = c1 + c2

    Q, R = np.linalg.qr(cand)
    nb = basis.blocks

    if np.abs(np.diag(R)).min() <= RANK_RTOL * max(cand_scale, 1e-300):
        # Rank-deficient block: the subspace is (numerically) invariant.  The
        # last projected column is completed from A^T V_j and the part of
        # A^T V_j outside the span is kept so the residual estimate stays
        # honest even when the deficiency is only partial.
        coef = basis.V.T @ AtVj
        T = np.zeros((nb * w, nb * w))
        T[:, : j * w] = basis.T[: nb * w, :]
        T[:, j * w :] = coef
        basis.T = T
        H = np.zeros((nb * w, nb * w))
        H[:, : j * w] = basis.H[: nb * w, :]
        H[: nb * w, j * w :] = Hcol
        basis.H = H
        perp = AtVj - basis.V @ coef
        perp = perp - basis.V @ (basis.V.T @ perp)
        basis.residual_block = perp
        basis.residual_scale = float(np.linalg.norm(AtVj, 2))
        basis.breakdown = True
        raise Breakdown(f"rank-deficient block at expansion {j + 1}")

    basis.V = np.hstack([basis.V, Q])
    T = np.zeros(((nb + 1) * w, (j + 1) * w))
    T[: nb * w, : j * w] = basis.T
    T[:, j * w :] = basis.V.T @ AtVj
    basis.T = T
    H = np.zeros(((nb + 1) * w, (j + 1) * w))
    H[: nb * w, : j * w] = basis.H
    H[: nb * w, j * w :] = Hcol
    H[nb * w :, j * w :] = R
    basis.H = H
    basis.m += 1
    return basis


def projected_matrices(basis: ExtendedKrylovBasis, B):
    """Return (T_m, B_m, C_m) for the current order m.

    B_m = V_m^T B is formed by multiplication; C_m = [Lambda11^T, 0] is
    assembled from the seed QR factor, never recomputed as V_m^T C^T.
    """
    m = basis.order
    if m < 1:
        raise ValueError("projected_matrices requires at least one expansion")
    k = m * basis.w
    T_m = basis.t_square(m).copy()
    B_m = basis.basis_matrix(m).T @ B
    C_m = np.zeros((basis.s, k))
    C_m[:, : basis.s] = basis.Lambda11.T
    basis.B_m = B_m
    return T_m, B_m, C_m


def orthonormality_deviation(basis: ExtendedKrylovBasis):
    """Frobenius norm of V^T V - I over all stored blocks."""
    G = basis.V.T @ basis.V
    return float(np.linalg.norm(G - np.eye(G.shape[0]), "fro"))


def relation_residual(basis: ExtendedKrylovBasis, handle):
    """Relative deviation of A^T V_m = V_m T_m + V_{m+1} T_{m+1,m} E_m^T.

    Applies the operator once more per call; intended for diagnostics and
    tests, not for the solver hot path.
    """
    m = basis.order
    V_m = basis.basis_matrix(m)
    lhs = handle.apply_t(V_m)
    rhs = V_m @ basis.t_square(m)
    T_sub = basis.t_coupling(m)
    if T_sub is not None:
        rhs = rhs.copy()
        rhs[:, -basis.w :] += basis.block(m) @ T_sub
    return float(np.linalg.norm(lhs - rhs, "fro") / max(np.linalg.norm(lhs, "fro"), 1e-300))


def diagnostics_row(basis: ExtendedKrylovBasis, handle):
    """(m, orthonormality deviation, relation residual) for CSV dumps."""
    return basis.order, orthonormality_deviation(basis), relation_residual(basis, handle)


def diagnostics_history(basis: ExtendedKrylovBasis, handle):
    """One diagnostics row per completed iteration of a finished basis.

    Row m reports the orthonormality deviation of all blocks present after
    expansion m together with the relation residual at order m.  Costs one
    extra operator sweep per row; intended for CSV dumps.
    """
    rows = []
    w = basis.w
    cols = basis.V.shape[1]
    for m in range(1, basis.order + 1):
        Vext = basis.V[:, : min((m + 1) * w, cols)]
        G = Vext.T @ Vext
        dev = float(np.linalg.norm(G - np.eye(G.shape[0]), "fro"))
        V_m = basis.V[:, : m * w]
        lhs = handle.apply_t(V_m)
        rhs = V_m @ basis.T[: m * w, : m * w]
        if (m + 1) * w <= cols:
            T_sub = basis.T[m * w : (m + 1) * w, (m - 1) * w : m * w]
            rhs[:, -w:] += basis.block(m) @ T_sub
        rel = float(np.linalg.norm(lhs - rhs, "fro")
                    / max(np.linalg.norm(lhs, "fro"), 1e-300))
        rows.append((m, dev, rel))
    return rows
