"""Signed low-rank factors X ~ Z diag(signs) Z^T and factored norm arithmetic.

Used by the baseline time stepper, whose Newton iterates are differences of
PSD factors, and for forming norms of (differences of) factored matrices
without ever assembling an n-by-n product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SignedFactor:
    """X ~ Z @ diag(signs) @ Z.T with signs in {-1.0, +1.0}."""

    Z: np.ndarray
    signs: np.ndarray

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((n, 0)), np.zeros(0))

    @classmethod
    def from_psd(cls, Z):
        return cls(Z, np.ones(Z.shape[1]))

    @property
    def rank(self):
        return self.Z.shape[1]

    def to_dense(self):
        return (self.Z * self.signs) @ self.Z.T

    def apply(self, V):
        """X @ V without forming X."""
        return self.Z @ (self.signs[:, None] * (self.Z.T @ V))

    def frobenius(self):
        return signed_diff_fro(self, None)

    def compress(self, dtol):
        """Column compression: minimal rank keeping |eigenvalues| > dtol * max.

        A thin QR of Z reduces the problem to the eigendecomposition of the
        small core R diag(signs) R^T.
        """
        if self.rank == 0:
            return SignedFactor(self.Z.copy(), self.signs.copy())
        Q, R = np.linalg.qr(self.Z)
        core = 0.5 * ((R * self.signs) @ R.T + R @ (self.signs[:, None] * R.T))
        lam, W = np.linalg.eigh(core)
        order = np.argsort(np.abs(lam))[::-1]
        lam, W = lam[order], W[:, order]
        amax = np.abs(lam[0]) if lam.size else 0.0
        keep = np.abs(lam) > dtol * amax if amax > 0.0 else np.zeros(lam.shape, bool)
        lam, W = lam[keep], W[:, keep]
        Z = Q @ (W * np.sqrt(np.abs(lam)))
        return SignedFactor(Z, np.sign(lam))

    def psd_part(self, dtol):
        """Projection onto the PSD cone, returned as a plain factor Z (X ~ Z Z^T)."""
        if self.rank == 0:
            return self.Z.copy()
        Q, R = np.linalg.qr(self.Z)
        core = 0.5 * ((R * self.signs) @ R.T + R @ (self.signs[:, None] * R.T))
        lam, W = np.linalg.eigh(core)
        lam, W = lam[::-1], W[:, ::-1]
        lmax = max(lam[0], 0.0) if lam.size else 0.0
        keep = lam > dtol * lmax if lmax > 0.0 else np.zeros(lam.shape, bool)
        return Q @ (W[:, keep] * np.sqrt(lam[keep]))


def signed_diff_fro(f1: SignedFactor, f2: SignedFactor | None):
    """||X1 - X2||_F from factors, without forming an n-by-n matrix.

    A thin QR of the stacked columns M = [Z1, Z2] reduces the difference to
    the small symmetric core R diag(signs1, -signs2) R^T, whose eigenvalues
    give the norm.  Going through the core (rather than trace identities on
    the Gram matrix) keeps the cancellation error at the eps * ||X|| level,
    so near-identical factors still resolve.
    """
    if f2 is None or f2.rank == 0:
        M, d = f1.Z, f1.signs
    elif f1.rank == 0:
        M, d = f2.Z, f2.signs
    else:
        M = np.hstack([f1.Z, f2.Z])
        d = np.concatenate([f1.signs, -f2.signs])
    if M.shape[1] == 0:
        return 0.0
    R = np.linalg.qr(M, mode="r")
    core = (R * d) @ R.T
    lam = np.linalg.eigvalsh(0.5 * (core + core.T))
    return float(np.sqrt(np.sum(lam**2)))
