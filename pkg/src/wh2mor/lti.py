"""Continuous-time LTI state-space systems and unweighted H2 machinery.

A system is the quadruple (A, B, C, D) with transfer function
G(s) = C (sI - A)^{-1} B + D.  Realizations are presumed minimal; inputs
with repeated or defective poles surface as DefectiveMatrix from the
spectral decomposition.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    InfiniteNorm,
    NonStableSystem,
    PoleHit,
)


class StateSpace:
    """Real state-space realization of G(s) = C (sI - A)^{-1} B + D.

    Parameters
    ----------
    A, B, C : array_like
        State, input, and output maps with shapes (n, n), (n, m), (p, n).
    D : array_like, optional
        Feedthrough, shape (p, m).  Defaults to zero.
    """

    def __init__(self, A, B, C, D=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise DimensionMismatch(f"B has {self.B.shape[0]} rows, expected {n}")
        if self.C.shape[1] != n:
            raise DimensionMismatch(f"C has {self.C.shape[1]} columns, expected {n}")
        if D is None:
            D = np.zeros((self.C.shape[0], self.B.shape[1]))
        self.D = np.atleast_2d(np.asarray(D, dtype=float))
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise DimensionMismatch(
                f"D must be {self.C.shape[0]}x{self.B.shape[1]}, got {self.D.shape}"
            )
        for name, M in (("A", self.A), ("B", self.B), ("C", self.C), ("D", self.D)):
            if M.size and not np.all(np.isfinite(M)):
                raise DimensionMismatch(f"{name} contains non-finite entries")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def __repr__(self):
        return f"StateSpace(n={self.n}, m={self.m}, p={self.p})"


@dataclass(frozen=True)
class PoleResidue:
    """Pole-residue form G(s) = sum_k outer(c_k, b_k) / (s - lambda_k) + D.

    ``poles`` has shape (n,), ``rights`` (n, m) holds the b_k row-wise,
    ``lefts`` (n, p) holds the c_k row-wise.  The set is conjugate-closed
    for real realizations.
    """

    poles: np.ndarray
    rights: np.ndarray
    lefts: np.ndarray
    feedthrough: np.ndarray

    def evaluate(self, s):
        """Reconstruct G(s) from the partial-fraction expansion."""
        G = np.array(self.feedthrough, dtype=complex)
        for lam, b, c in zip(self.poles, self.rights, self.lefts):
            G = G + np.outer(c, b) / (s - lam)
        return G


def eval_transfer(sys, s):
    """Evaluate G(s) = C (sI - A)^{-1} B + D through one linear solve."""
    sI_A = s * np.eye(sys.n) - sys.A
    if sys.n:
        ev = np.linalg.eigvals(sys.A)
        if np.min(np.abs(ev - s)) <= 1e-12 * (1.0 + abs(s)):
            raise PoleHit(f"evaluation point {s} coincides with a pole")
        X = np.linalg.solve(sI_A, sys.B.astype(complex))
        return sys.C @ X + sys.D
    return sys.D.astype(complex)


def to_pole_residue(sys):
    """Pole-residue data of a system with simple poles.

    With A = R diag(lam) R^{-1}: b_k^T is row k of R^{-1} B and c_k is
    column k of C R.  The split of each rank-one residue between b_k and
    c_k follows the deterministic eigenvector scaling of linalg.spectral.
    """
    dec = linalg.spectral(sys.A)
    R = dec.eigenvectors
    rights = np.linalg.solve(R, sys.B.astype(complex))
    lefts = (sys.C @ R).T
    return PoleResidue(dec.eigenvalues, rights, lefts, sys.D.copy())


def is_stable(sys, stability_margin=0.0):
    """True iff every eigenvalue of A has real part < -stability_margin."""
    if sys.n == 0:
        return True
    return bool(np.max(np.linalg.eigvals(sys.A).real) < -stability_margin)


def h2_inner(G, H):
    """H2 inner product tr(C_G X C_H^T) with A_G X + X A_H^T + B_G B_H^T = 0.

    Both systems must be stable with zero feedthrough; a nonzero feedthrough
    makes the norm infinite and raises InfiniteNorm.
    """
    if G.m != H.m or G.p != H.p:
        raise DimensionMismatch(
            f"incompatible i/o dimensions: {G.p}x{G.m} vs {H.p}x{H.m}"
        )
    for name, sys in (("first", G), ("second", H)):
        if not is_stable(sys):
            raise NonStableSystem(f"{name} operand is not stable")
        if np.linalg.norm(sys.D) > 0:
            raise InfiniteNorm(f"{name} operand has nonzero feedthrough")
    if G.n == 0 or H.n == 0:
        return 0.0
    X = linalg.solve_sylvester(G.A, H.A.T, G.B @ H.B.T)
    return float(np.trace(G.C @ X @ H.C.T))


def h2_norm(G):
    """H2 norm via the controllability Gramian."""
    val = h2_inner(G, G)
    return float(np.sqrt(max(val, 0.0)))


def hinf_norm_sampled(sys, omega_grid):
    """Max spectral norm of G(i*omega) over a frequency grid.

    This is a lower bound of the true H-infinity norm; accuracy is set by
    the grid resolution.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.size == 0:
        raise ValueError("omega_grid must be nonempty")
    best = 0.0
    for w in omega_grid:
        val = np.linalg.norm(eval_transfer(sys, 1j * w), 2)
        best = max(best, float(val))
    return best


def difference(G, H):
    """Realization of G - H (parallel connection with negated output)."""
    if G.m != H.m or G.p != H.p:
        raise DimensionMismatch(
            f"incompatible i/o dimensions: {G.p}x{G.m} vs {H.p}x{H.m}"
        )
    n, nh = G.n, H.n
    A = np.zeros((n + nh, n + nh))
    A[:n, :n] = G.A
    A[n:, n:] = H.A
    B = np.vstack([G.B, H.B])
    C = np.hstack([G.C, -H.C])
    return StateSpace(A, B, C, G.D - H.D)
