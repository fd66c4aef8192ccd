"""Dense linear-algebra kernels: Lyapunov/Sylvester solvers, spectral
decomposition, kernel bases, and biorthogonalization.

All routines are pure functions on numpy arrays.  Matrix equations are
solved through the real-Schur (Bartels-Stewart) path of scipy; an
independent Kronecker-vectorization oracle is provided for validation.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from .errors import (
    DefectiveMatrix,
    DimensionMismatch,
    NonStableMatrix,
    SingularOperator,
    SizeLimitExceeded,
)

#: residual tolerance for matrix-equation solves, relative to operand scales
RESIDUAL_TOL = 1e-10
#: condition-number ceiling beyond which decompositions are rejected
COND_LIMIT = 1e12
#: default relative tolerance for numerical rank decisions
DEFAULT_RANK_TOL = 1e-10
#: hard size cap (product of orders) for the Kronecker oracle
KRON_SIZE_LIMIT = 400


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues and right eigenvectors with A @ R = R @ diag(eigenvalues).

    Eigenvalues are sorted by (real part, imaginary part); eigenvectors have
    unit 2-norm with the largest-magnitude entry rotated to the positive real
    axis so the decomposition is deterministic.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_2d(M, name):
    M = np.asarray(M, dtype=float if not np.iscomplexobj(M) else complex)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-d array, got ndim={M.ndim}")
    if M.size and not np.all(np.isfinite(M)):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    return M


def _require_square(M, name):
    M = _as_2d(M, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {M.shape}")
    return M


def _require_stable(A, name):
    if A.shape[0] and np.max(np.linalg.eigvals(A).real) >= 0.0:
        raise NonStableMatrix(f"{name} has an eigenvalue with nonnegative real part")


def solve_lyapunov(A, Q):
    """Solve A P + P A^T + Q = 0 for symmetric P.

    A must be Hurwitz and Q symmetric of the same order.  The result is
    symmetrized and its residual checked against RESIDUAL_TOL.
    """
    A = _require_square(A, "A")
    Q = _require_square(Q, "Q")
    if A.shape != Q.shape:
        raise DimensionMismatch(f"A is {A.shape} but Q is {Q.shape}")
    if Q.size and np.linalg.norm(Q - Q.T) > 1e-12 * (1.0 + np.linalg.norm(Q)):
        raise ValueError("Q must be symmetric")
    _require_stable(A, "A")
    if A.shape[0] == 0:
        return np.zeros((0, 0))
    P = spla.solve_continuous_lyapunov(A, -Q)
    P = 0.5 * (P + P.T)
    scale = np.linalg.norm(A) * np.linalg.norm(P) + np.linalg.norm(Q)
    res = np.linalg.norm(A @ P + P @ A.T + Q)
    if res > RESIDUAL_TOL * max(scale, 1e-300):
        raise SingularOperator(
            f"Lyapunov residual {res:.3e} exceeds {RESIDUAL_TOL:.1e} * {scale:.3e}"
        )
    return P


def solve_sylvester(M1, M2, N):
    """Solve M1 X + X M2 + N = 0.

    Requires the spectra of M1 and -M2 to be disjoint; near-intersections are
    reported as SingularOperator.
    """
    M1 = _require_square(M1, "M1")
    M2 = _require_square(M2, "M2")
    N = _as_2d(N, "N")
    if N.shape != (M1.shape[0], M2.shape[0]):
        raise DimensionMismatch(
            f"N must be {M1.shape[0]}x{M2.shape[0]}, got {N.shape}"
        )
    if M1.shape[0] == 0 or M2.shape[0] == 0:
        return np.zeros(N.shape)
    ev1 = np.linalg.eigvals(M1)
    ev2 = np.linalg.eigvals(M2)
    sep = np.min(np.abs(ev1[:, None] + ev2[None, :]))
    scale_ev = max(np.max(np.abs(ev1)), np.max(np.abs(ev2)), 1.0)
    if sep <= 1e-12 * scale_ev:
        raise SingularOperator(
            f"spectra of M1 and -M2 intersect (separation {sep:.3e})"
        )
    X = spla.solve_sylvester(M1, M2, -N)
    scale = (
        np.linalg.norm(M1) * np.linalg.norm(X)
        + np.linalg.norm(X) * np.linalg.norm(M2)
        + np.linalg.norm(N)
    )
    res = np.linalg.norm(M1 @ X + X @ M2 + N)
    if res > RESIDUAL_TOL * max(scale, 1e-300):
        raise SingularOperator(
            f"Sylvester residual {res:.3e} exceeds tolerance (separation {sep:.3e})"
        )
    return X


def kron_oracle_sylvester(M1, M2, N):
    """Brute-force Sylvester solve via Kronecker vectorization.

    Solves (I (x) M1 + M2^T (x) I) vec(X) = -vec(N) by dense factorization.
    Independent of solve_sylvester; intended as a validation oracle.
    """
    M1 = _require_square(M1, "M1")
    M2 = _require_square(M2, "M2")
    N = _as_2d(N, "N")
    p, q = M1.shape[0], M2.shape[0]
    if N.shape != (p, q):
        raise DimensionMismatch(f"N must be {p}x{q}, got {N.shape}")
    if p * q > KRON_SIZE_LIMIT:
        raise SizeLimitExceeded(f"combined order {p * q} exceeds {KRON_SIZE_LIMIT}")
    K = np.kron(np.eye(q), M1) + np.kron(M2.T, np.eye(p))
    if np.linalg.cond(K) > COND_LIMIT:
        raise SingularOperator("vectorized Sylvester operator is numerically singular")
    x = np.linalg.solve(K, -N.reshape(-1, order="F"))
    return x.reshape((p, q), order="F")


def spectral(A):
    """Eigenvalue decomposition with deterministic ordering and scaling.

    Raises DefectiveMatrix when the eigenvector matrix has condition number
    above COND_LIMIT (simple eigenvalues are required downstream).
    """
    A = _require_square(A, "A")
    n = A.shape[0]
    if n == 0:
        return SpectralDecomposition(np.zeros(0, dtype=complex), np.zeros((0, 0), dtype=complex))
    lam, R = np.linalg.eig(A)
    order = np.lexsort((lam.imag, lam.real))
    lam = lam[order]
    R = R[:, order]
    # unit 2-norm columns, phase fixed by the largest-magnitude entry
    for k in range(n):
        col = R[:, k]
        col = col / np.linalg.norm(col)
        j = np.argmax(np.abs(col))
        phase = col[j] / abs(col[j])
        R[:, k] = col / phase
    if np.linalg.cond(R) > COND_LIMIT:
        raise DefectiveMatrix(
            "eigenvector matrix is numerically singular; matrix treated as defective"
        )
    return SpectralDecomposition(lam, R)


def kernel_basis(M, rank_tol=DEFAULT_RANK_TOL):
    """Orthonormal basis N of the numerical kernel of M (M @ N ~ 0).

    Singular values below rank_tol * sigma_max * max(rows, cols) count as
    zero.  Returns a matrix with zero columns when M has full column rank.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    M = _as_2d(M, "M")
    rows, cols = M.shape
    if cols == 0:
        return np.zeros((0, 0))
    if rows == 0:
        return np.eye(cols)
    _, s, Vh = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    cutoff = rank_tol * smax * max(rows, cols)
    rank = int(np.sum(s > cutoff))
    return Vh[rank:].conj().T


def orth_basis(M, rank_tol=DEFAULT_RANK_TOL):
    """Orthonormal basis of the column span of M, truncated at numerical rank."""
    M = _as_2d(M, "M")
    if M.shape[1] == 0:
        return M.reshape(M.shape[0], 0)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    smax = s[0] if s.size else 0.0
    cutoff = rank_tol * smax * max(M.shape)
    rank = int(np.sum(s > cutoff))
    return U[:, :rank]


def biorthonormalize(Vraw, Wraw):
    """Rescale bases so that W_r^T V_r = I while preserving both spans.

    Uses an LU factorization of Wraw^T Vraw; raises RankDeficient when that
    product is numerically singular.
    """
    from .errors import RankDeficient

    Vraw = _as_2d(Vraw, "Vraw")
    Wraw = _as_2d(Wraw, "Wraw")
    if Vraw.shape != Wraw.shape:
        raise DimensionMismatch(f"Vraw is {Vraw.shape} but Wraw is {Wraw.shape}")
    k = Vraw.shape[1]
    if k == 0:
        return Vraw.copy(), Wraw.copy()
    M = Wraw.T @ Vraw
    if np.linalg.cond(M) > COND_LIMIT:
        raise RankDeficient(
            "Wraw^T Vraw is numerically singular; bases cannot be biorthogonalized"
        )
    P, L, U = spla.lu(M)
    # M = P L U  =>  V_r = Vraw U^{-1},  W_r = (Wraw P) L^{-T}
    V_r = spla.solve_triangular(U, Vraw.T, trans="T", lower=False).T
    W_r = spla.solve_triangular(L, (Wraw @ P).T, lower=True).T
    return V_r, W_r
