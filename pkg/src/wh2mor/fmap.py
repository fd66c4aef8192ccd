"""Weighted-H2 machinery built on the linear map F that carries a weighted
inner product to an unweighted one: <G, H>_W = <F[G], H>_H2.

F[G](s) = G(s) W(s) W(-s)^T + sum_k G(-g_k) W(-g_k) f_k e_k^T / (s + g_k),
where g_k are the (simple) poles of the weight and e_k f_k^T its residues.
F[G] admits a block upper-triangular cascade realization driven by two
auxiliary matrix-equation solutions P_w and Z; evaluation goes through that
realization, while the pole-residue sum above is retained as an independent
cross-check path.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg, lti
from .errors import (
    DefectiveMatrix,
    DimensionMismatch,
    InfiniteNorm,
    NonConvergedQuadrature,
    NonStableMatrix,
    NonStableSystem,
    NotInWeightedH2,
    PoleHit,
)
from .lti import StateSpace

_MEMBERSHIP_TOL = 1e-12
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class WeightFilter:
    """Stable shaping filter W(s) = C_w (sI - A_w)^{-1} B_w + D_w.

    The filter must be stable with simple poles.  Pole/residue data
    (gamma_k, e_k, f_k) with res[W, gamma_k] = e_k f_k^T is computed once at
    construction and reused by the pole-residue evaluation path.

    ``m`` is the row count of C_w/D_w (must match the column count of any
    system the weight is applied to); ``m_w`` is the weight's own input
    dimension, which need not equal ``m``.
    """

    def __init__(self, A_w, B_w, C_w, D_w=None):
        A_w = np.atleast_2d(np.asarray(A_w, dtype=float))
        B_w = np.atleast_2d(np.asarray(B_w, dtype=float))
        C_w = np.atleast_2d(np.asarray(C_w, dtype=float))
        n_w = A_w.shape[0] if A_w.size else 0
        if n_w == 0:
            A_w = np.zeros((0, 0))
            B_w = B_w.reshape(0, B_w.shape[1] if B_w.size else B_w.shape[-1])
            C_w = C_w.reshape(C_w.shape[0], 0)
        if D_w is None:
            D_w = np.zeros((C_w.shape[0], B_w.shape[1]))
        D_w = np.atleast_2d(np.asarray(D_w, dtype=float))
        self._ss = StateSpace(A_w, B_w, C_w, D_w)
        if not lti.is_stable(self._ss):
            raise NonStableMatrix("weight A_w must be Hurwitz")
        if n_w:
            dec = linalg.spectral(A_w)  # DefectiveMatrix if poles repeat
            U = dec.eigenvectors
            self.gamma = dec.eigenvalues
            self.e = (C_w @ U).T                      # rows e_k
            self.f = np.linalg.solve(U, B_w.astype(complex))  # rows f_k^T
        else:
            self.gamma = np.zeros(0, dtype=complex)
            self.e = np.zeros((0, C_w.shape[0]), dtype=complex)
            self.f = np.zeros((0, B_w.shape[1]), dtype=complex)

    @classmethod
    def identity(cls, m):
        """The trivial weight W(s) = I_m, for which F is the identity map."""
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((m, 0)), np.eye(m))

    @classmethod
    def constant(cls, D_w):
        """A constant weight W(s) = D_w (no dynamics)."""
        D_w = np.atleast_2d(np.asarray(D_w, dtype=float))
        return cls(
            np.zeros((0, 0)),
            np.zeros((0, D_w.shape[1])),
            np.zeros((D_w.shape[0], 0)),
            D_w,
        )

    @property
    def A_w(self):
        return self._ss.A

    @property
    def B_w(self):
        return self._ss.B

    @property
    def C_w(self):
        return self._ss.C

    @property
    def D_w(self):
        return self._ss.D

    @property
    def n_w(self):
        return self._ss.n

    @property
    def m(self):
        return self._ss.p

    @property
    def m_w(self):
        return self._ss.m

    def evaluate(self, s):
        """W(s) as an m x m_w complex matrix."""
        return lti.eval_transfer(self._ss, s)

    def to_statespace(self):
        return self._ss

    def __repr__(self):
        return f"WeightFilter(n_w={self.n_w}, m={self.m}, m_w={self.m_w})"


@dataclass
class FRealization:
    """Cascade realization of F[G] with its auxiliary solutions.

    The state matrix is block upper triangular,
        [[A, B C_w], [0, A_w]],
    and is never assembled for linear solves; the two diagonal blocks are
    solved in sequence instead.  P_w solves the weight Lyapunov equation and
    Z the coupling Sylvester equation that define the input map.
    """

    system: StateSpace
    weight: WeightFilter
    P_w: np.ndarray
    Z: np.ndarray
    B_top: np.ndarray
    B_bot: np.ndarray
    _poles: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        ev_a = np.linalg.eigvals(self.system.A) if self.system.n else np.zeros(0)
        ev_w = np.linalg.eigvals(self.weight.A_w) if self.weight.n_w else np.zeros(0)
        self._poles = np.concatenate([ev_a, ev_w])

    @property
    def n(self):
        return self.system.n

    @property
    def n_w(self):
        return self.weight.n_w

    @property
    def order(self):
        return self.system.n + self.weight.n_w

    @property
    def poles(self):
        return self._poles

    @property
    def coupling(self):
        """Off-diagonal block B C_w of the state matrix."""
        return self.system.B @ self.weight.C_w

    @property
    def A_full(self):
        n, n_w = self.n, self.n_w
        A = np.zeros((n + n_w, n + n_w))
        A[:n, :n] = self.system.A
        A[:n, n:] = self.coupling
        A[n:, n:] = self.weight.A_w
        return A

    @property
    def B_full(self):
        return np.vstack([self.B_top, self.B_bot])

    @property
    def C_full(self):
        return np.hstack([self.system.C, self.system.D @ self.weight.C_w])

    def _check_pole(self, s):
        if self._poles.size and np.min(np.abs(self._poles - s)) <= 1e-12 * (1.0 + abs(s)):
            raise PoleHit(f"point {s} lies in the spectrum of the cascade matrix")

    def solve_right(self, s, rhs_top, rhs_bot):
        """(sI - A_F)^{-1} [rhs_top; rhs_bot] using the triangular blocks."""
        self._check_pole(s)
        n, n_w = self.n, self.n_w
        if n_w:
            x2 = np.linalg.solve(
                s * np.eye(n_w) - self.weight.A_w, rhs_bot.astype(complex)
            )
        else:
            x2 = np.zeros((0, rhs_top.shape[1]), dtype=complex)
        if n:
            rhs = rhs_top.astype(complex)
            if n_w:
                rhs = rhs + self.coupling @ x2
            x1 = np.linalg.solve(s * np.eye(n) - self.system.A, rhs)
        else:
            x1 = np.zeros((0, rhs_bot.shape[1]), dtype=complex)
        return x1, x2

    def solve_left(self, s, rhs_top, rhs_bot):
        """(sI - A_F^T)^{-1} [rhs_top; rhs_bot], leading block first."""
        self._check_pole(s)
        n, n_w = self.n, self.n_w
        if n:
            y1 = np.linalg.solve(s * np.eye(n) - self.system.A.T, rhs_top.astype(complex))
        else:
            y1 = np.zeros((0, rhs_bot.shape[1]), dtype=complex)
        if n_w:
            rhs = rhs_bot.astype(complex)
            if n:
                rhs = rhs + self.coupling.T @ y1
            y2 = np.linalg.solve(s * np.eye(n_w) - self.weight.A_w.T, rhs)
        else:
            y2 = np.zeros((0, rhs_top.shape[1]), dtype=complex)
        return y1, y2


def validate_membership(G, W):
    """Check that G belongs to the weighted-H2 space induced by W.

    Requires G stable, the feedthrough product D @ D_w numerically zero, and
    the input dimension of G to match the row dimension of the weight.
    Raises NotInWeightedH2 naming the violated clause.
    """
    if G.m != W.m:
        raise NotInWeightedH2(
            f"dimension clause: system has {G.m} inputs but weight acts on {W.m}"
        )
    if not lti.is_stable(G):
        raise NotInWeightedH2("stability clause: system matrix A is not Hurwitz")
    prod = np.linalg.norm(G.D @ W.D_w)
    bound = _MEMBERSHIP_TOL * (1.0 + np.linalg.norm(G.D) * np.linalg.norm(W.D_w))
    if prod > bound:
        raise NotInWeightedH2(
            f"feedthrough clause: ||D D_w|| = {prod:.3e} exceeds {bound:.3e}"
        )


def build_f_realization(G, W):
    """Cascade realization of F[G] for a stable system G and weight W."""
    validate_membership(G, W)
    P_w = linalg.solve_lyapunov(W.A_w, W.B_w @ W.B_w.T)
    Z = linalg.solve_sylvester(
        G.A, W.A_w.T, G.B @ (W.C_w @ P_w + W.D_w @ W.B_w.T)
    )
    B_top = Z @ W.C_w.T + G.B @ W.D_w @ W.D_w.T
    B_bot = P_w @ W.C_w.T + W.B_w @ W.D_w.T
    return FRealization(G, W, P_w, Z, B_top, B_bot)


def eval_f(F, s):
    """F[G](s) as a p x m complex matrix, via the cascade realization."""
    x1, x2 = F.solve_right(s, F.B_top, F.B_bot)
    out = np.zeros((F.system.p, F.system.m), dtype=complex)
    if F.n:
        out = out + F.system.C @ x1
    if F.n_w:
        out = out + (F.system.D @ F.weight.C_w) @ x2
    return out


def eval_f_derivative(F, s):
    """d/ds F[G](s) = -C_F (sI - A_F)^{-2} B_F."""
    x1, x2 = F.solve_right(s, F.B_top, F.B_bot)
    y1, y2 = F.solve_right(s, x1, x2)
    out = np.zeros((F.system.p, F.system.m), dtype=complex)
    if F.n:
        out = out + F.system.C @ y1
    if F.n_w:
        out = out + (F.system.D @ F.weight.C_w) @ y2
    return -out


def eval_f_pole_residue(G, W, s):
    """F[G](s) straight from its defining sum, bypassing the realization.

    Kept as an independent cross-check of the cascade realization; not used
    on hot paths.
    """
    validate_membership(G, W)
    out = lti.eval_transfer(G, s) @ W.evaluate(s) @ W.evaluate(-s).T
    for gam, e_k, f_k in zip(W.gamma, W.e, W.f):
        out = out + (
            lti.eval_transfer(G, -gam) @ W.evaluate(-gam) @ np.outer(f_k, e_k)
        ) / (s + gam)
    return out


def f_impulse_at_zero(F):
    """Impulse response of F[G] at t = 0, i.e. the product C_F B_F."""
    out = F.system.C @ F.B_top
    if F.n_w:
        out = out + (F.system.D @ F.weight.C_w) @ F.B_bot
    return np.real_if_close(out, tol=1)


def cascade_with_weight(G, W):
    """Series realization of G(s) W(s) (exact for any feedthroughs)."""
    if G.m != W.m:
        raise DimensionMismatch(
            f"system has {G.m} inputs but weight acts on {W.m}"
        )
    n, n_w = G.n, W.n_w
    A = np.zeros((n + n_w, n + n_w))
    A[:n, :n] = G.A
    A[:n, n:] = G.B @ W.C_w
    A[n:, n:] = W.A_w
    B = np.vstack([G.B @ W.D_w, W.B_w])
    C = np.hstack([G.C, G.D @ W.C_w])
    return StateSpace(A, B, C, G.D @ W.D_w)


def weighted_h2_inner(G, H, W, method="fmap"):
    """Weighted inner product <G, H>_W.

    method="fmap" computes <F[G], H> through the cascade realization of F[G]
    and one Sylvester solve, adding the constant-part correction when H has
    a feedthrough.  method="cascade" computes <G W, H W> on series
    realizations instead; the two agree to roundoff and serve as mutual
    checks.
    """
    validate_membership(G, W)
    validate_membership(H, W)
    if G.p != H.p:
        raise DimensionMismatch(f"output dimensions differ: {G.p} vs {H.p}")
    if method == "cascade":
        GW = cascade_with_weight(G, W)
        HW = cascade_with_weight(H, W)
        return lti.h2_inner(GW, HW)
    if method != "fmap":
        raise ValueError(f"unknown method {method!r}")
    F = build_f_realization(G, W)
    H0 = StateSpace(H.A, H.B, H.C)  # strictly proper part
    if F.order == 0 or H.n == 0:
        val = 0.0
    else:
        X = linalg.solve_sylvester(F.A_full, H.A.T, F.B_full @ H.B.T)
        val = float(np.trace(F.C_full @ X @ H0.C.T))
    if np.linalg.norm(H.D) > 0:
        full, _ = weighted_inner_with_constant(G, H.D, W)
        val += full
    return val


def weighted_inner_with_constant(G, D_H, W):
    """<G, D_H>_W for a constant function D_H, and its F-side half.

    Returns the pair (full, f_side) where full is the closed trace formula
    tr(C Z C_w^T D_H^T + D C_w P_w C_w^T D_H^T) and f_side = full / 2 equals
    <F[G], D_H>_H2.
    """
    validate_membership(G, W)
    D_H = np.atleast_2d(np.asarray(D_H, dtype=float))
    if D_H.shape != (G.p, G.m):
        raise DimensionMismatch(f"D_H must be {G.p}x{G.m}, got {D_H.shape}")
    prod = np.linalg.norm(D_H @ W.D_w)
    if prod > _MEMBERSHIP_TOL * (1.0 + np.linalg.norm(D_H) * np.linalg.norm(W.D_w)):
        raise NotInWeightedH2("constant operand violates D_H D_w = 0")
    F = build_f_realization(G, W)
    full = float(
        np.trace(G.C @ F.Z @ W.C_w.T @ D_H.T)
        + np.trace(G.D @ W.C_w @ F.P_w @ W.C_w.T @ D_H.T)
    )
    return full, 0.5 * full


def weighted_norm(G, W):
    """Weighted H2 norm ||G||_W = ||G W||_H2 via the series realization."""
    validate_membership(G, W)
    GW = cascade_with_weight(G, W)
    return lti.h2_norm(GW)


def weighted_error_norm(G, G_r, W):
    """Weighted error ||(G - G_r) W||_H2.

    A nonzero feedthrough difference is admissible only when it annihilates
    D_w; otherwise the norm is infinite and InfiniteNorm is raised.
    """
    for name, sys in (("G", G), ("G_r", G_r)):
        if not lti.is_stable(sys):
            raise NotInWeightedH2(f"{name} is not stable")
    if G.m != W.m:
        raise NotInWeightedH2(
            f"dimension clause: system has {G.m} inputs but weight acts on {W.m}"
        )
    dD = G.D - G_r.D
    prod = np.linalg.norm(dD @ W.D_w)
    if prod > _MEMBERSHIP_TOL * (1.0 + np.linalg.norm(dD) * np.linalg.norm(W.D_w)):
        raise InfiniteNorm("feedthrough difference does not annihilate D_w")
    E = lti.difference(G, G_r)
    return lti.h2_norm(cascade_with_weight(E, W))


def weighted_hinf_sampled(G, G_r, W, omega_grid):
    """Sampled sup-norm of the weighted error (G - G_r) W along i*omega."""
    E = lti.difference(G, G_r)
    return lti.hinf_norm_sampled(cascade_with_weight(E, W), omega_grid)


def _batch_response(A, B, C, D, omegas):
    """Frequency response at i*omega for all grid points, shape (k, p, m)."""
    n = A.shape[0]
    if n == 0:
        return np.broadcast_to(D, (omegas.size,) + D.shape).astype(complex)
    try:
        dec = linalg.spectral(A)
        R = dec.eigenvectors
        CR = C @ R
        RB = np.linalg.solve(R, B.astype(complex))
        weights = 1.0 / (1j * omegas[:, None] - dec.eigenvalues[None, :])
        resp = np.einsum("pn,kn,nm->kpm", CR, weights, RB)
        return resp + D[None, :, :]
    except DefectiveMatrix:
        out = np.empty((omegas.size, C.shape[0], B.shape[1]), dtype=complex)
        eye = np.eye(n)
        for i, w in enumerate(omegas):
            out[i] = C @ np.linalg.solve(1j * w * eye - A, B.astype(complex)) + D
        return out


def quadrature_weighted_inner(
    G, H, W, wmin=1e-4, wmax=1e4, points=4000, rel_tol=1e-5, max_refine=6
):
    """Weighted inner product by direct frequency integration.

    Trapezoid rule on [0, wmax] over a log-spaced grid (plus the origin),
    doubled and corrected by a 1/omega^2 tail estimate; the grid is refined
    (points doubled, outer radius grown tenfold) until two successive
    estimates agree to rel_tol.  Fully independent of the matrix-equation
    paths; intended as an oracle.
    """
    validate_membership(G, W)
    validate_membership(H, W)
    if G.p != H.p:
        raise DimensionMismatch(f"output dimensions differ: {G.p} vs {H.p}")

    def estimate(w_hi, npts):
        grid = np.concatenate([[0.0], np.logspace(np.log10(wmin), np.log10(w_hi), npts)])
        Gf = _batch_response(G.A, G.B, G.C, G.D, grid)
        Hf = _batch_response(H.A, H.B, H.C, H.D, grid)
        Wf = _batch_response(W.A_w, W.B_w, W.C_w, W.D_w, grid)
        # tr(G(-iw) W(-iw) W(iw)^T H(iw)^T); real systems give G(-iw) = conj G(iw)
        integrand = np.einsum(
            "kpa,kab,kcb,kpc->k", np.conj(Gf), np.conj(Wf), Wf, Hf
        )
        f = integrand.real
        body = _trapezoid(f, grid)
        tail = f[-1] * grid[-1]  # integral of f(w_hi) * (w_hi / w)^2 beyond w_hi
        return (body + tail) / np.pi

    prev = None
    w_hi, npts = float(wmax), int(points)
    for _ in range(max_refine):
        val = estimate(w_hi, npts)
        if prev is not None and abs(val - prev) <= rel_tol * (1.0 + abs(val)):
            return val
        prev = val
        w_hi *= 10.0
        npts *= 2
    raise NonConvergedQuadrature(
        f"estimates still moving after {max_refine} refinements (last {prev:.6e})"
    )
