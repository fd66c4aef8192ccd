"""First-order optimality diagnostics for weighted-H2 reduction.

Two equivalent families of necessary conditions are evaluated as residuals:
tangential interpolation of F[G] by F[G_r] at the mirrored reduced poles
(right, left, and bitangential-derivative conditions plus a kernel condition
on the impulse response at zero), and the coupled linear matrix equations of
the classical weighted formulation.  Both families vanish together at a
local optimum; ``equivalence_check`` verifies that numerically.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fmap, linalg, lti
from .errors import DimensionMismatch

_CLOSURE_TOL = 1e-8


def conjugate_pairs(shifts, tol=_CLOSURE_TOL):
    """Group indices of a conjugate-closed set of points.

    Returns a list of (i, j) index pairs (j = -1 for real points); complex
    points are represented by their Im > 0 member.  Raises ValueError when
    the set is not conjugate-closed.
    """
    shifts = np.asarray(shifts, dtype=complex)
    used = np.zeros(shifts.size, dtype=bool)
    groups = []
    for i, s in enumerate(shifts):
        if used[i]:
            continue
        if abs(s.imag) <= tol * (1.0 + abs(s)):
            used[i] = True
            groups.append((i, -1))
            continue
        partner = -1
        for j in range(i + 1, shifts.size):
            if not used[j] and abs(shifts[j] - np.conj(s)) <= tol * (1.0 + abs(s)):
                partner = j
                break
        if partner < 0:
            raise ValueError(f"point {s} has no conjugate partner")
        used[i] = used[partner] = True
        if s.imag > 0:
            groups.append((i, partner))
        else:
            groups.append((partner, i))
    return groups


@dataclass
class InterpolationData:
    """Shift set with right/left tangent directions.

    ``shifts`` has shape (k,); ``rights`` (k, m) and ``lefts`` (k, p) hold
    the tangent directions row-wise.  The set must be conjugate-closed:
    (s, b, c) appears together with (conj s, conj b, conj c).
    """

    shifts: np.ndarray
    rights: np.ndarray
    lefts: np.ndarray

    def __post_init__(self):
        self.shifts = np.atleast_1d(np.asarray(self.shifts, dtype=complex))
        self.rights = np.atleast_2d(np.asarray(self.rights, dtype=complex))
        self.lefts = np.atleast_2d(np.asarray(self.lefts, dtype=complex))
        k = self.shifts.size
        if self.rights.shape[0] != k or self.lefts.shape[0] != k:
            raise DimensionMismatch(
                f"{k} shifts but {self.rights.shape[0]} right / "
                f"{self.lefts.shape[0]} left directions"
            )
        if np.any(np.linalg.norm(self.rights, axis=1) == 0) or np.any(
            np.linalg.norm(self.lefts, axis=1) == 0
        ):
            raise ValueError("tangent directions must be nonzero")
        for i, j in conjugate_pairs(self.shifts):
            if j < 0:
                # self-conjugate: a real shift needs real directions
                if (
                    np.linalg.norm(self.rights[i].imag)
                    > _CLOSURE_TOL * (1.0 + np.linalg.norm(self.rights[i]))
                    or np.linalg.norm(self.lefts[i].imag)
                    > _CLOSURE_TOL * (1.0 + np.linalg.norm(self.lefts[i]))
                ):
                    raise ValueError(
                        f"directions at real shift {self.shifts[i]} must be real"
                    )
                continue
            scale_b = 1.0 + np.linalg.norm(self.rights[i])
            scale_c = 1.0 + np.linalg.norm(self.lefts[i])
            if (
                np.linalg.norm(self.rights[j] - np.conj(self.rights[i]))
                > _CLOSURE_TOL * scale_b
                or np.linalg.norm(self.lefts[j] - np.conj(self.lefts[i]))
                > _CLOSURE_TOL * scale_c
            ):
                raise ValueError(
                    f"directions at conjugate shifts {self.shifts[i]} are not conjugate"
                )

    @property
    def count(self):
        return self.shifts.size

    def sorted(self):
        order = np.lexsort((self.shifts.imag, self.shifts.real))
        return InterpolationData(
            self.shifts[order], self.rights[order], self.lefts[order]
        )


@dataclass
class ResidualReport:
    """Per-shift interpolatory residuals and Halevi matrix-equation residuals.

    Relative entries divide by the norm of the corresponding unreduced
    quantity; when a normalizer vanishes the absolute value is reported
    instead and the shift index is recorded in ``absolute_fallback``.
    Either part may be absent (None) depending on which diagnostic ran.
    """

    poles: np.ndarray = None
    right_abs: np.ndarray = None
    left_abs: np.ndarray = None
    bitangential_abs: np.ndarray = None
    right_rel: np.ndarray = None
    left_rel: np.ndarray = None
    bitangential_rel: np.ndarray = None
    kernel_abs: float = None
    kernel_rel: float = None
    halevi_abs: np.ndarray = None
    halevi_rel: np.ndarray = None
    absolute_fallback: list = field(default_factory=list)

    @property
    def max_interpolatory_rel(self):
        parts = [self.right_rel, self.left_rel, self.bitangential_rel]
        vals = [np.max(p) for p in parts if p is not None and p.size]
        if self.kernel_rel is not None:
            vals.append(self.kernel_rel)
        return float(max(vals)) if vals else 0.0

    @property
    def max_halevi_rel(self):
        if self.halevi_abs is None:
            return None
        return float(np.max(self.halevi_rel))


@dataclass
class HaleviSolution:
    """Solutions of the four coupled linear matrix equations."""

    X: np.ndarray
    P_r: np.ndarray
    Q_r: np.ndarray
    Y: np.ndarray


def _relative(abs_val, normalizer, fallback, tag):
    if normalizer > 0.0:
        return abs_val / normalizer
    fallback.append(tag)
    return abs_val


def interpolatory_residuals(G, G_r, W):
    """Residuals of the tangential interpolation conditions at -poles(G_r).

    For each reduced pole lambda_k with residue factors (b_k, c_k), measures
    the right, left, and bitangential-derivative mismatches between F[G] and
    F[G_r] at -lambda_k, plus the kernel condition on F(0) along Ker(D_w^T).
    """
    F = fmap.build_f_realization(G, W)
    F_r = fmap.build_f_realization(G_r, W)
    pr = lti.to_pole_residue(G_r)
    k = pr.poles.size
    right_abs = np.zeros(k)
    left_abs = np.zeros(k)
    bitan_abs = np.zeros(k)
    right_rel = np.zeros(k)
    left_rel = np.zeros(k)
    bitan_rel = np.zeros(k)
    fallback = []
    for i in range(k):
        s = -pr.poles[i]
        b = pr.rights[i]
        c = pr.lefts[i]
        FG = fmap.eval_f(F, s)
        FGr = fmap.eval_f(F_r, s)
        dFG = fmap.eval_f_derivative(F, s)
        dFGr = fmap.eval_f_derivative(F_r, s)
        right_abs[i] = np.linalg.norm((FG - FGr) @ b)
        left_abs[i] = np.linalg.norm(c @ (FG - FGr))
        bitan_abs[i] = abs(c @ (dFG - dFGr) @ b)
        right_rel[i] = _relative(
            right_abs[i], np.linalg.norm(FG @ b), fallback, ("right", i)
        )
        left_rel[i] = _relative(
            left_abs[i], np.linalg.norm(c @ FG), fallback, ("left", i)
        )
        bitan_rel[i] = _relative(
            bitan_abs[i], abs(c @ dFG @ b), fallback, ("bitangential", i)
        )
    N = linalg.kernel_basis(W.D_w.T)
    if N.shape[1] == 0:
        kernel_abs, kernel_rel = 0.0, 0.0
    else:
        F0 = fmap.f_impulse_at_zero(F)
        F0r = fmap.f_impulse_at_zero(F_r)
        kernel_abs = float(np.linalg.norm((F0 - F0r) @ N))
        kernel_rel = _relative(
            kernel_abs, float(np.linalg.norm(F0 @ N)), fallback, ("kernel", -1)
        )
    return ResidualReport(
        poles=pr.poles,
        right_abs=right_abs,
        left_abs=left_abs,
        bitangential_abs=bitan_abs,
        right_rel=right_rel,
        left_rel=left_rel,
        bitangential_rel=bitan_rel,
        kernel_abs=kernel_abs,
        kernel_rel=kernel_rel,
        absolute_fallback=fallback,
    )


def _output_selector(W, n):
    """The m x (n + n_w) map [0  C_w] picking the weight states."""
    return np.hstack([np.zeros((W.m, n)), W.C_w])


def solve_halevi_system(G, G_r, W):
    """Solve the four coupled matrix equations underlying the Halevi conditions."""
    F = fmap.build_f_realization(G, W)
    A_F = F.A_full
    B_F = F.B_full
    A_r, B_r, C_r, D_r = G_r.A, G_r.B, G_r.C, G_r.D
    S = _output_selector(W, G.n)
    X = linalg.solve_sylvester(A_F, A_r.T, B_F @ B_r.T)
    M = B_r @ S @ X
    Q = M + M.T + B_r @ W.D_w @ W.D_w.T @ B_r.T
    P_r = linalg.solve_lyapunov(A_r, Q)
    Q_r = linalg.solve_lyapunov(A_r.T, C_r.T @ C_r)
    rhs = (
        np.vstack([G.C.T, ((G.D - D_r) @ W.C_w).T]) @ C_r
        - S.T @ B_r.T @ Q_r
    )
    Y = linalg.solve_sylvester(A_F.T, A_r, -rhs)
    return HaleviSolution(X, P_r, Q_r, Y)


def halevi_residuals(G, G_r, W, solution=None):
    """Frobenius residuals of the four weighted first-order conditions."""
    sol = solution if solution is not None else solve_halevi_system(G, G_r, W)
    F = fmap.build_f_realization(G, W)
    S = _output_selector(W, G.n)
    X, P_r, Q_r, Y = sol.X, sol.P_r, sol.Q_r, sol.Y
    A_r, B_r, C_r, D_r = G_r.A, G_r.B, G_r.C, G_r.D
    C_F = F.C_full
    B_F = F.B_full
    N = linalg.kernel_basis(W.D_w.T)
    fallback = []

    terms_a = (Y.T @ X, Q_r @ P_r)
    rho_a = np.linalg.norm(sum(terms_a))
    rel_a = _relative(rho_a, sum(np.linalg.norm(t) for t in terms_a), fallback, ("rho_a", -1))

    terms_b = (C_F @ X, -C_r @ P_r, -D_r @ S @ X)
    rho_b = np.linalg.norm(sum(terms_b))
    rel_b = _relative(rho_b, sum(np.linalg.norm(t) for t in terms_b), fallback, ("rho_b", -1))

    terms_c = (Y.T @ B_F, Q_r @ (B_r @ W.D_w @ W.D_w.T + X.T @ S.T))
    rho_c = np.linalg.norm(sum(terms_c))
    rel_c = _relative(rho_c, sum(np.linalg.norm(t) for t in terms_c), fallback, ("rho_c", -1))

    if N.shape[1] == 0:
        rho_d, rel_d = 0.0, 0.0
    else:
        terms_d = (
            C_r @ X.T @ S.T @ N,
            -G.C @ F.Z @ W.C_w.T @ N,
            -(G.D - D_r) @ W.C_w @ F.P_w @ W.C_w.T @ N,
        )
        rho_d = np.linalg.norm(sum(terms_d))
        rel_d = _relative(
            rho_d, sum(np.linalg.norm(t) for t in terms_d), fallback, ("rho_d", -1)
        )

    return ResidualReport(
        halevi_abs=np.array([rho_a, rho_b, rho_c, rho_d]),
        halevi_rel=np.array([rel_a, rel_b, rel_c, rel_d]),
        absolute_fallback=fallback,
    )


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of the two-family optimality cross-check."""

    equivalent: bool
    interpolatory_satisfied: bool
    halevi_satisfied: bool
    max_interpolatory_rel: float
    max_halevi_rel: float
    interpolatory: ResidualReport
    halevi: ResidualReport


def equivalence_check(G, G_r, W, tol, scale_factor=10.0):
    """Check that the two optimality families agree at tolerance tol.

    The interpolatory family is satisfied when every relative residual is at
    most tol; the matrix-equation family uses tol * scale_factor to absorb
    the conditioning of the eigenvector transformations relating the two.
    Returns an EquivalenceReport; ``equivalent`` is True when both families
    give the same verdict.  This is a diagnostic, not a proof.
    """
    interp = interpolatory_residuals(G, G_r, W)
    hal = halevi_residuals(G, G_r, W)
    interp_ok = interp.max_interpolatory_rel <= tol
    hal_ok = hal.max_halevi_rel <= tol * scale_factor
    return EquivalenceReport(
        equivalent=(interp_ok == hal_ok),
        interpolatory_satisfied=interp_ok,
        halevi_satisfied=hal_ok,
        max_interpolatory_rel=interp.max_interpolatory_rel,
        max_halevi_rel=hal.max_halevi_rel,
        interpolatory=interp,
        halevi=hal,
    )
