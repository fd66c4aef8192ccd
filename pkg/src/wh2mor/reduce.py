"""Reduction algorithms: interpolatory subspaces, the NOWI fixed-point
iteration, the reduced feedthrough formula, interpolation-gap diagnostics,
and a frequency-weighted balanced-truncation baseline.

NOWI places interpolation points at the mirrored poles of the current
reduced model, builds Petrov-Galerkin bases from the cascade realization of
F[G], and iterates until the shift set stops moving.  In exactness mode the
right basis is augmented with the range of the coupling solution Z, which
makes the reduced model an exact bitangential Hermite interpolant of F[G]
at every shift (at the price of a model order increased by rank(Z)).
"""

from dataclasses import dataclass, field

import numpy as np

from . import fmap, linalg, lti, optimality
from .errors import (
    DimensionMismatch,
    InfiniteNorm,
    MorError,
    NonStableSystem,
    PoleHit,
    RankDeficient,
    UnstableReducedModel,
)
from .lti import StateSpace
from .optimality import InterpolationData

_RANK_TOL = 1e-12
_COLLISION_TOL = 1e-8


@dataclass
class ProjectionPair:
    """Biorthogonal reduction bases with W_r^T V_r = I.

    ``provenance`` records how each raw column was generated (one entry per
    shift group plus one for the exactness augmentation block).
    """

    V_r: np.ndarray
    W_r: np.ndarray
    provenance: list = field(default_factory=list)


@dataclass
class NowiConfig:
    """Iteration controls for the near-optimal weighted interpolation loop.

    ``order`` counts interpolation shifts; in exactness mode the reduced
    model is larger by the numerical rank of Z.  ``exactness`` defaults to
    None, meaning: enabled automatically when the weight order does not
    exceed the system order.  ``init`` is one of "mirrored-dominant",
    "log-spaced", "random".
    """

    order: int
    tol: float = 1e-4
    max_iter: int = 100
    init: str = "mirrored-dominant"
    seed: int = 0
    exactness: bool = None
    stability_repair: bool = True
    recompute_feedthrough: bool = True
    track_residuals: bool = True
    track_weighted_error: bool = False

    def __post_init__(self):
        if self.order <= 0:
            raise ValueError("order must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.init not in ("mirrored-dominant", "log-spaced", "random"):
            raise ValueError(f"unknown init strategy {self.init!r}")


@dataclass
class ReducedModel:
    """Reduced system together with its reduction artifacts.

    ``shifts`` holds the interpolation data that built the final bases;
    ``history`` one record per iteration; ``flags`` any anomalies (shift
    collisions, regularized feedthrough, max-iteration stop, instability).
    """

    system: StateSpace
    Z_r: np.ndarray
    projection: ProjectionPair
    diagnostics: object = None
    history: list = field(default_factory=list)
    shifts: InterpolationData = None
    converged: bool = True
    iterations: int = 0
    flags: list = field(default_factory=list)
    method: str = "nowi"
    extras: dict = field(default_factory=dict)

    @property
    def order(self):
        return self.system.n


def build_subspaces(F, data):
    """Raw complex interpolation bases for the cascade realization of F[G].

    Column i of Vraw is (sigma_i I - A_F)^{-1} B_F b_i and column i of Wraw
    is (sigma_i I - A_F^T)^{-1} C_F^T c_i, computed blockwise through the
    triangular structure.
    """
    k = data.count
    order = F.order
    Vraw = np.zeros((order, k), dtype=complex)
    Wraw = np.zeros((order, k), dtype=complex)
    n = F.n
    Cw_D = (F.system.D @ F.weight.C_w).T
    for i in range(k):
        s = data.shifts[i]
        b = data.rights[i].reshape(-1, 1)
        c = data.lefts[i].reshape(-1, 1)
        x1, x2 = F.solve_right(s, F.B_top @ b, F.B_bot @ b)
        Vraw[:n, i : i + 1] = x1
        Vraw[n:, i : i + 1] = x2
        y1, y2 = F.solve_left(s, F.system.C.T @ c, Cw_D @ c)
        Wraw[:n, i : i + 1] = y1
        Wraw[n:, i : i + 1] = y2
    return Vraw, Wraw


def _realify_columns(M, groups, shifts):
    """Real column block spanning the same space as conjugate-closed columns."""
    cols = []
    for i, j in groups:
        if j < 0:
            col = M[:, i]
            if np.max(np.abs(col.imag)) > 1e-6 * (1.0 + np.max(np.abs(col.real))):
                raise ValueError(
                    f"column at real shift {shifts[i]} has a large imaginary part"
                )
            cols.append(col.real)
        else:
            cols.append(M[:, i].real)
            cols.append(M[:, i].imag)
    return np.column_stack(cols) if cols else np.zeros((M.shape[0], 0))


def _normalize_columns(M):
    norms = np.linalg.norm(M, axis=0)
    norms[norms == 0] = 1.0
    return M / norms


def extract_projection(Vraw, Wraw, data, n, z_basis=None, rank_tol=_RANK_TOL):
    """Leading-n-row bases, realified and biorthonormalized.

    In exactness mode ``z_basis`` (an orthonormal basis of Ran(Z)) is
    appended to both stacks before the rank-revealing orthonormalization, so
    span(V_r) contains Ran(Z).
    """
    groups = optimality.conjugate_pairs(data.shifts)
    Va = _realify_columns(Vraw[:n], groups, data.shifts)
    Wa = _realify_columns(Wraw[:n], groups, data.shifts)
    provenance = [
        {"kind": "shift", "sigma": complex(data.shifts[i]), "pair": j >= 0}
        for i, j in groups
    ]
    if z_basis is not None and z_basis.shape[1]:
        Va = np.hstack([Va, z_basis])
        Wa = np.hstack([Wa, z_basis])
        provenance.append({"kind": "z-augment", "columns": z_basis.shape[1]})
    Uv, sv, _ = np.linalg.svd(_normalize_columns(Va), full_matrices=False)
    Uw, sw, _ = np.linalg.svd(_normalize_columns(Wa), full_matrices=False)
    rank_v = int(np.sum(sv > rank_tol * sv[0] * max(Va.shape))) if sv.size else 0
    rank_w = int(np.sum(sw > rank_tol * sw[0] * max(Wa.shape))) if sw.size else 0
    rank = min(rank_v, rank_w)
    if rank == 0:
        raise RankDeficient("interpolation bases are numerically empty")
    if rank < Va.shape[1]:
        # nearly dependent raw columns: keep the common dominant subspace
        provenance.append({"kind": "rank-truncated", "kept": rank, "raw": Va.shape[1]})
    V_r, W_r = linalg.biorthonormalize(Uv[:, :rank], Uw[:, :rank])
    return ProjectionPair(V_r, W_r, provenance)


def _kernel_weight_inverse(W, P_w, N):
    """Regularized m x m map N (N^T C_w P_w C_w^T N)^{-1} N^T.

    Returns (K0, regularized) where K0 is zero when the kernel is trivial.
    """
    m = W.m
    if N.shape[1] == 0:
        return np.zeros((m, m)), False
    M = N.T @ W.C_w @ P_w @ W.C_w.T @ N
    svals = np.linalg.svd(M, compute_uv=False)
    regularized = bool(svals[-1] <= 1e-12 * svals[0]) if svals[0] > 0 else True
    Minv = np.linalg.pinv(M, rcond=1e-12)
    return N @ Minv @ N.T, regularized


def compute_feedthrough(G, W, proj, A_r, B_r, F=None):
    """Reduced feedthrough and the reduced coupling solution Z_r.

    Z_r solves A_r Z_r + Z_r A_w^T + B_r (C_w P_w + D_w B_w^T) = 0 and the
    feedthrough is the kernel-restricted least-squares solution of the
    fourth weighted optimality condition; it annihilates D_w by
    construction.  Returns (D_r, Z_r, flags).
    """
    if F is None:
        F = fmap.build_f_realization(G, W)
    flags = []
    Z_r = linalg.solve_sylvester(
        A_r, W.A_w.T, B_r @ (W.C_w @ F.P_w + W.D_w @ W.B_w.T)
    )
    N = linalg.kernel_basis(W.D_w.T)
    if N.shape[1] == 0:
        return np.zeros((G.p, G.m)), Z_r, flags
    K0, regularized = _kernel_weight_inverse(W, F.P_w, N)
    if regularized:
        flags.append("feedthrough-regularized")
    D_r = G.C @ (F.Z - proj.V_r @ Z_r) @ W.C_w.T @ K0
    return D_r, Z_r, flags


def _dominance(lams, rights, lefts):
    re = np.maximum(np.abs(lams.real), 1e-300)
    return (
        np.linalg.norm(rights, axis=1) * np.linalg.norm(lefts, axis=1) / (2.0 * re)
    )


def _select_conjugate_closed(lams, rights, lefts, count, scores=None):
    """Pick `count` entries by score, never splitting a conjugate pair.

    ``scores`` defaults to pole dominance (residue norm over pole distance
    from the axis).  When a single slot remains and only complex pairs are
    left, a real surrogate (the real part of the best remaining pair) is
    used so the returned set stays conjugate-closed.
    """
    dom = _dominance(lams, rights, lefts) if scores is None else np.asarray(scores)
    groups = optimality.conjugate_pairs(lams)
    groups = sorted(groups, key=lambda g: -max(dom[g[0]], dom[g[1]] if g[1] >= 0 else 0.0))
    sel_l, sel_b, sel_c = [], [], []
    remaining = count
    leftover_complex = []
    for i, j in groups:
        size = 1 if j < 0 else 2
        if size <= remaining:
            sel_l.append(lams[i])
            sel_b.append(rights[i])
            sel_c.append(lefts[i])
            if j >= 0:
                sel_l.append(lams[j])
                sel_b.append(rights[j])
                sel_c.append(lefts[j])
            remaining -= size
        elif j >= 0:
            leftover_complex.append(i)
        if remaining == 0:
            break
    if remaining == 1 and leftover_complex:
        i = leftover_complex[0]
        sel_l.append(complex(lams[i].real))
        b = rights[i].real
        c = lefts[i].real
        sel_b.append(b if np.linalg.norm(b) > 1e-12 else np.abs(rights[i]))
        sel_c.append(c if np.linalg.norm(c) > 1e-12 else np.abs(lefts[i]))
        remaining = 0
    return np.array(sel_l), np.array(sel_b), np.array(sel_c)


def _directions_from_f(F, shifts):
    """Leading singular-vector tangent directions of F[G] at each shift."""
    shifts = np.asarray(shifts, dtype=complex)
    rights = np.zeros((shifts.size, F.system.m), dtype=complex)
    lefts = np.zeros((shifts.size, F.system.p), dtype=complex)
    for i, j in optimality.conjugate_pairs(shifts):
        M = fmap.eval_f(F, shifts[i])
        if j < 0:
            M = M.real
        U, _, Vh = np.linalg.svd(M)
        rights[i] = Vh[0].conj()
        lefts[i] = U[:, 0]
        if j >= 0:
            rights[j] = np.conj(rights[i])
            lefts[j] = np.conj(lefts[i])
    return rights, lefts


def _initial_data(G, W, F, cfg):
    """Starting shifts and directions per the configured strategy."""
    n_r = cfg.order
    if cfg.init == "mirrored-dominant":
        sel_l = []
        nu = min(2, n_r) if W.n_w else 0
        if nu:
            lw, _, _ = _select_conjugate_closed(W.gamma, W.f, W.e, nu)
            sel_l.extend(lw)
        pr = lti.to_pole_residue(G)
        lg, _, _ = _select_conjugate_closed(
            pr.poles, pr.rights, pr.lefts, n_r - len(sel_l)
        )
        sel_l.extend(lg)
        shifts = np.array([abs(l.real) - 1j * l.imag for l in sel_l])
    elif cfg.init == "log-spaced":
        re = np.abs(np.linalg.eigvals(G.A).real)
        lo, hi = float(np.min(re)), float(np.max(re))
        if hi <= lo * (1 + 1e-12):
            lo, hi = 0.5 * lo, 2.0 * hi
        shifts = np.logspace(np.log10(lo), np.log10(hi), n_r).astype(complex)
    else:  # random
        rng = np.random.default_rng(cfg.seed)
        re = np.abs(np.linalg.eigvals(G.A).real)
        lo, hi = float(np.min(re)), float(np.max(re))
        mags = 10 ** rng.uniform(np.log10(lo), np.log10(hi), size=(n_r + 1) // 2)
        shifts = []
        for q in range(n_r // 2):
            angle = rng.uniform(0.1, 1.3)
            shifts.append(mags[q] * np.exp(1j * angle))
            shifts.append(mags[q] * np.exp(-1j * angle))
        if n_r % 2:
            shifts.append(complex(mags[-1]))
        shifts = np.array(shifts)
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed + 1)
        rights = rng.standard_normal((n_r, G.m))
        lefts = rng.standard_normal((n_r, G.p))
        rights /= np.linalg.norm(rights, axis=1, keepdims=True)
        lefts /= np.linalg.norm(lefts, axis=1, keepdims=True)
        rights = rights.astype(complex)
        lefts = lefts.astype(complex)
    else:
        rights, lefts = _directions_from_f(F, shifts)
    return InterpolationData(shifts, rights, lefts)


def _avoid_spectrum(data, poles, flags):
    """Nudge shifts off the spectrum of the cascade matrix."""
    shifts = data.shifts.copy()
    moved = False
    for _ in range(8):
        clash = False
        for i, j in optimality.conjugate_pairs(shifts):
            s = shifts[i]
            if poles.size and np.min(np.abs(poles - s)) <= _COLLISION_TOL * (1.0 + abs(s)):
                delta = _COLLISION_TOL * (1.0 + abs(s))
                shifts[i] = s + delta
                if j >= 0:
                    shifts[j] = shifts[j] + delta
                clash = moved = True
        if not clash:
            break
    if moved:
        flags.append("shift-collision")
        return InterpolationData(shifts, data.rights, data.lefts)
    return data


def _shift_change(old, new):
    """Max relative movement between sorted shift sets."""
    if old.size != new.size:
        return np.inf
    o = old[np.lexsort((old.imag, old.real))]
    m = new[np.lexsort((new.imag, new.real))]
    denom = np.maximum(np.abs(o), 1e-300)
    return float(np.max(np.abs(m - o) / denom))


def nowi(G, W, cfg, init=None):
    """Near-optimal weighted-interpolation reduction of G under the weight W.

    Iterates subspace construction, Petrov-Galerkin projection, feedthrough
    update, and shift correction at the mirrored reduced poles until the
    shift set is stationary.  A nonzero feedthrough of G is removed before
    the iteration and added back to the reduced feedthrough afterwards.

    Returns a ReducedModel; when the iteration hits max_iter the best
    iterate (smallest shift movement) is returned with a "max-iterations"
    flag.
    """
    fmap.validate_membership(G, W)
    n = G.n
    if not 0 < cfg.order <= n:
        raise ValueError(f"order must lie in [1, {n}], got {cfg.order}")
    D0 = G.D.copy()
    has_D = np.linalg.norm(D0) > 0
    G0 = StateSpace(G.A, G.B, G.C) if has_D else G
    F = fmap.build_f_realization(G0, W)
    exact = cfg.exactness if cfg.exactness is not None else (W.n_w <= n)
    z_basis = None
    if exact and W.n_w:
        z_basis = linalg.orth_basis(F.Z, _RANK_TOL)
    data = (init or _initial_data(G0, W, F, cfg)).sorted()
    flags = []
    history = []
    converged = False
    best = None
    current = None
    for it in range(1, cfg.max_iter + 1):
        data = _avoid_spectrum(data, F.poles, flags)
        Vraw, Wraw = build_subspaces(F, data)
        proj = extract_projection(Vraw, Wraw, data, n, z_basis=z_basis)
        A_r = proj.W_r.T @ G0.A @ proj.V_r
        B_r = proj.W_r.T @ G0.B
        C_r = G0.C @ proj.V_r
        stable = bool(A_r.size == 0 or np.max(np.linalg.eigvals(A_r).real) < 0)
        D_r = np.zeros((G0.p, G0.m))
        Z_r = None
        if cfg.recompute_feedthrough or stable:
            try:
                D_r, Z_r, ft_flags = compute_feedthrough(G0, W, proj, A_r, B_r, F)
                flags.extend(f for f in ft_flags if f not in flags)
            except (MorError, np.linalg.LinAlgError):
                if "feedthrough-skipped" not in flags:
                    flags.append("feedthrough-skipped")
        model_t = StateSpace(A_r, B_r, C_r, (D_r + D0) if has_D else D_r)
        # next shift set from the reduced spectrum
        dec = linalg.spectral(A_r)
        lam = dec.eigenvalues
        b_all = np.linalg.solve(dec.eigenvectors, B_r.astype(complex))
        c_all = (C_r @ dec.eigenvectors).T
        if lam.size > cfg.order:
            # track the poles whose mirrors sit closest to the current shift
            # set; augmentation-induced poles stay excluded, which keeps the
            # selection stable across iterations
            mirror = np.abs(lam.real) - 1j * lam.imag
            dist = np.min(np.abs(mirror[:, None] - data.shifts[None, :]), axis=1)
            lam_s, b_s, c_s = _select_conjugate_closed(
                lam, b_all, c_all, cfg.order, scores=-dist
            )
        else:
            lam_s, b_s, c_s = lam, b_all, c_all
        if cfg.stability_repair:
            sigma_new = np.abs(lam_s.real) - 1j * lam_s.imag
        else:
            sigma_new = -lam_s
        data_next = InterpolationData(sigma_new, b_s, c_s).sorted()
        metric = _shift_change(data.shifts, data_next.shifts)
        record = {
            "iteration": it,
            "shift_change": metric,
            "shifts": data.shifts.copy(),
            "stable": stable,
            "max_interp_rel": None,
            "weighted_error": None,
        }
        if cfg.track_residuals and stable:
            try:
                rep = optimality.interpolatory_residuals(G, model_t, W)
                record["max_interp_rel"] = rep.max_interpolatory_rel
            except (MorError, np.linalg.LinAlgError):
                pass
        if cfg.track_weighted_error and stable:
            try:
                record["weighted_error"] = fmap.weighted_error_norm(G, model_t, W)
            except (MorError, np.linalg.LinAlgError):
                pass
        history.append(record)
        current = (model_t, Z_r, proj, data, stable)
        if best is None or metric < best[0]:
            best = (metric, current)
        if metric <= cfg.tol:
            converged = True
            break
        data = data_next
    if not converged:
        flags.append("max-iterations")
        current = best[1]
    model_t, Z_r, proj, data_used, stable = current
    if not stable:
        if cfg.stability_repair:
            flags.append("unstable-final")
        else:
            raise UnstableReducedModel(
                "final reduced matrix is unstable and stability repair is off"
            )
    diagnostics = None
    if stable:
        try:
            diagnostics = optimality.interpolatory_residuals(G, model_t, W)
        except (MorError, np.linalg.LinAlgError):
            flags.append("diagnostics-failed")
    return ReducedModel(
        system=model_t,
        Z_r=Z_r,
        projection=proj,
        diagnostics=diagnostics,
        history=history,
        shifts=data_used,
        converged=converged,
        iterations=len(history),
        flags=flags,
        method="nowi",
        extras={"exactness": exact, "feedthrough_of_input": D0 if has_D else None},
    )


def interpolation_gap(G, W, model, sigma, b, c):
    """Right/left/bitangential interpolation gaps at a shift of the model.

    Evaluates the closed-form gap expressions driven by Z - V_r Z_r; at the
    model's own interpolation points these equal the true differences
    between F[G] and F[G_r] applied to the tangent directions.
    """
    if np.linalg.norm(G.D) > 0:
        raise ValueError("interpolation gaps are defined for zero-feedthrough G")
    F = fmap.build_f_realization(G, W)
    A_r, C_r = model.system.A, model.system.C
    V_r, W_r = model.projection.V_r, model.projection.W_r
    if model.Z_r is None:
        raise ValueError("model carries no Z_r solution")
    ev_r = np.linalg.eigvals(A_r)
    for ev, what in ((ev_r, "A_r"), (np.linalg.eigvals(G.A), "A")):
        if ev.size and np.min(np.abs(ev - sigma)) <= 1e-12 * (1.0 + abs(sigma)):
            raise PoleHit(f"shift {sigma} lies in the spectrum of {what}")
    E = F.Z - V_r @ model.Z_r
    T1 = E @ W.C_w.T
    n_r = A_r.shape[0]
    res_r = np.linalg.solve(sigma * np.eye(n_r) - A_r, W_r.T.astype(complex))
    H1 = C_r @ res_r
    H1p = -C_r @ np.linalg.solve(sigma * np.eye(n_r) - A_r, res_r)
    N = linalg.kernel_basis(W.D_w.T)
    K0, _ = _kernel_weight_inverse(W, F.P_w, N)
    if W.n_w:
        rhs = (F.P_w @ W.C_w.T + W.B_w @ W.D_w.T).astype(complex)
        res_w = np.linalg.solve(sigma * np.eye(W.n_w) - W.A_w, rhs)
        H2 = W.C_w.T @ K0 @ W.C_w @ res_w
        H2p = -W.C_w.T @ K0 @ W.C_w @ np.linalg.solve(
            sigma * np.eye(W.n_w) - W.A_w, res_w
        )
    else:
        H2 = np.zeros((0, G.m), dtype=complex)
        H2p = np.zeros((0, G.m), dtype=complex)
    gap_matrix = H1 @ T1 - G.C @ E @ H2
    gap_matrix_p = H1p @ T1 - G.C @ E @ H2p
    b = np.asarray(b, dtype=complex).reshape(-1)
    c = np.asarray(c, dtype=complex).reshape(-1)
    right = gap_matrix @ b
    left = c @ gap_matrix
    bitan = complex(c @ gap_matrix_p @ b)
    return right, left, bitan


def _psd_sqrt(M):
    lam, U = np.linalg.eigh(0.5 * (M + M.T))
    lam = np.clip(lam, 0.0, None)
    return U @ np.diag(np.sqrt(lam))


def fwbt(G, W, n_r):
    """Frequency-weighted balanced truncation (input-weighted variant).

    The controllability Gramian is the leading block of the cascade
    Lyapunov solution for [G W]; the observability Gramian is the standard
    one of G.  Balancing uses the square-root method with rank-revealing
    truncation; the reduced feedthrough is zero.
    """
    if not lti.is_stable(G):
        raise NonStableSystem("fwbt requires a stable system")
    if np.linalg.norm(G.D) > 0:
        raise InfiniteNorm("fwbt requires zero feedthrough")
    if G.m != W.m:
        raise DimensionMismatch(
            f"system has {G.m} inputs but weight acts on {W.m}"
        )
    n = G.n
    if not 0 < n_r <= n:
        raise ValueError(f"order must lie in [1, {n}], got {n_r}")
    GW = fmap.cascade_with_weight(G, W)
    P_full = linalg.solve_lyapunov(GW.A, GW.B @ GW.B.T)
    P = P_full[:n, :n]
    Q = linalg.solve_lyapunov(G.A.T, G.C.T @ G.C)
    S = _psd_sqrt(P)
    R = _psd_sqrt(Q)
    U, sv, Vh = np.linalg.svd(R.T @ S)
    flags = []
    rank = int(np.sum(sv > sv[0] * 1e-13)) if sv.size and sv[0] > 0 else 0
    if rank == 0:
        raise RankDeficient("Gramian product is numerically zero")
    n_eff = min(n_r, rank)
    if n_eff < n_r:
        flags.append("rank-truncated")
    scale = 1.0 / np.sqrt(sv[:n_eff])
    T1 = S @ Vh[:n_eff].T @ np.diag(scale)
    T2 = R @ U[:, :n_eff] @ np.diag(scale)
    A_r = T2.T @ G.A @ T1
    B_r = T2.T @ G.B
    C_r = G.C @ T1
    model = StateSpace(A_r, B_r, C_r)
    stable = lti.is_stable(model)
    if not stable:
        flags.append("unstable-final")
    Z_r = None
    diagnostics = None
    if stable:
        F = fmap.build_f_realization(G, W)
        try:
            Z_r = linalg.solve_sylvester(
                A_r, W.A_w.T, B_r @ (W.C_w @ F.P_w + W.D_w @ W.B_w.T)
            )
            diagnostics = optimality.interpolatory_residuals(G, model, W)
        except (MorError, np.linalg.LinAlgError):
            flags.append("diagnostics-failed")
    return ReducedModel(
        system=model,
        Z_r=Z_r,
        projection=ProjectionPair(T1, T2, [{"kind": "balanced-truncation"}]),
        diagnostics=diagnostics,
        history=[],
        shifts=None,
        converged=True,
        iterations=1,
        flags=flags,
        method="fwbt",
        extras={"hankel_singular_values": sv},
    )
