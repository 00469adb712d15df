"""ADMM solver for sparse convex quadratic programs.

    minimise    1/2 x' P x + q' x
    subject to  l <= A x <= u

The iteration is the usual operator-splitting scheme on the pair
(x, z = A x) with a quasi-definite KKT factorisation, Ruiz equilibration
and adaptive step size. Because the offline programs here are nearly linear
and highly degenerate, plain ADMM only reaches moderate accuracy in
reasonable time; every few hundred iterations the current active set is
guessed and an equality-constrained KKT system is solved ("polishing"),
which lands on the exact solution once the guess is right.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

INF = 1e20

# Both KKT matrices are quasi-definite, so a symmetric ordering without
# pivoting is stable and keeps the factors sparse.
_LU_OPTS = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))


def _splu(K):
    return spla.splu(K.tocsc(), **_LU_OPTS)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: "KktResiduals"):
        super().__init__(f"{message}: {residuals}")
        self.residuals = residuals


@dataclass(frozen=True)
class KktResiduals:
    primal: float
    stationarity: float
    complementarity: float

    @property
    def worst(self) -> float:
        return max(self.primal, self.stationarity, self.complementarity)

    def __str__(self) -> str:
        return (f"primal={self.primal:.3g} stationarity={self.stationarity:.3g} "
                f"complementarity={self.complementarity:.3g}")


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    y: np.ndarray
    objective: float
    iterations: int
    polished: bool
    residuals: KktResiduals


def kkt_residuals(P, q, A, l, u, x, y) -> KktResiduals:
    """Residuals of the KKT conditions in the problem's own units.

    Sign convention: y > 0 on rows pushing against ``u``, y < 0 against ``l``.
    """
    Ax = A @ x
    primal = float(np.max(np.concatenate([l - Ax, Ax - u, [0.0]])))
    stat = float(np.max(np.abs(P @ x + q + A.T @ y), initial=0.0))
    y_up, y_lo = np.maximum(y, 0.0), np.maximum(-y, 0.0)
    # A multiplier on an infinite side is itself the violation.
    gap_up = np.where(u < INF, np.abs(u - Ax), 1.0)
    gap_lo = np.where(l > -INF, np.abs(Ax - l), 1.0)
    comp = float(np.max(np.concatenate([y_up * gap_up, y_lo * gap_lo, [0.0]])))
    return KktResiduals(primal, stat, comp)


def _ruiz(P, A, q, iters):
    n, m = A.shape[1], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, As = P.copy(), A.copy()
    for _ in range(iters):
        col_p = np.asarray(abs(Ps).max(axis=0).todense()).ravel() if Ps.nnz else np.zeros(n)
        col_a = np.asarray(abs(As).max(axis=0).todense()).ravel() if As.nnz else np.zeros(n)
        row_a = np.asarray(abs(As).max(axis=1).todense()).ravel() if As.nnz else np.zeros(m)
        dn = np.maximum(col_p, col_a)
        dn = 1.0 / np.sqrt(np.clip(np.where(dn == 0, 1.0, dn), 1e-4, 1e4))
        dm = 1.0 / np.sqrt(np.clip(np.where(row_a == 0, 1.0, row_a), 1e-4, 1e4))
        Dn, Dm = sp.diags(dn), sp.diags(dm)
        Ps = (Dn @ Ps @ Dn).tocsc()
        As = (Dm @ As @ Dn).tocsc()
        D *= dn
        E *= dm
    qs = D * q
    col_p = np.asarray(abs(Ps).max(axis=0).todense()).ravel() if Ps.nnz else np.zeros(n)
    c = 1.0 / np.clip(max(float(col_p.mean()), float(np.max(np.abs(qs), initial=0.0))), 1e-4, 1e4)
    return (c * Ps).tocsc(), As, c * qs, D, E, c


def _polish(P, q, A, l, u, active_lo, active_up, x0, y0, delta=1e-7, refine=25):
    """Solve the KKT system with the guessed active rows held at their bounds.

    The regularised factorisation is used as a proximal-point iteration
    started at the ADMM iterate, so directions the active rows leave free
    stay where ADMM put them instead of collapsing to a minimum-norm point.
    """
    n = P.shape[0]
    rows = np.flatnonzero(active_lo | active_up)
    target = np.where(active_up[rows], u[rows], l[rows])
    Aa = A[rows]
    k = len(rows)
    K = sp.bmat([[P, Aa.T], [Aa, None]], format="csc")
    reg = sp.diags(np.concatenate([np.full(n, delta), np.full(k, -delta)]))
    lu = _splu(K + reg)
    rhs = np.concatenate([-q, target])
    sol = np.concatenate([x0, y0[rows]])
    prev = np.inf
    for _ in range(refine):
        r = rhs - K @ sol
        err = float(np.max(np.abs(r), initial=0.0))
        if err < 1e-13 or err > prev:
            break
        prev = err
        sol += lu.solve(r)
    x = sol[:n]
    y = np.zeros(A.shape[0])
    y[rows] = sol[n:]
    return x, y


def _polish_active_set(P, q, A, l, u, active_lo, active_up, x0, y0, eq, rounds, tol=1e-9):
    """Polish, then repair the guess: add violated rows, drop rows whose
    multiplier has the wrong sign, and polish again."""
    best = None
    lo, up = active_lo.copy(), active_up.copy()
    max_changes = max(20, len(l) // 200)
    for _ in range(rounds):
        x, y = _polish(P, q, A, l, u, lo, up, x0, y0)
        res = kkt_residuals(P, q, A, l, u, x, y)
        if best is None or res.worst < best[2].worst:
            best = (x, y, res)
        Ax = A @ x
        drop_up = up & (y < -tol)
        drop_lo = lo & ~eq & (y > tol)
        add_up = ~up & (Ax > u + tol)
        add_lo = ~lo & (Ax < l - tol)
        changes = int(drop_up.sum() + drop_lo.sum() + add_up.sum() + add_lo.sum())
        # a large repair means ADMM has not settled yet; wait for a better guess
        if changes == 0 or changes > max_changes:
            break
        up = (up & ~drop_up) | add_up
        lo = (lo & ~drop_lo) | add_lo
    return best


def solve_qp(
    P, q, A, l, u, *,
    rho: float = 0.1,
    sigma: float = 1e-6,
    alpha: float = 1.6,
    max_iter: int = 50_000,
    eps: float = 1e-7,
    kkt_tol: float = 1e-6,
    scaling_iters: int = 15,
    polish_every: int = 200,
    polish_rounds: int = 8,
    adapt_every: int = 50,
) -> QpResult:
    P = sp.csc_matrix(P)
    A = sp.csc_matrix(A)
    q = np.asarray(q, dtype=float)
    l = np.clip(np.asarray(l, dtype=float), -INF, INF)
    u = np.clip(np.asarray(u, dtype=float), -INF, INF)
    n, m = A.shape[1], A.shape[0]

    Ps, As, qs, D, E, c = _ruiz(P, A, q, scaling_iters)
    ls = np.where(l > -INF, E * l, -INF)
    us = np.where(u < INF, E * u, INF)
    eq = (u - l) < 1e-12
    free = (l <= -INF) & (u >= INF)

    def rho_vec(r):
        v = np.full(m, r)
        v[eq] = 1e3 * r
        v[free] = 1e-6
        return v

    def factor(rv):
        K = sp.bmat([[Ps + sigma * sp.identity(n), As.T], [As, sp.diags(-1.0 / rv)]], format="csc")
        return _splu(K)

    rv = rho_vec(rho)
    lu = factor(rv)
    x = np.zeros(n)
    z = np.clip(np.zeros(m), ls, us)
    y = np.zeros(m)
    best = None
    for it in range(1, max_iter + 1):
        sol = lu.solve(np.concatenate([sigma * x - qs, z - y / rv]))
        xt, nu = sol[:n], sol[n:]
        zt = z + (nu - y) / rv
        x = alpha * xt + (1 - alpha) * x
        zr = alpha * zt + (1 - alpha) * z
        z_new = np.clip(zr + y / rv, ls, us)
        y = y + rv * (zr - z_new)
        z = z_new

        if it % adapt_every == 0 or it % polish_every == 0 or it == max_iter:
            Ax = As @ x
            Px = Ps @ x
            Aty = As.T @ y
            r_prim = float(np.max(np.abs((Ax - z) / E), initial=0.0))
            r_dual = float(np.max(np.abs((Px + qs + Aty) / D), initial=0.0)) / c
            if it % polish_every == 0 or it == max_iter or (r_prim < eps and r_dual < eps):
                active_lo = (z - ls < -y) | eq
                active_up = (us - z < y) & ~eq
                xu, yu = D * x, E * y / c
                xp, yp, res = _polish_active_set(P, q, A, l, u, active_lo, active_up, xu, yu, eq, polish_rounds)
                if best is None or res.worst < best[2].worst:
                    best = (xp, yp, res, True, it)
                if res.worst <= kkt_tol:
                    break
                # Fall back to the raw iterate when it already meets tolerance.
                raw = kkt_residuals(P, q, A, l, u, xu, yu)
                if raw.worst < best[2].worst:
                    best = (xu, yu, raw, False, it)
                if raw.worst <= kkt_tol:
                    break
            if it % adapt_every == 0:
                sp_norm = max(float(np.max(np.abs(Ax), initial=0)), float(np.max(np.abs(z), initial=0)), 1e-12)
                sd_norm = max(float(np.max(np.abs(Px), initial=0)), float(np.max(np.abs(Aty), initial=0)),
                              float(np.max(np.abs(qs), initial=0)), 1e-12)
                rs_p = float(np.max(np.abs(Ax - z), initial=0)) / sp_norm
                rs_d = float(np.max(np.abs(Px + qs + Aty), initial=0)) / sd_norm
                new_rho = float(np.clip(rho * np.sqrt(rs_p / max(rs_d, 1e-30)), 1e-6, 1e6))
                if new_rho > 5 * rho or new_rho < rho / 5:
                    rho = new_rho
                    rv = rho_vec(rho)
                    lu = factor(rv)
    xb, yb, res, polished, it_b = best
    if res.worst > kkt_tol:
        raise ConvergenceError(f"no convergence after {it} iterations", res)
    obj = float(0.5 * xb @ (P @ xb) + q @ xb)
    return QpResult(xb, yb, obj, it, polished, res)
