"""Dense bounded-variable primal simplex.

Small and deliberately plain: it is a correctness oracle for the per-slot
greedy solver, not something to put on a hot path. Bland's rule is used for
both pricing and the ratio test, so it terminates on degenerate problems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..controller import SlotProblem
from ..model import SlotDecision


class InfeasibleError(RuntimeError):
    pass


class UnboundedError(RuntimeError):
    pass


@dataclass(frozen=True)
class DenseLp:
    """minimise c @ x  s.t.  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  lo <= x <= hi."""

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.c)
        for name in ("c", "A_ub", "b_ub", "lo", "hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.A_eq is None:
            object.__setattr__(self, "A_eq", np.zeros((0, n)))
            object.__setattr__(self, "b_eq", np.zeros(0))
        else:
            object.__setattr__(self, "A_eq", np.asarray(self.A_eq, dtype=float))
            object.__setattr__(self, "b_eq", np.asarray(self.b_eq, dtype=float))
        A_ub = self.A_ub.reshape(-1, n) if self.A_ub.size else np.zeros((0, n))
        object.__setattr__(self, "A_ub", A_ub)
        if A_ub.shape[0] != len(self.b_ub) or self.A_eq.shape != (len(self.b_eq), n):
            raise ValueError("inconsistent dimensions")
        if len(self.lo) != n or len(self.hi) != n:
            raise ValueError("bounds must match the number of variables")
        if not np.all(np.isfinite(self.lo)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.lo > self.hi):
            raise InfeasibleError("lo > hi")
        for arr in (self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite coefficient")


@dataclass(frozen=True)
class LpResult:
    x: np.ndarray
    objective: float
    iterations: int


def _simplex(A, b, c, lo, hi, x, basis, tol, max_iter):
    m, n = A.shape
    is_basic = np.zeros(n, dtype=bool)
    is_basic[basis] = True
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise RuntimeError("simplex iteration limit reached")
        B = A[:, basis]
        nonbasic = ~is_basic
        rhs = b - A[:, nonbasic] @ x[nonbasic]
        x[basis] = np.linalg.solve(B, rhs) if m else x[basis]
        y = np.linalg.solve(B.T, c[basis]) if m else np.zeros(0)
        d = c - A.T @ y

        entering, direction = -1, 0
        for j in np.flatnonzero(nonbasic):
            if hi[j] - lo[j] <= tol:
                continue
            at_lower = abs(x[j] - lo[j]) <= abs(x[j] - hi[j])
            if at_lower and d[j] < -tol:
                entering, direction = j, 1
                break
            if not at_lower and d[j] > tol:
                entering, direction = j, -1
                break
        if entering < 0:
            return x, basis, it

        col = np.linalg.solve(B, A[:, entering]) if m else np.zeros(0)
        step = hi[entering] - lo[entering]
        leave_pos, leave_to = -1, None
        for k in range(m):
            rate = direction * col[k]  # basic var k moves by -rate * t
            v = basis[k]
            if rate > tol:
                t = max(x[v] - lo[v], 0.0) / rate
                bound = lo[v]
            elif rate < -tol:
                if not np.isfinite(hi[v]):
                    continue
                t = max(hi[v] - x[v], 0.0) / -rate
                bound = hi[v]
            else:
                continue
            if t < step - tol or (leave_pos >= 0 and abs(t - step) <= tol and v < basis[leave_pos]):
                step, leave_pos, leave_to = t, k, bound
        if not np.isfinite(step):
            raise UnboundedError("objective unbounded below")
        x[entering] += direction * step
        if m:
            x[basis] -= direction * step * col
        if leave_pos >= 0:
            leaving = basis[leave_pos]
            x[leaving] = leave_to
            is_basic[leaving] = False
            is_basic[entering] = True
            basis[leave_pos] = entering


def solve_dense_lp(lp: DenseLp, tol: float = 1e-10, max_iter: int = 10_000) -> LpResult:
    """Two-phase bounded-variable simplex."""
    n = len(lp.c)
    m_ub, m_eq = lp.A_ub.shape[0], lp.A_eq.shape[0]
    m = m_ub + m_eq
    # Standard form: [A_ub I 0; A_eq 0 0] plus one artificial column per row.
    A = np.zeros((m, n + m_ub + m))
    A[:m_ub, :n] = lp.A_ub
    A[m_ub:, :n] = lp.A_eq
    A[:m_ub, n:n + m_ub] = np.eye(m_ub)
    b = np.concatenate([lp.b_ub, lp.b_eq])
    lo = np.concatenate([lp.lo, np.zeros(m_ub), np.zeros(m)])
    hi = np.concatenate([lp.hi, np.full(m_ub, np.inf), np.full(m, np.inf)])
    x = lo.copy()
    x[:n] = np.where(np.isfinite(lp.lo), lp.lo, 0.0)

    res = b - A[:, :n] @ x[:n]
    basis = np.empty(m, dtype=int)
    art0 = n + m_ub
    for k in range(m):
        if k < m_ub and res[k] >= 0:
            basis[k] = n + k
            x[n + k] = res[k]
            hi[art0 + k] = 0.0
        else:
            A[k, art0 + k] = 1.0 if res[k] >= 0 else -1.0
            basis[k] = art0 + k
            x[art0 + k] = abs(res[k])
    iters = 0
    c1 = np.zeros(A.shape[1])
    c1[art0:] = 1.0
    if np.any(c1[basis] > 0):
        x, basis, it = _simplex(A, b, c1, lo, hi, x, basis, tol, max_iter)
        iters += it
        infeas = float(x[art0:].sum())
        if infeas > 1e-8 * max(1.0, float(np.abs(b).max(initial=0.0))):
            raise InfeasibleError(f"phase 1 ended with infeasibility {infeas:.3g}")
    # Artificials stay (possibly basic) but are pinned to zero.
    hi[art0:] = 0.0
    x[art0:] = 0.0
    c2 = np.zeros(A.shape[1])
    c2[:n] = lp.c
    x, basis, it = _simplex(A, b, c2, lo, hi, x, basis, tol, max_iter)
    iters += it
    xs = np.clip(x[:n], lp.lo, lp.hi)
    return LpResult(xs, float(lp.c @ xs), iters)


def p3_dense_lp(problem: SlotProblem) -> DenseLp:
    """Encode the per-slot problem with an epigraph variable g for grid power."""
    n = problem.n
    nv = 2 * n + 1
    c = np.concatenate([problem.w_c, problem.w_h, [problem.grid_unit_cost]])
    A = np.zeros((n + 1, nv))
    for i in range(n):
        A[i, i] = 1.0
        A[i, n + i] = 1.0
    A[n, : 2 * n] = 1.0
    A[n, 2 * n] = -1.0
    b = np.concatenate([problem.cap_joint, [problem.pv_free]])
    g_hi = float(problem.cap_c.sum() + problem.cap_h.sum())
    lo = np.zeros(nv)
    hi = np.concatenate([problem.cap_c, problem.cap_h, [g_hi]])
    return DenseLp(c=c, A_ub=A, b_ub=b, lo=lo, hi=hi)


def lp_solve_p3(problem: SlotProblem) -> Tuple[float, SlotDecision]:
    if problem.n > 20:
        raise ValueError("lp_solve_p3 is meant for instances with at most 20 EVs")
    res = solve_dense_lp(p3_dense_lp(problem))
    n = problem.n
    p_c, p_h = res.x[:n], res.x[n:2 * n]
    decision = SlotDecision.from_loads(
        dict(zip(problem.ev_ids, map(float, p_c))), dict(zip(problem.ev_ids, map(float, p_h))), problem.pv_free
    )
    return problem.objective(p_c, p_h), decision
