"""Convex quadratic programs over the probability simplex.

Solves ``min u^T M u  s.t.  sum(u) = 1, u >= 0`` for symmetric PSD ``M``.
A projected-gradient phase (Barzilai-Borwein step, exact simplex projection,
exact line search) locates the support, and a primal active-set pass then
solves the problem exactly on that support.
"""

from dataclasses import dataclass
import logging

import numpy as np

from .errors import NonConvergence

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QpProblem:
    M: np.ndarray
    tol: float = 1e-10
    max_iter: int = 100_000

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
            raise ValueError(f"QP matrix must be square and non-empty, got shape {M.shape}")
        scale = max(np.abs(M).max(), 1.0)
        if np.abs(M - M.T).max() > 1e-12 * scale:
            raise ValueError("QP matrix is not symmetric")
        object.__setattr__(self, "M", M)


@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based, exact)."""
    v = np.asarray(v, dtype=float)
    a = np.sort(v)[::-1]
    css = np.cumsum(a) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(a - css / ind > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def kkt_residual(M, u):
    """Simplex stationarity defect ``u^T M u - min_k (M u)_k``.

    With ``lam/2 = min_k (M u)_k`` every coordinate already satisfies
    ``(M u)_k >= lam/2``, so what remains is the weighted gap on the support,
    ``sum_k u_k ((M u)_k - lam/2)``. It is zero exactly at a minimiser and
    bounds the objective suboptimality by twice its value.
    """
    g = np.asarray(M) @ u
    return max(float(u @ g - g.min()), 0.0)


def _scale(M):
    return max(float(np.abs(M).max()), np.finfo(float).tiny)


def _projected_gradient(M, u, max_iter, tol_abs):
    """Monotone projected gradient with BB steps; stops once the support settles."""
    g = M @ u
    step = 1.0 / _scale(M)
    support = u > 0
    stable = 0
    it = 0
    for it in range(1, max_iter + 1):
        d = project_simplex(u - step * g) - u
        Md = M @ d
        curv = d @ Md
        slope = d @ g
        if slope >= 0 or not np.any(d):
            break
        tau = 1.0 if curv <= 0 else min(1.0, -slope / curv)
        s = tau * d
        u = u + s
        u[u < 0] = 0.0
        g = g + tau * Md
        ss = s @ s
        sy = tau * tau * curv
        step = ss / sy if sy > 0 else 1.0 / _scale(M)
        if u @ g - g.min() <= tol_abs:
            break
        new_support = u > 0
        stable = stable + 1 if np.array_equal(new_support, support) else 0
        support = new_support
        if stable >= 3:
            break
    return u, it


def _solve_on_support(M, free):
    """Minimiser of the QP restricted to ``free`` with only ``sum(u) = 1`` imposed."""
    idx = np.nonzero(free)[0]
    n = idx.size
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = 2.0 * M[np.ix_(idx, idx)]
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
        if np.abs(kkt @ sol - rhs).max() > 1e-9:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return idx, sol[:n]


def _active_set(M, u, max_iter, tol_abs):
    """Primal active-set method started from a feasible ``u``."""
    n = u.size
    scale = _scale(M)
    free = u > 0
    it = 0
    for it in range(1, max_iter + 1):
        idx, y = _solve_on_support(M, free)
        p = y - u[idx]
        neg = p < 0
        blocking = y < -64 * _EPS
        if np.any(blocking & neg):
            ratios = np.full(idx.size, np.inf)
            sel = blocking & neg
            ratios[sel] = u[idx][sel] / -p[sel]
            j = int(np.argmin(ratios))
            alpha = min(1.0, ratios[j])
            u[idx] = u[idx] + alpha * p
            u[idx[j]] = 0.0
            u[u < 0] = 0.0
            free[idx[j]] = False
            u /= u.sum()
            continue
        u = np.zeros(n)
        u[idx] = np.maximum(y, 0.0)
        u /= u.sum()
        free = u > 0
        g = M @ u
        level = u @ g
        viol = np.where(free, np.inf, g - level)
        j = int(np.argmin(viol))
        if viol[j] >= -64 * _EPS * scale or u @ g - g.min() <= tol_abs:
            break
        free[j] = True
    return u, it


def solve(problem, start=None):
    """Minimise ``u^T M u`` over the probability simplex.

    Parameters
    ----------
    problem : QpProblem
        Matrix and stopping rule. ``tol`` applies to :func:`kkt_residual`
        relative to ``max(1, max|M|)``.
    start : array_like, optional
        Starting point, projected onto the simplex. Defaults to uniform.

    Returns
    -------
    QpSolution

    Raises
    ------
    NonConvergence
        If the residual is still above tolerance after ``max_iter`` iterations.
    """
    M = problem.M
    n = M.shape[0]
    u = np.full(n, 1.0 / n) if start is None else project_simplex(start)
    tol_abs = problem.tol * max(1.0, float(np.abs(M).max()))

    total = 0
    best = u
    best_res = kkt_residual(M, u)
    while total < problem.max_iter and best_res > tol_abs:
        u, it_pg = _projected_gradient(M, u, min(problem.max_iter - total, 50 * n), tol_abs)
        total += it_pg
        res = kkt_residual(M, u)
        it_as = 0
        if res > tol_abs and total < problem.max_iter:
            u_as, it_as = _active_set(M, u.copy(), min(problem.max_iter - total, 10 * n + 10), tol_abs)
            total += it_as
            res_as = kkt_residual(M, u_as)
            if res_as <= res:
                u, res = u_as, res_as
        if res < best_res:
            best, best_res = u, res
        if it_pg + it_as == 0:
            break  # stalled; report below
    if best_res > tol_abs:
        raise NonConvergence(
            f"simplex QP did not converge in {total} iterations (residual {best_res:.3e})",
            best=best,
            residual=best_res,
        )
    u = best
    return QpSolution(u=u, objective=float(u @ M @ u), kkt_residual=best_res, iterations=total)
