"""Regularized zero-forcing baseline and a direct reference solver for the
CI power-constrained problem.

The reference solver works on the composite transmit vector ``x = W s`` in
2 Nt real variables. For a fixed threshold ``t`` the CI constraints are
``G x >= t`` (two half-planes per user), and the minimum-norm feasible ``x``
is found with a log-barrier interior-point method. Bisection on ``t`` then
finds the largest threshold reachable with power ``p0``. None of this shares
code with the null-space pipeline in :mod:`ciprecode.precoder`.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import linprog

from .constellation import threshold_cot
from .errors import Infeasible, NonConvergence


def rzf_precode(H, s, p0=1.0, alpha=None, sigma2=None):
    """Regularized zero-forcing, normalised per symbol vector.

    ``W = c H^H (H H^H + alpha I)^-1`` with ``c`` such that ``||W s||^2 = p0``.
    ``alpha`` defaults to ``K * sigma2`` when ``sigma2`` is given.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K, Nt = H.shape
    if alpha is None:
        if sigma2 is None:
            raise ValueError("rzf_precode needs alpha or sigma2")
        alpha = K * sigma2
    if alpha < 0:
        raise ValueError(f"regularizer must be >= 0, got {alpha}")
    if alpha == 0 and K > Nt:
        raise np.linalg.LinAlgError("H H^H is singular for K > Nt; RZF needs alpha > 0")
    gram = H @ H.conj().T + alpha * np.eye(K)
    F = np.linalg.solve(gram.T, H.conj()).T  # H^H gram^-1
    v = F @ s
    nv = np.linalg.norm(v)
    if nv == 0:
        raise np.linalg.LinAlgError("RZF precoded vector is zero")
    return F * (math.sqrt(p0) / nv)


def ci_constraint_matrix(H, s, M):
    """Real 2K x 2Nt matrix G with ``G x_E`` listing both CI margins per user.

    ``lam_k = h_k^T x conj(s_k)``; rows give ``Re lam_k -/+ cot * Im lam_k``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    a = H * np.asarray(s).conj()[:, None]
    re_row = np.hstack([a.real, -a.imag])
    im_row = np.hstack([a.imag, a.real])
    cot = threshold_cot(M)
    return np.vstack([re_row - cot * im_row, re_row + cot * im_row])


def _cone_direction(G):
    """Point ``x`` with ``G x >= sigma`` maximising sigma over the unit box.

    Returns ``(x, sigma)``; ``sigma <= 0`` means the CI cone has empty interior.
    """
    m, n = G.shape
    # variables [x, sigma]; maximise sigma s.t. sigma - G x <= 0, -1 <= x <= 1
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-G, np.ones((m, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m),
                  bounds=[(-1, 1)] * n + [(None, 1.0)], method="highs")
    if res.status != 0:
        raise NonConvergence(f"feasibility LP failed: {res.message}")
    return res.x[:n], float(res.x[-1])


def _barrier_min_norm(G, b, x0, gap_tol=1e-9, max_newton=200):
    """``min ||x||^2 s.t. G x >= b`` from a strictly feasible ``x0``.

    Stops once the barrier gap ``m / tau`` is below ``gap_tol`` relative to
    ``max(1, ||x||^2)``. Thin CI cones give minimisers with large norm, for
    which an absolute gap would push ``tau`` past double precision.
    """
    m = G.shape[0]
    x = x0.copy()
    tau = m / max(x @ x, 1e-12)
    total = 0
    while True:
        for _ in range(max_newton):
            r = G @ x - b
            inv = 1.0 / r
            grad = 2 * tau * x - G.T @ inv
            hess = 2 * tau * np.eye(x.size) + (G.T * inv**2) @ G
            try:
                dx = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec = -grad @ dx
            # objective error of a centring point is about dec / tau
            if dec / 2 <= max(1e-10, 1e-12 * tau * (x @ x)):
                break
            Gdx = G @ dx
            step = 1.0
            shrink = Gdx < 0
            if np.any(shrink):
                step = min(1.0, 0.99 * np.min(-r[shrink] / Gdx[shrink]))
            f0 = tau * (x @ x) - np.log(r).sum()
            while step >= 1e-14:
                xn = x + step * dx
                rn = G @ xn - b
                if np.all(rn > 0) and tau * (xn @ xn) - np.log(rn).sum() <= f0 - 0.25 * step * dec:
                    break
                step *= 0.5
            else:
                # rounding floor: no representable descent left at this tau
                break
            moved = np.linalg.norm(xn - x)
            x = xn
            total += 1
            if moved <= 1e-14 * max(1.0, np.linalg.norm(x)):
                break
        else:
            raise NonConvergence("barrier Newton iterations did not converge",
                                 best=x, residual=dec)
        if m / tau <= gap_tol * max(1.0, x @ x):
            return x, total
        tau *= 10.0


def min_norm_ci(H, s, t, M, gap_tol=1e-9, _cone=None):
    """Minimum-norm transmit vector meeting every CI constraint at threshold ``t``.

    Returns a complex length-Nt vector. Raises Infeasible when no vector
    reaches ``t`` (only possible for ``t > 0``, when the CI cone is empty).
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    Nt = H.shape[1]
    if t <= 0:
        # x = 0 already satisfies G x >= t and has the least norm
        return np.zeros(Nt, dtype=complex)
    G = ci_constraint_matrix(H, s, M)
    direction, sigma = _cone if _cone is not None else _cone_direction(G)
    if sigma <= 1e-12:
        raise Infeasible("no transmit vector places every user strictly inside its sector")
    x0 = direction * (2.0 * t / sigma)
    x, _ = _barrier_min_norm(G, np.full(G.shape[0], float(t)), x0, gap_tol)
    return x[:Nt] + 1j * x[Nt:]


@dataclass(frozen=True)
class OracleResult:
    t_star: float
    x: np.ndarray
    W: np.ndarray
    Lambda: np.ndarray
    bisection_iters: int
    feasible: bool


def solve_p1_oracle(H, s, p0=1.0, M=4, tol_bisect=1e-6, max_expand=60):
    """Largest CI threshold under total power ``p0``, by bisection on ``t``.

    A threshold is reachable iff the minimum-norm CI vector for it has
    squared norm ``<= p0``. The returned ``x`` is rescaled so the power
    constraint is active, and ``W = x s^H / K``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    s = np.asarray(s, dtype=complex)
    K, Nt = H.shape
    G = ci_constraint_matrix(H, s, M)
    cone = _cone_direction(G)

    def reachable(t):
        try:
            x = min_norm_ci(H, s, t, M, _cone=cone)
        except Infeasible:
            return False, None
        return float(np.vdot(x, x).real) <= p0, x

    lo, x_lo = -1.0, np.zeros(Nt, dtype=complex)
    hi = math.sqrt(p0) * float(np.linalg.norm(H, axis=1).max())
    for _ in range(max_expand):
        ok, _ = reachable(hi)
        if not ok:
            break
        lo, hi = hi, 2 * hi
    else:
        raise NonConvergence("could not bracket the optimal threshold")

    iters = 0
    while hi - lo > tol_bisect:
        mid = 0.5 * (lo + hi)
        ok, x = reachable(mid)
        if ok:
            lo, x_lo = mid, x
        else:
            hi = mid
        iters += 1

    norm = float(np.linalg.norm(x_lo))
    if lo > 0 and norm > 0:
        x = x_lo * (math.sqrt(p0) / norm)
        xe = np.concatenate([x.real, x.imag])
        t_star = float(np.min(G @ xe))
        feasible = t_star > 0
    else:
        x = np.zeros(Nt, dtype=complex)
        t_star = lo
        feasible = False
    lam = (H @ x) * s.conj()
    W = np.outer(x, s.conj()) / K
    return OracleResult(t_star=t_star, x=x, W=W, Lambda=lam, bisection_iters=iters, feasible=feasible)
