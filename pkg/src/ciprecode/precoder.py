"""Constructive-interference precoding when K may exceed Nt.

Pipeline for one channel ``H`` (K x Nt) and symbol vector ``s``:

1. consistency operator ``T = [H H^H (H H^H)^+ - I] diag(s)``; any admissible
   pre-scaling vector satisfies ``T Lam = 0``;
2. real expansion ``T_E`` and its null-space basis ``D`` (right singular vectors
   for zero singular values), so ``Lam_E = D beta``;
3. power form ``P = diag(s^*) (H H^H)^+ diag(s)``, its real expansion ``P_E``
   and reduced form ``Q_E = D^T P_E D``;
4. dual QP matrix ``M_qp = S D Q_E^+ D^T S^T`` minimised over the simplex;
5. closed-form recovery of ``beta``, ``Lam`` and ``W`` from the dual vector.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from . import simplex_qp
from .constellation import threshold_cot
from .errors import DegenerateDual, DegeneratePowerForm, NoNullSpace

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


def realify_matrix(A):
    """Real 2n x 2m block form ``[[Re A, -Im A], [Im A, Re A]]``."""
    A = np.asarray(A)
    re, im = A.real, A.imag
    return np.block([[re, -im], [im, re]])


def realify_vector(a):
    a = np.asarray(a)
    return np.concatenate([a.real, a.imag])


def complexify_vector(a_E):
    """Inverse of :func:`realify_vector`: ``[I, jI] @ a_E``."""
    a_E = np.asarray(a_E, dtype=float)
    n = a_E.size // 2
    return a_E[:n] + 1j * a_E[n:]


@dataclass(frozen=True)
class ChannelSvd:
    """Pieces of the SVD of H that the pipeline reuses."""

    gram_pinv: np.ndarray  # (H H^H)^+
    right_pinv: np.ndarray  # H^H (H H^H)^+
    complement: np.ndarray  # orthonormal basis of range(H)^perp in C^K
    rank: int


def channel_svd(H, rank_tol=None):
    """Pseudo-inverse quantities of ``H H^H`` from the SVD of H (no Gram inversion)."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K, Nt = H.shape
    U, sv, Vh = np.linalg.svd(H, full_matrices=True)
    tol = max(K, Nt) * _EPS if rank_tol is None else rank_tol
    r = int(np.count_nonzero(sv > tol * sv[0])) if sv.size and sv[0] > 0 else 0
    Ur = U[:, :r]
    inv2 = 1.0 / sv[:r] ** 2
    gram_pinv = (Ur * inv2) @ Ur.conj().T
    right_pinv = (Vh[:r].conj().T / sv[:r]) @ Ur.conj().T
    return ChannelSvd(gram_pinv, right_pinv, U[:, r:], r)


def build_T(H, s, rank_tol=None, svd=None):
    """Consistency operator ``T = [H H^H (H H^H)^+ - I] diag(s)``.

    The bracket is minus the projector onto the orthogonal complement of
    range(H), which is assembled from the SVD complement basis. For K <= Nt
    and full-rank H the complement is empty and T is exactly zero.
    """
    if svd is None:
        svd = channel_svd(H, rank_tol)
    Up = svd.complement
    return -(Up @ Up.conj().T) * np.asarray(s)[None, :]


def build_P(H, s, rank_tol=None, svd=None):
    """Power form ``P = diag(s^*) (H H^H)^+ diag(s)`` (Hermitian PSD)."""
    if svd is None:
        svd = channel_svd(H, rank_tol)
    s = np.asarray(s)
    P = s.conj()[:, None] * svd.gram_pinv * s[None, :]
    return 0.5 * (P + P.conj().T)


def null_space_basis(T_E, rank_tol=None):
    """Orthonormal basis of the null space of a real matrix.

    Singular values ``<= rank_tol * sigma_max`` count as zero; ``rank_tol``
    defaults to ``n * eps`` for ``n`` columns. Raises NoNullSpace when every
    singular value is nonzero.
    """
    T_E = np.atleast_2d(np.asarray(T_E, dtype=float))
    n = T_E.shape[1]
    tol = n * _EPS if rank_tol is None else rank_tol
    _, sv, Vt = np.linalg.svd(T_E, full_matrices=True)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.count_nonzero(sv > tol * smax))
    if rank >= n:
        raise NoNullSpace(f"consistency operator has full column rank {n}; only the zero pre-scaling vector satisfies it")
    return Vt[rank:].T.copy()


def selection_matrix(K, cot):
    """Constraint-selection matrix mapping ``Lam_E`` to both CI half-plane margins.

    Row k gives ``Re lam_k - cot * Im lam_k`` and row K + k gives
    ``Re lam_k + cot * Im lam_k``.
    """
    I = np.eye(K)
    return np.block([[I, -cot * I], [I, cot * I]])


def _sym_pinv(Q, rank_tol):
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    wmax = max(np.abs(w).max(), 0.0)
    keep = w > rank_tol * wmax
    if not np.all(keep):
        log.warning("reduced power form is rank deficient (%d of %d eigenvalues kept)", keep.sum(), w.size)
    Vk = V[:, keep]
    return (Vk / w[keep]) @ Vk.T


def build_qp_matrix(D, P_E, S_sel, rank_tol=None):
    """Reduced power form ``Q_E``, its pseudo-inverse and the QP matrix.

    Returns ``(Q_E, Q_E_pinv, M_qp)`` with ``M_qp = S D Q_E^+ D^T S^T``.
    """
    Q_E = D.T @ P_E @ D
    Q_E = 0.5 * (Q_E + Q_E.T)
    tol = Q_E.shape[0] * _EPS if rank_tol is None else rank_tol
    scale = max(np.abs(P_E).max(), np.finfo(float).tiny)
    if Q_E.size == 0 or np.abs(Q_E).max() <= tol * scale:
        raise DegeneratePowerForm("reduced power form is numerically zero")
    Q_pinv = _sym_pinv(Q_E, tol)
    A = S_sel @ D
    M_qp = A @ Q_pinv @ A.T
    return Q_E, Q_pinv, 0.5 * (M_qp + M_qp.T)


@dataclass(frozen=True)
class NullSpaceBundle:
    """Everything the dual QP and the recovery step need for one (H, s)."""

    H: np.ndarray
    s: np.ndarray
    order: int
    cot: float
    T_E: np.ndarray
    D: np.ndarray
    P_E: np.ndarray
    Q_E: np.ndarray
    Q_E_pinv: np.ndarray
    M_qp: np.ndarray
    S_sel: np.ndarray
    right_pinv: np.ndarray
    channel_rank: int
    strict: bool = False

    @property
    def K(self):
        return self.H.shape[0]


def build_bundle(H, s, M, rank_tol=None, strict=False):
    """Assemble the null-space bundle for one channel and symbol vector.

    With ``strict=True`` the imaginary parts of the pre-scaling vector are
    forced to zero by appending the K imaginary-part selector rows to the
    consistency operator before the null-space computation.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    s = np.asarray(s, dtype=complex)
    K = H.shape[0]
    if s.shape != (K,):
        raise ValueError(f"symbol vector has shape {s.shape}, expected ({K},)")
    svd = channel_svd(H)
    T_E = realify_matrix(build_T(H, s, svd=svd))
    tol = 2 * K * _EPS if rank_tol is None else rank_tol
    op = T_E
    if strict:
        op = np.vstack([T_E, np.hstack([np.zeros((K, K)), np.eye(K)])])
    D = null_space_basis(op, tol)
    expected = 2 * svd.rank if not strict else None
    if expected is not None and D.shape[1] != expected:
        log.warning("null space has dimension %d, expected %d from rank(H) = %d",
                    D.shape[1], expected, svd.rank)
    P_E = realify_matrix(build_P(H, s, svd=svd))
    cot = threshold_cot(M)
    S_sel = selection_matrix(K, cot)
    Q_E, Q_pinv, M_qp = build_qp_matrix(D, P_E, S_sel, tol)
    return NullSpaceBundle(
        H=H, s=s, order=int(M), cot=cot, T_E=T_E, D=D, P_E=P_E, Q_E=Q_E,
        Q_E_pinv=Q_pinv, M_qp=M_qp, S_sel=S_sel, right_pinv=svd.right_pinv,
        channel_rank=svd.rank, strict=strict,
    )


@dataclass(frozen=True)
class PrecodeSolution:
    W: np.ndarray
    Lambda: np.ndarray
    Lambda_E: np.ndarray
    beta: np.ndarray
    alpha0: float
    u: np.ndarray
    t_star: float
    feasible: bool
    qp_objective: float = float("nan")
    kkt_residual: float = float("nan")
    qp_iterations: int = 0
    # set when the dual value was zero and uniform dual weights were used instead
    fallback_dual: bool = False
    extras: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def x(self):
        """Composite transmit vector ``W s``."""
        return self.extras["x"]

    def duality_residual(self, p0=1.0):
        """``|t* - sqrt(p0 u^T M_qp u)|``; zero at an optimum with t* > 0."""
        return abs(self.t_star - np.sqrt(p0 * max(self.qp_objective, 0.0)))


def ci_margins(Lambda, t, cot):
    """``Re lam_k - t - cot |Im lam_k|`` for every user (>= 0 inside the CI region)."""
    Lambda = np.asarray(Lambda)
    return Lambda.real - t - cot * np.abs(Lambda.imag)


def tstar_from_lambda(Lambda, cot):
    return float(np.min(Lambda.real - cot * np.abs(Lambda.imag)))


def compute_tstar(beta, D, cot):
    """Best CI threshold for fixed weights: the smallest entry of ``S D beta``.

    Row k of ``D`` is ``d_k``; the two margins of user k are
    ``d_k beta -/+ cot * d_{k+K} beta``.
    """
    lam_E = D @ beta
    K = lam_E.size // 2
    re, im = lam_E[:K], lam_E[K:]
    return float(np.min(np.minimum(re - cot * im, re + cot * im)))


def is_feasible(t_star):
    """Multiplexing is feasible only when every user ends strictly inside its sector."""
    if isinstance(t_star, PrecodeSolution):
        t_star = t_star.t_star
    return bool(t_star > 0)


def _degenerate_level(bundle):
    return 1e3 * _EPS * max(1.0, float(np.abs(bundle.M_qp).max()))


def recover_solution(u, bundle, p0=1.0, degenerate_tol=None):
    """Closed-form primal solution for a dual vector ``u`` on the simplex.

    ``alpha0 = sqrt(u^T M_qp u / (4 p0))``,
    ``beta = Q_E^+ D^T S^T u / (2 alpha0)``, ``Lam_E = D beta``,
    ``W = H^H (H H^H)^+ diag(Lam) s s^H / K``.
    """
    u = np.asarray(u, dtype=float)
    q = float(u @ bundle.M_qp @ u)
    level = _degenerate_level(bundle) if degenerate_tol is None else degenerate_tol
    if not q > level:
        raise DegenerateDual(f"dual value u^T M u = {q:.3e} is not positive")
    alpha0 = np.sqrt(q / (4.0 * p0))
    A = bundle.S_sel @ bundle.D
    beta = bundle.Q_E_pinv @ (A.T @ u) / (2.0 * alpha0)
    # pseudo-inverse and rounding can leave beta slightly off the power sphere
    pw = float(beta @ bundle.Q_E @ beta)
    beta = beta * np.sqrt(p0 / pw)
    lam_E = bundle.D @ beta
    lam = complexify_vector(lam_E)
    s = bundle.s
    x = bundle.right_pinv @ (lam * s)
    W = np.outer(x, s.conj()) / bundle.K
    t_star = compute_tstar(beta, bundle.D, bundle.cot)
    return PrecodeSolution(
        W=W, Lambda=lam, Lambda_E=lam_E, beta=beta, alpha0=float(alpha0), u=u,
        t_star=t_star, feasible=is_feasible(t_star), qp_objective=q,
        extras={"x": x},
    )


def precode(H, s, p0=1.0, M=4, rank_tol=None, qp_tol=1e-10, qp_max_iter=100_000,
            strict=False, bundle=None):
    """CI precoder for one symbol slot.

    Parameters
    ----------
    H : (K, Nt) complex array
    s : (K,) complex array of unit-modulus PSK symbols
    p0 : float
        Total transmit power.
    M : int
        PSK order; sets the threshold angle ``pi / M``.

    Returns
    -------
    PrecodeSolution
        Always complete. ``feasible`` is False when ``t* <= 0``; the caller
        decides on any fallback.
    """
    if not p0 > 0:
        raise ValueError(f"p0 must be positive, got {p0}")
    if bundle is None:
        bundle = build_bundle(H, s, M, rank_tol=rank_tol, strict=strict)
    qp = simplex_qp.solve(simplex_qp.QpProblem(bundle.M_qp, tol=qp_tol, max_iter=qp_max_iter))
    fallback = False
    try:
        sol = recover_solution(qp.u, bundle, p0)
    except DegenerateDual:
        # zero dual value: no direction reaches t* > 0; use uniform dual weights
        # (maximal total real pre-scaling) to still return a full solution
        n = bundle.M_qp.shape[0]
        sol = recover_solution(np.full(n, 1.0 / n), bundle, p0, degenerate_tol=0.0)
        fallback = True
    return PrecodeSolution(
        W=sol.W, Lambda=sol.Lambda, Lambda_E=sol.Lambda_E, beta=sol.beta,
        alpha0=sol.alpha0, u=qp.u if not fallback else sol.u, t_star=sol.t_star,
        feasible=sol.feasible, qp_objective=qp.objective,
        kkt_residual=qp.kkt_residual, qp_iterations=qp.iterations,
        fallback_dual=fallback, extras=dict(sol.extras, bundle=bundle),
    )


def invariant_residuals(H, s, W, Lambda, t_star, p0, M):
    """Residuals of the structural properties every CI solution must satisfy.

    Keys
    ----
    power : ``| ||W s||^2 - p0 | / p0``
    prescale : ``||H W s - Lam * s|| / max(1, ||Lam||)``
    equal_columns : ``max_{i,j} ||w_i s_i - w_j s_j||``
    margin_min : smallest CI margin ``(Re lam - t*) tan(pi/M) - |Im lam|``
        (``Re lam - t*`` for BPSK)
    binding : smallest ``|margin|``
    null_space : ``||T Lam||_inf / ||Lam||_inf``
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    s = np.asarray(s, dtype=complex)
    Lambda = np.asarray(Lambda, dtype=complex)
    x = W @ s
    cols = W * s[None, :]
    spread = float(np.linalg.norm(cols[:, :, None] - cols[:, None, :], axis=0).max())
    order = int(M)
    if order == 2:
        margins = Lambda.real - t_star
    else:
        margins = (Lambda.real - t_star) * np.tan(np.pi / order) - np.abs(Lambda.imag)
    T = build_T(H, s)
    lam_inf = max(float(np.abs(Lambda).max()), np.finfo(float).tiny)
    return {
        "power": abs(float(np.vdot(x, x).real) - p0) / p0,
        "prescale": float(np.linalg.norm(H @ x - Lambda * s)) / max(1.0, float(np.linalg.norm(Lambda))),
        "equal_columns": spread,
        "margin_min": float(margins.min()),
        "binding": float(np.abs(margins).min()),
        "null_space": float(np.abs(T @ Lambda).max()) / lam_inf,
    }
