import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ciprecode.errors import NonConvergence
from ciprecode.simplex_qp import (
    QpProblem, _projected_gradient, kkt_residual, project_simplex, solve,
)


def random_psd(rng, n, rank=None):
    A = rng.standard_normal((rank or n, n))
    return A.T @ A


def grid_minimum(M, step=1e-3):
    """Brute-force minimum of u^T M u over a simplex grid (n <= 3)."""
    n = M.shape[0]
    g = np.arange(0, 1 + step / 2, step)
    if n == 1:
        return float(M[0, 0])
    if n == 2:
        U = np.stack([g, 1 - g], axis=1)
    else:
        a, b = np.meshgrid(g, g, indexing="ij")
        keep = a + b <= 1 + 1e-12
        U = np.stack([a[keep], b[keep], np.clip(1 - a[keep] - b[keep], 0, None)], axis=1)
    return float(np.min(np.einsum("ij,jk,ik->i", U, M, U)))


@pytest.mark.parametrize("M, u, obj", [
    (np.eye(2), [0.5, 0.5], 0.5),
    (np.diag([0.0, 1.0]), [1.0, 0.0], 0.0),
    (np.diag([1.0, 100.0]), [100 / 101, 1 / 101], 100 / 101),
])
def test_analytic_examples(M, u, obj):
    sol = solve(QpProblem(M))
    assert np.allclose(sol.u, u, atol=1e-10)
    assert sol.objective == pytest.approx(obj, abs=1e-10)


def test_vertex_is_not_optimal_for_identity():
    assert kkt_residual(np.eye(2), np.array([1.0, 0.0])) > 0.4


@pytest.mark.parametrize("n", [1, 2, 3])
def test_grid_search_oracle(n, rng):
    for _ in range(15):
        M = random_psd(rng, n, rank=rng.integers(1, n + 1))
        sol = solve(QpProblem(M))
        best = grid_minimum(M)
        assert abs(sol.objective - best) <= 1e-3 * (1 + sol.objective)
        assert sol.objective <= best + 1e-12


def test_grid_optimum_has_small_residual(rng):
    M = random_psd(rng, 3)
    g = np.arange(0, 1.0005, 1e-3)
    a, b = np.meshgrid(g, g, indexing="ij")
    keep = a + b <= 1 + 1e-12
    U = np.stack([a[keep], b[keep], np.clip(1 - a[keep] - b[keep], 0, None)], axis=1)
    u = U[np.argmin(np.einsum("ij,jk,ik->i", U, M, U))]
    assert kkt_residual(M, u) <= 1e-2


def test_random_matrices_certified(rng):
    for _ in range(100):
        n = int(rng.integers(1, 25))
        M = random_psd(rng, n, rank=int(rng.integers(1, n + 1)))
        sol = solve(QpProblem(M))
        assert sol.kkt_residual <= 1e-8
        assert np.all(sol.u >= 0)
        assert abs(sol.u.sum() - 1) <= 1e-10
        assert sol.objective == pytest.approx(sol.u @ M @ sol.u, rel=1e-12, abs=1e-15)


def test_no_better_point_by_sampling(rng):
    M = random_psd(rng, 8, rank=4)
    sol = solve(QpProblem(M))
    samples = rng.dirichlet(np.ones(8), size=10_000)
    objs = np.einsum("ij,jk,ik->i", samples, M, samples)
    assert sol.objective <= objs.min() + 1e-10
    assert sol.objective <= np.diag(M).min() + 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_scale_equivariance(n, seed, c):
    M = random_psd(np.random.default_rng(seed), n)
    a = solve(QpProblem(M))
    b = solve(QpProblem(c * M))
    assert b.objective == pytest.approx(c * a.objective, rel=1e-6, abs=1e-9 * c)
    # the minimiser is unique when M is positive definite
    if np.linalg.eigvalsh(M).min() > 1e-6 * np.abs(M).max():
        assert np.allclose(a.u, b.u, atol=1e-6)


@settings(max_examples=100)
@given(arrays(float, st.integers(1, 12), elements=st.floats(-1e3, 1e3)))
def test_projection_lands_on_simplex(v):
    p = project_simplex(v)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-9
    # a point already on the simplex is its own projection
    assert np.allclose(project_simplex(p), p, atol=1e-12)


def test_projection_is_nearest_point(rng):
    v = rng.standard_normal(5)
    p = project_simplex(v)
    for q in rng.dirichlet(np.ones(5), size=2000):
        assert np.linalg.norm(v - p) <= np.linalg.norm(v - q) + 1e-12


def test_projected_gradient_is_monotone(rng):
    M = random_psd(rng, 12, rank=6)
    u = np.full(12, 1 / 12)
    prev = u @ M @ u
    for _ in range(30):
        u, _ = _projected_gradient(M, u, 1, 0.0)
        obj = u @ M @ u
        assert obj <= prev + 1e-14
        prev = obj


def test_deterministic(rng):
    M = random_psd(rng, 10)
    a, b = solve(QpProblem(M)), solve(QpProblem(M))
    assert np.array_equal(a.u, b.u)


def test_non_convergence_carries_best(rng):
    M = random_psd(rng, 20)
    with pytest.raises(NonConvergence) as err:
        solve(QpProblem(M, tol=1e-30, max_iter=2))
    assert err.value.best is not None
    assert err.value.residual > 0


@pytest.mark.parametrize("M", [np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones((2, 3)), np.zeros((0, 0))])
def test_rejects_bad_matrices(M):
    with pytest.raises(ValueError):
        QpProblem(M)


def test_start_vector_is_projected(rng):
    M = random_psd(rng, 4)
    a = solve(QpProblem(M), start=[5.0, -1.0, 0.0, 2.0])
    b = solve(QpProblem(M))
    assert a.objective == pytest.approx(b.objective, abs=1e-10)
