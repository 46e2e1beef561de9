import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ciprecode.baselines import ci_constraint_matrix, min_norm_ci, rzf_precode, solve_p1_oracle
from ciprecode.constellation import index_to_symbol
from ciprecode.errors import Infeasible
from ciprecode.precoder import invariant_residuals, precode, tstar_from_lambda
from conftest import instance

cp = pytest.importorskip("cvxpy")


def socp_p1(H, s, p0, M):
    """P1 over the composite vector x with a generic conic solver."""
    x = cp.Variable(H.shape[1], complex=True)
    t = cp.Variable()
    lam = cp.multiply(H @ x, s.conj())
    cons = [cp.sum_squares(x) <= p0]
    if M == 2:
        cons.append(cp.real(lam) >= t)
    else:
        tan = np.tan(np.pi / M)
        cons += [(cp.real(lam) - t) * tan >= cp.imag(lam), (cp.real(lam) - t) * tan >= -cp.imag(lam)]
    cp.Problem(cp.Maximize(t), cons).solve(solver="CLARABEL")
    return float(t.value)


def socp_min_norm(H, s, t, M):
    x = cp.Variable(H.shape[1], complex=True)
    lam = cp.multiply(H @ x, s.conj())
    tan = np.tan(np.pi / M)
    cons = [(cp.real(lam) - t) * tan >= cp.abs(cp.imag(lam))]
    cp.Problem(cp.Minimize(cp.sum_squares(x)), cons).solve(solver="CLARABEL")
    return x.value


# --- RZF ----------------------------------------------------------------------

def test_rzf_zero_forcing_limit():
    s = index_to_symbol([0, 1], 4)
    W = rzf_precode(np.eye(2), s, 1.0, alpha=1e-12)
    r = W @ s
    assert np.allclose(r / s, (r / s)[0], atol=1e-9)


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31), st.floats(1e-3, 10))
def test_rzf_power_normalised(K, Nt, seed, p0):
    H, s = instance(seed, K, Nt, 4)
    W = rzf_precode(H, s, p0, sigma2=0.1)
    assert abs(np.linalg.norm(W @ s) ** 2 - p0) <= 1e-10 * p0


def test_rzf_leaves_interference_on_fat_channel():
    H, s = instance(4, 4, 2, 4)
    r = H @ (rzf_precode(H, s, 1.0, alpha=4 * 0.01) @ s)
    c = np.vdot(s, r) / 4  # best common scaling of s
    assert np.linalg.norm(r - c * s) > 1e-2


def test_rzf_matches_direct_formula(rng):
    H = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    s = index_to_symbol(rng.integers(0, 8, 5), 8)
    F = H.conj().T @ np.linalg.inv(H @ H.conj().T + 0.3 * np.eye(5))
    W = rzf_precode(H, s, 1.0, alpha=0.3)
    assert np.allclose(W, F / np.linalg.norm(F @ s), atol=1e-12)


def test_rzf_argument_errors():
    H, s = instance(0, 4, 2, 4)
    with pytest.raises(ValueError):
        rzf_precode(H, s)
    with pytest.raises(ValueError):
        rzf_precode(H, s, alpha=-1.0)
    with pytest.raises(np.linalg.LinAlgError):
        rzf_precode(H, s, alpha=0.0)


# --- minimum-norm CI vector ---------------------------------------------------

def test_min_norm_single_user():
    x = min_norm_ci(np.ones((1, 1)), np.ones(1), 1.0, 4)
    assert x == pytest.approx(np.array([1.0 + 0j]), abs=1e-6)


def test_min_norm_vacuous_threshold():
    H, s = instance(2, 5, 3, 4)
    assert np.linalg.norm(min_norm_ci(H, s, -1e6, 4)) == 0.0


def test_min_norm_empty_cone():
    H = np.ones((3, 1), dtype=complex)
    with pytest.raises(Infeasible):
        min_norm_ci(H, index_to_symbol([0, 1, 2], 4), 0.5, 4)


@pytest.mark.parametrize("seed, K, Nt, M", [(0, 3, 2, 4), (1, 5, 4, 8), (3, 6, 4, 4), (2, 6, 4, 4)])
def test_min_norm_matches_conic_solver(seed, K, Nt, M):
    H, s = instance(seed, K, Nt, M)
    try:
        x = min_norm_ci(H, s, 0.2, M)
    except Infeasible:
        # the conic solver must agree that no positive threshold is reachable
        assert socp_p1(H, s, 1.0, M) <= 1e-6
        return
    ref = socp_min_norm(H, s, 0.2, M)
    assert np.linalg.norm(x) ** 2 == pytest.approx(np.linalg.norm(ref) ** 2, rel=1e-5)
    G = ci_constraint_matrix(H, s, M)
    assert np.min(G @ np.concatenate([x.real, x.imag])) >= 0.2 - 1e-9


def test_constraint_rows_are_ci_margins(rng):
    H, s = instance(9, 4, 3, 8)
    x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    G = ci_constraint_matrix(H, s, 8)
    lam = (H @ x) * s.conj()
    cot = 1 / np.tan(np.pi / 8)
    expected = np.concatenate([lam.real - cot * lam.imag, lam.real + cot * lam.imag])
    assert np.allclose(G @ np.concatenate([x.real, x.imag]), expected)


# --- reference P1 solver ------------------------------------------------------

def test_oracle_closed_form():
    res = solve_p1_oracle(np.eye(2), np.ones(2), 1.0, 4)
    assert res.t_star == pytest.approx(np.sqrt(0.5), abs=1e-6)
    assert np.allclose(res.x, [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_oracle_power_homogeneity(seed):
    H, s = instance(seed, 3, 2, 4)
    a = solve_p1_oracle(H, s, 1.0, 4)
    b = solve_p1_oracle(H, s, 2.0, 4)
    if a.feasible:
        assert b.t_star == pytest.approx(np.sqrt(2) * a.t_star, rel=1e-5)


@pytest.mark.parametrize("seed, K, Nt, M", [
    (0, 3, 2, 4), (1, 4, 2, 8), (2, 5, 4, 4), (3, 6, 4, 8), (4, 2, 2, 2), (5, 4, 3, 2),
])
def test_oracle_and_pipeline_match_conic_solver(seed, K, Nt, M):
    H, s = instance(seed, K, Nt, M)
    ref = socp_p1(H, s, 1.0, M)
    orc = solve_p1_oracle(H, s, 1.0, M)
    sol = precode(H, s, 1.0, M)
    if ref > 1e-6:
        assert orc.t_star == pytest.approx(ref, abs=1e-5)
        assert sol.t_star == pytest.approx(ref, abs=1e-5)
    else:
        assert not orc.feasible and not sol.feasible


@pytest.mark.parametrize("seed", range(6))
def test_oracle_solution_invariants(seed):
    H, s = instance(seed, 4, 2, 4)
    res = solve_p1_oracle(H, s, 1.0, 4)
    assert np.linalg.norm(res.x) ** 2 <= 1 + 1e-8
    assert np.allclose(res.W * s[None, :], res.x[:, None] / 4)
    if res.feasible:
        inv = invariant_residuals(H, s, res.W, res.Lambda, res.t_star, 1.0, 4)
        assert inv["power"] <= 1e-8 and inv["equal_columns"] <= 1e-8
        assert inv["margin_min"] >= -1e-8
        assert tstar_from_lambda(res.Lambda, 1.0) >= res.t_star - 1e-8


def test_oracle_infeasible_instance():
    H = np.ones((3, 1), dtype=complex)
    res = solve_p1_oracle(H, index_to_symbol([0, 1, 2], 4), 1.0, 4)
    assert not res.feasible
    assert res.t_star <= 0
