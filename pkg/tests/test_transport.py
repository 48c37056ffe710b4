import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awhmm import SinkhornParams, sinkhorn, solve_exact_transport
from awhmm.errors import InfeasibleTransportError
from conftest import brute_force_transport


def test_zero_diagonal_cost():
    plan = solve_exact_transport(1 - np.eye(2), [0.5, 0.5], [0.5, 0.5])
    assert np.allclose(plan.weights, np.diag([0.5, 0.5]))
    assert plan.objective == 0.0


def test_two_by_two_example():
    plan = solve_exact_transport(np.array([[0.0, 1.0], [1.0, 0.0]]), [0.7, 0.3], [0.4, 0.6])
    assert np.allclose(plan.weights, [[0.4, 0.3], [0.0, 0.3]], atol=1e-12)
    assert plan.objective == pytest.approx(0.3, abs=1e-12)


def test_permutation_hard_matching():
    pts = np.array([0.0, 1.0, 3.0])
    perm = np.array([2, 0, 1])
    cost = np.abs(pts[:, None] - pts[perm][None, :])
    w = np.array([0.2, 0.5, 0.3])
    plan = solve_exact_transport(cost, w, w[perm])
    expected = np.zeros((3, 3))
    for j, i in enumerate(perm):
        expected[i, j] = w[i]
    assert np.allclose(plan.weights, expected, atol=1e-12)


def test_infeasible_marginals():
    with pytest.raises(InfeasibleTransportError):
        solve_exact_transport(np.ones((2, 2)), [0.5, 0.6], [0.5, 0.5])
    with pytest.raises(InfeasibleTransportError):
        sinkhorn(np.ones((2, 2)), [0.5, 0.5], [0.4, 0.5])


def test_zero_mass_rows_reinserted():
    cost = np.arange(12, dtype=float).reshape(3, 4)
    plan = solve_exact_transport(cost, [0.5, 0.0, 0.5], [0.25, 0.25, 0.0, 0.5])
    assert np.all(plan.weights[1] == 0) and np.all(plan.weights[:, 2] == 0)
    assert plan.marginal_residual <= 1e-9


@pytest.mark.parametrize("shape", [(2, 2), (2, 3), (3, 2), (3, 3)])
def test_exact_matches_vertex_enumeration(shape):
    rng = np.random.default_rng(sum(shape))
    for _ in range(60):
        cost = rng.random(shape)
        mu, nu = rng.dirichlet(np.ones(shape[0])), rng.dirichlet(np.ones(shape[1]))
        plan = solve_exact_transport(cost, mu, nu)
        assert abs(plan.objective - brute_force_transport(cost, mu, nu)) <= 1e-10
        assert np.count_nonzero(plan.weights > 0) <= sum(shape) - 1
        assert plan.marginal_residual <= 1e-9


def test_exact_matches_linprog_on_larger_instances():
    from scipy.optimize import linprog

    rng = np.random.default_rng(5)
    for _ in range(30):
        m, n = rng.integers(2, 9, size=2)
        cost = rng.random((m, n))
        mu, nu = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        a_eq = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])
        ref = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([mu, nu]), method="highs")
        assert solve_exact_transport(cost, mu, nu).objective == pytest.approx(ref.fun, abs=1e-10)


def test_transpose_symmetry():
    rng = np.random.default_rng(8)
    for _ in range(50):
        cost = rng.random((3, 4))
        mu, nu = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
        a = solve_exact_transport(cost, mu, nu).objective
        b = solve_exact_transport(cost.T, nu, mu).objective
        assert abs(a - b) <= 1e-10


def test_sinkhorn_zero_cost_gives_product():
    mu, nu = np.array([0.2, 0.8]), np.array([0.5, 0.3, 0.2])
    plan = sinkhorn(np.zeros((2, 3)), mu, nu, epsilon=0.1)
    assert np.allclose(plan.weights, np.outer(mu, nu), atol=1e-9)


def test_sinkhorn_small_epsilon_concentrates_on_diagonal():
    n = 20
    cost = 1.0 - np.eye(n)
    u = np.full(n, 1.0 / n)
    plan = sinkhorn(cost, u, u, epsilon=0.01)
    assert plan.converged
    assert np.trace(plan.weights) >= 0.99
    assert solve_exact_transport(cost, u, u).objective == 0.0


def test_sinkhorn_residual_and_gap():
    rng = np.random.default_rng(2)
    for _ in range(10):
        m, n = 30, 40
        cost = rng.random((m, n))
        mu, nu = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        plan = sinkhorn(cost, mu, nu)
        assert plan.converged and plan.marginal_residual <= 1e-6
        exact = solve_exact_transport(cost, mu, nu).objective
        assert exact <= plan.objective + plan.epsilon * np.log(m * n) + 1e-12


def test_sinkhorn_nonconvergence_is_flagged():
    rng = np.random.default_rng(3)
    cost = rng.random((50, 50))
    u = np.full(50, 0.02)
    plan = sinkhorn(cost, u, u, params=SinkhornParams(epsilon=1e-3, max_iter=3, scaling_steps=0))
    assert not plan.converged
    assert plan.n_iter == 3
    assert plan.marginal_residual > 1e-6


def test_sinkhorn_tiny_epsilon_stays_finite():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(60, 2)), rng.normal(size=(60, 2)) + 5
    cost = np.linalg.norm(x[:, None] - y[None], axis=2)
    u = np.full(60, 1 / 60)
    plan = sinkhorn(cost, u, u, epsilon=1e-3)
    assert np.all(np.isfinite(plan.weights))
    assert plan.converged


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
def test_exact_plan_is_feasible(m, n, seed):
    r = np.random.default_rng(seed)
    cost = r.random((m, n))
    mu, nu = r.dirichlet(np.ones(m)), r.dirichlet(np.ones(n))
    plan = solve_exact_transport(cost, mu, nu)
    assert np.all(plan.weights >= 0)
    assert plan.marginal_residual <= 1e-9
    assert abs(plan.weights.sum() - 1) <= 1e-9
