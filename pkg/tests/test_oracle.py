from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from delayoc import (
    ControlPath,
    ControlProblem,
    HistorySpec,
    QuadraticCostSpec,
    build_grid,
    compute_phi,
    fd_gradient,
    integrate_mos,
    lq_direct_solve,
)
from delayoc.errors import DimensionMismatch, NonFiniteValue, ProblemTooLarge, SingularKKT
from delayoc.lagrangian import RunningCost
from delayoc.oracle import MAX_KKT_UNKNOWNS


def steps_solution(a, tau, t):
    """x' = a x(t - tau), x = 1 on [-tau, 0]: sum_k a^k (t - (k-1) tau)^k / k! over active k."""
    n = int(math.floor(t / tau + 1e-12)) + 1
    return sum(a**k * (t - (k - 1) * tau) ** k / math.factorial(k) for k in range(n + 1))


def _mos(a, horizon, denom, B=0.0, u=None):
    g = build_grid(horizon, "1/2", "1/4", Fraction(1, denom))
    hist = HistorySpec.constant(1.0, g.tau1, g.tau2)
    u = ControlPath.zeros(g, 1) if u is None else u(g)
    return g, integrate_mos([[a]], [[B]], u, hist, g)


def test_no_delay_term_integrates_control():
    # A = 0: x(t) = 1 + trapezoid of u
    def ctrl(g):
        return ControlPath(g, np.sin(3 * g.main_times))

    g, x = _mos(0.0, 1, 40, B=2.0, u=ctrl)
    u = np.sin(3 * g.main_times)
    expected = 1.0 + 2.0 * np.concatenate([[0.0], np.cumsum(0.5 * g.h * (u[1:] + u[:-1]))])
    np.testing.assert_allclose(x.main_values[:, 0], expected, atol=1e-12)


def test_first_interval_is_linear():
    g, x = _mos(-0.7, 1, 20)
    first = g.main_times <= 0.5
    np.testing.assert_allclose(x.main_values[first, 0], 1 - 0.7 * g.main_times[first], atol=1e-14)


def test_second_interval_matches_continuation():
    g, x = _mos(-0.7, 1, 20)
    exact = [steps_solution(-0.7, 0.5, t) for t in g.main_times]
    assert np.max(np.abs(x.main_values[:, 0] - exact)) <= g.h**2


def test_third_interval_second_order():
    errs = []
    for denom in (20, 40, 80):
        g, x = _mos(-1.3, Fraction(3, 2), denom)
        exact = np.array([steps_solution(-1.3, 0.5, t) for t in g.main_times])
        errs.append(np.max(np.abs(x.main_values[:, 0] - exact)))
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def test_phi_residual_of_integrated_pair_is_first_order():
    # the trajectory is second-order accurate, but the forward difference in phi
    # carries its own (h/2) x'' bias, so the residual halves with h (not quarters)
    norms = []
    for denom in (20, 40, 80):
        g = build_grid(2, "1/2", "1/4", Fraction(1, denom))
        hist = HistorySpec.constant(1.0, g.tau1, g.tau2)
        u = ControlPath(g, np.sin(g.main_times) ** 2)
        x = integrate_mos([[-1.0]], [[1.0]], u, hist, g)
        cost = QuadraticCostSpec(Q=[[1.0]], S=[[1.0]], R=[[1.0]]).to_running_cost()
        prob = ControlProblem(g, [[-1.0]], [[1.0]], cost, hist, x.values[-1])
        phi = compute_phi(prob, x, u)
        norms.append(math.sqrt(g.main_weights @ phi[:, 0] ** 2))
    ratios = [norms[0] / norms[1], norms[1] / norms[2]]
    assert all(r == pytest.approx(2.0, abs=0.05) for r in ratios)


def test_integrate_dimension_mismatch():
    g = build_grid(1, "1/2", "1/4", "1/8")
    hist = HistorySpec.constant(1.0, g.tau1, g.tau2)
    with pytest.raises(DimensionMismatch):
        integrate_mos(np.eye(2), [[1.0]], ControlPath.zeros(g, 1), hist, g)


def zero_problem(denom=10):
    g = build_grid(1, "1/2", "1/4", Fraction(1, denom))
    cost = QuadraticCostSpec(Q=[[0.0]], S=[[0.0]], R=[[1.0]]).to_running_cost()
    return ControlProblem(g, [[0.0]], [[1.0]], cost, HistorySpec.constant(0.0, g.tau1, g.tau2), [0.0])


def test_kkt_zero_problem():
    sol = lq_direct_solve(zero_problem())
    assert sol.objective == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(sol.u_nodes, 0.0, atol=1e-14)


def random_lq(rng, n, m, denom):
    g = build_grid(1, "1/2", "1/4", Fraction(1, denom))
    q = rng.normal(size=(n, n))
    r = rng.normal(size=(m, m))
    spec = QuadraticCostSpec(Q=q @ q.T, S=np.eye(n) * rng.uniform(0.1, 2), R=r @ r.T + np.eye(m), q=rng.normal(size=n))
    hist = HistorySpec.constant(rng.normal(size=n), g.tau1, g.tau2)
    return ControlProblem(g, rng.normal(size=(n, n)), rng.normal(size=(n, m)), spec.to_running_cost(), hist, rng.normal(size=n))


@pytest.mark.parametrize("seed", range(5))
def test_kkt_residual_and_lower_bound(seed):
    rng = np.random.default_rng(seed)
    # fully actuated: with T = 2 tau1 a control reaches x(T) only through B and AB,
    # so an under-actuated 3-state instance can miss the terminal pin
    n = int(rng.integers(1, 4))
    prob = random_lq(rng, n, n, 20)
    sol = lq_direct_solve(prob)
    assert sol.residual <= 1e-8
    # pins
    g = prob.grid
    np.testing.assert_array_equal(sol.x_nodes[: g.n_history + 1], prob.history.sample(g))
    np.testing.assert_array_equal(sol.x_nodes[-1], prob.alpha)
    assert np.all(sol.u_nodes[0] == 0)
    # feasible dynamics at nodes 0..n-2
    phi = compute_phi(prob, sol.trajectory(g), sol.control(g))
    assert np.max(np.abs(phi[:-1])) <= 1e-8
    # any other feasible pair costs at least as much: perturb u and re-shoot x through
    # the discrete dynamics, keeping x(T) = alpha by adjusting the last control
    for _ in range(20):
        du = rng.normal(size=sol.u_nodes.shape) * 0.1
        du[0] = 0.0
        du[-1] = 0.0
        x, u = _shoot(prob, sol.u_nodes + du)
        if x is None:
            continue
        val = _cost(prob, x, u)
        assert val >= sol.objective - 1e-8


def _shoot(prob, u):
    """Forward-Euler feasible pair for control ``u``; None if the terminal pin is missed."""
    g = prob.grid
    x = np.zeros((g.n_nodes, prob.state_dim))
    x[: g.n_history + 1] = prob.history.sample(g)
    for i in range(g.n_main - 1):
        j = g.n_history + i
        x[j + 1] = x[j] + g.h * (prob.A @ x[j - g.k1] + prob.B @ u[i])
    # the last step must land on alpha: solve B du = (alpha - x_end) / h in least squares
    j = g.n_history + g.n_main - 2
    need = (prob.alpha - x[j]) / g.h - prob.A @ x[j - g.k1]
    sol, *_ = np.linalg.lstsq(prob.B, need, rcond=None)
    if np.linalg.norm(prob.B @ sol - need) > 1e-10:
        return None, None
    u = u.copy()
    u[-2] = sol
    x[-1] = prob.alpha
    return x, u


def _cost(prob, x, u):
    g = prob.grid
    d = np.vstack([np.diff(x, axis=0), x[-1:] - x[-2:-1]]) / g.h
    a = x[g.n_history :]
    bbar = d[g.n_history - g.k2 : g.n_history - g.k2 + g.n_main]
    return float(g.main_weights @ prob.cost.value(g.main_times, a, bbar, u))


def test_kkt_requires_quadratic_cost():
    g = build_grid(1, "1/2", "1/4", "1/8")
    cost = RunningCost(lambda t, a, bbar, c: np.sum(c**2, axis=1), None, 1, 1)
    prob = ControlProblem(g, [[0.0]], [[1.0]], cost, HistorySpec.constant(0.0, g.tau1, g.tau2), [0.0])
    with pytest.raises(TypeError):
        lq_direct_solve(prob)


def test_kkt_singular_when_target_unreachable():
    # B = 0 with nonzero target: the terminal pin cannot be met
    g = build_grid(1, "1/2", "1/4", "1/8")
    cost = QuadraticCostSpec(Q=[[1.0]], S=[[1.0]], R=[[1.0]]).to_running_cost()
    prob = ControlProblem(g, [[0.0]], [[0.0]], cost, HistorySpec.constant(0.0, g.tau1, g.tau2), [1.0])
    with pytest.raises(SingularKKT):
        lq_direct_solve(prob)


def test_kkt_size_cap():
    g = build_grid(1, "1/2", "1/4", Fraction(1, MAX_KKT_UNKNOWNS))
    cost = QuadraticCostSpec(Q=[[1.0]], S=[[1.0]], R=[[1.0]]).to_running_cost()
    prob = ControlProblem(g, [[0.0]], [[1.0]], cost, HistorySpec.constant(0.0, g.tau1, g.tau2), [0.0])
    with pytest.raises(ProblemTooLarge):
        lq_direct_solve(prob)


def test_fd_gradient_examples():
    np.testing.assert_allclose(fd_gradient(lambda z: float(z @ z), np.array([1.0, 2.0])), [2.0, 4.0], atol=1e-8)
    assert np.all(fd_gradient(lambda z: 3.0, np.ones(4)) == 0.0)
    masked = fd_gradient(lambda z: float(z @ z), np.array([1.0, 2.0]), free_mask=[False, True])
    assert masked[0] == 0.0
    with pytest.raises(ValueError):
        fd_gradient(lambda z: 0.0, np.ones(2), epsilon=0.0)
    with pytest.raises(NonFiniteValue):
        fd_gradient(lambda z: float("inf"), np.ones(2))


def test_fd_gradient_converges_until_roundoff():
    f = lambda z: float(np.sin(z[0]) * np.exp(z[1]))
    x = np.array([0.3, -0.2])
    exact = np.array([np.cos(0.3) * np.exp(-0.2), np.sin(0.3) * np.exp(-0.2)])
    errors = [np.max(np.abs(fd_gradient(f, x, eps) - exact)) for eps in (1e-2, 1e-3, 1e-4)]
    assert errors[0] > errors[1] > errors[2]
