from __future__ import annotations

import numpy as np
import pytest

from delayoc import (
    DelayedLagrangian,
    QuadraticCostSpec,
    RunningCost,
    check_coercivity,
    diagonal_quadratic,
    eval_lagrangian,
    eval_partials,
    make_penalized,
    quadratic_lagrangian,
)
from delayoc.errors import DimensionMismatch, NonFiniteValue, NonPositivePenalty
from delayoc.lagrangian import fd_partials


def test_diagonal_quadratic_examples():
    lag = diagonal_quadratic(1, 1, 1, 1, 1)
    tup = (0.3, [1.0], [2.0], [3.0], [4.0])
    assert eval_lagrangian(lag, tup) == 30.0
    parts = eval_partials(lag, tup)
    np.testing.assert_array_equal(np.concatenate(parts), [2.0, 4.0, 6.0, 8.0])
    zero = diagonal_quadratic(1)
    assert eval_lagrangian(zero, tup) == 0.0
    assert all(np.all(p == 0) for p in eval_partials(zero, tup))


def test_dimension_and_finiteness_checks():
    lag = diagonal_quadratic(2, 1.0)
    with pytest.raises(DimensionMismatch):
        eval_lagrangian(lag, (0.0, [1.0], [1.0], [1.0], [1.0]))
    bad = DelayedLagrangian(lambda t, a, abar, b, bbar: np.full(len(t), np.nan), None, 1)
    with pytest.raises(NonFiniteValue):
        eval_lagrangian(bad, (0.0, [1.0], [1.0], [1.0], [1.0]))


def test_quadratic_matches_dot_products(rng):
    n = 3
    w = rng.normal(size=(4 * n, 4 * n))
    lin = rng.normal(size=4 * n)
    lag = quadratic_lagrangian(w, lin)
    sym = 0.5 * (w + w.T)
    z = rng.normal(size=(100, 4 * n))
    t = rng.uniform(size=100)
    got = lag.value(t, z[:, :n], z[:, n : 2 * n], z[:, 2 * n : 3 * n], z[:, 3 * n :])
    expected = np.array([row @ sym @ row + lin @ row for row in z])
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12)


def _rel(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))


def test_quadratic_partials_match_fd(rng):
    n = 2
    lag = quadratic_lagrangian(rng.normal(size=(4 * n, 4 * n)), rng.normal(size=4 * n))
    args = (rng.uniform(size=1000),) + tuple(rng.normal(size=(1000, n)) for _ in range(4))
    analytic = lag.partials(*args)
    numeric = fd_partials(lag.value, args)
    for a, f in zip(analytic, numeric):
        assert _rel(a, f) <= 1e-6


def test_fd_fallback_is_flagged():
    lag = DelayedLagrangian(lambda t, a, abar, b, bbar: np.sum(b**2 + a * abar, axis=1), None, 1)
    assert not lag.analytic
    parts = eval_partials(lag, (0.0, [2.0], [3.0], [1.0], [0.0]))
    np.testing.assert_allclose(np.concatenate(parts), [3.0, 2.0, 2.0, 0.0], atol=1e-8)


def test_cost_spec_validation():
    with pytest.raises(ValueError):
        QuadraticCostSpec(Q=[[1.0, 2.0], [0.0, 1.0]], S=np.eye(2), R=[[1.0]])
    with pytest.raises(ValueError):
        QuadraticCostSpec(Q=[[-1.0]], S=[[1.0]], R=[[1.0]])
    with pytest.raises(ValueError):
        QuadraticCostSpec(Q=[[1.0]], S=[[1.0]], R=[[0.0]])
    with pytest.raises(DimensionMismatch):
        QuadraticCostSpec(Q=[[1.0]], S=[[1.0]], R=[[1.0]], q=[1.0, 2.0])


def test_running_cost_partials(rng):
    spec = QuadraticCostSpec(Q=np.diag([1.0, 2.0]), S=np.eye(2), R=[[3.0]], q=[1.0, 0.0], r=[0.5])
    cost = spec.to_running_cost()
    args = (rng.uniform(size=200), rng.normal(size=(200, 2)), rng.normal(size=(200, 2)), rng.normal(size=(200, 1)))
    for a, f in zip(cost.partials(*args), fd_partials(cost.value, args)):
        assert _rel(a, f) <= 1e-6
    assert cost.coercivity_rho == 0.0  # linear terms: no declared constant


def test_coercivity_sampling(rng):
    cost = QuadraticCostSpec(Q=[[1.0]], S=[[1.0]], R=[[2.0]]).to_running_cost()
    assert cost.coercivity_rho == 2.0
    assert check_coercivity(cost, cost.coercivity_rho, rng) == 0
    # |c|^2 >= rho |c| fails for |c| < rho: a large rho is caught
    assert check_coercivity(cost, 50.0, rng) > 0


def test_penalized_examples(rng):
    zero = RunningCost(lambda t, a, bbar, c: np.zeros(len(t)), lambda t, a, bbar, c: (0 * a, 0 * bbar, 0 * c), 1, 1)
    lag = make_penalized(zero, [[0.0]], [[0.0]], 2.0)
    b = rng.normal(size=(10, 1))
    other = [rng.normal(size=(10, 1)) for _ in range(4)]
    np.testing.assert_allclose(lag.value(np.zeros(10), other[0], other[1], b, other[2], other[3]), b[:, 0] ** 2)

    spec = QuadraticCostSpec(Q=[[1.0]], S=[[1.0]], R=[[1.0]])
    cost = spec.to_running_cost()
    A, B = np.array([[-1.5]]), np.array([[0.7]])
    lag = make_penalized(cost, A, B, 10.0)
    t = np.zeros(5)
    a, abar, bbar, c = (rng.normal(size=(5, 1)) for _ in range(4))
    feasible_b = abar @ A.T + c @ B.T
    np.testing.assert_allclose(lag.value(t, a, abar, feasible_b, bbar, c), cost.value(t, a, bbar, c))
    parts = lag.partials(t, a, abar, feasible_b, bbar, c)
    np.testing.assert_allclose(parts[1], 0.0, atol=1e-12)
    np.testing.assert_allclose(parts[2], 0.0, atol=1e-12)

    with pytest.raises(NonPositivePenalty):
        make_penalized(cost, A, B, -1.0)
    with pytest.raises(DimensionMismatch):
        make_penalized(cost, np.eye(2), B, 1.0)


def test_penalized_partials_match_fd(rng):
    n, m = 2, 2
    Q = rng.normal(size=(n, n))
    R = rng.normal(size=(m, m))
    spec = QuadraticCostSpec(Q=Q @ Q.T, S=np.eye(n), R=R @ R.T + np.eye(m), q=rng.normal(size=n))
    lag = make_penalized(spec.to_running_cost(), rng.normal(size=(n, n)), rng.normal(size=(n, m)), 7.5)
    args = (rng.uniform(size=300),) + tuple(rng.normal(size=(300, k)) for k in (n, n, n, n, m))
    for a, f in zip(lag.partials(*args), fd_partials(lag.value, args)):
        assert _rel(a, f) <= 1e-6


def test_penalty_is_nonnegative_and_weight_must_be_positive(rng):
    cost = QuadraticCostSpec(Q=[[1.0]], S=[[2.0]], R=[[1.0]]).to_running_cost()
    for bad in (0.0, -1.0, float("inf")):
        with pytest.raises(NonPositivePenalty):
            make_penalized(cost, [[1.0]], [[1.0]], bad)
    args = [rng.normal(size=(50, 1)) for _ in range(5)]
    t = np.zeros(50)
    lag = make_penalized(cost, [[1.0]], [[1.0]], 3.0)
    assert np.all(lag.penalty(t, *args) >= 0)
    np.testing.assert_allclose(lag.value(t, *args) - lag.penalty(t, *args), cost.value(t, args[0], args[3], args[4]))
