"""Delayed Lagrangians L(t, a, abar, b, bbar) and the penalized family L_n.

Arguments are positional and vectorized: ``t`` has shape ``(n,)``, every
state-like argument has shape ``(n, N)`` and controls ``(n, m)``. Values come
back with shape ``(n,)``.

Argument order: ``a = x(t)``, ``abar = x(t - tau1)``, ``b = x'(t)``,
``bbar = x'(t - tau2)`` and, for control problems, ``c = u(t)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue, NonPositivePenalty

__all__ = [
    "DelayedLagrangian",
    "RunningCost",
    "QuadraticCostSpec",
    "PenalizedLagrangian",
    "quadratic_lagrangian",
    "diagonal_quadratic",
    "eval_lagrangian",
    "eval_partials",
    "make_penalized",
    "fd_partials",
    "check_coercivity",
]


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{what} produced a non-finite value")
    return arr


def fd_partials(fun, args, eps=1e-6):
    """Central-difference partials of ``fun(*args)`` w.r.t. every non-time argument."""
    t, rest = args[0], [np.array(a, dtype=float) for a in args[1:]]
    out = []
    for k, arg in enumerate(rest):
        g = np.zeros_like(arg)
        for comp in range(arg.shape[1]):
            step = eps * np.maximum(1.0, np.abs(arg[:, comp]))
            plus = [r.copy() for r in rest]
            minus = [r.copy() for r in rest]
            plus[k][:, comp] += step
            minus[k][:, comp] -= step
            g[:, comp] = (fun(t, *plus) - fun(t, *minus)) / (2 * step)
        out.append(g)
    return tuple(out)


class DelayedLagrangian:
    """L(t, a, abar, b, bbar) with its four partial derivatives.

    Parameters
    ----------
    fun : callable
        ``fun(t, a, abar, b, bbar) -> (n,)``.
    grad : callable, optional
        ``grad(t, a, abar, b, bbar) -> (dL/da, dL/dabar, dL/db, dL/dbbar)``.
        When omitted, central finite differences are used and
        :attr:`analytic` is ``False`` so reports can flag it.
    state_dim : int
    """

    control_dim = 0

    def __init__(self, fun: Callable, grad: Callable | None, state_dim: int, name="custom"):
        self._fun = fun
        self._grad = grad
        self.state_dim = int(state_dim)
        self.analytic = grad is not None
        self.name = name

    def value(self, t, a, abar, b, bbar):
        return _finite(np.asarray(self._fun(t, a, abar, b, bbar), dtype=float), self.name)

    def partials(self, t, a, abar, b, bbar):
        if self._grad is None:
            parts = fd_partials(self._fun, (t, a, abar, b, bbar))
        else:
            parts = self._grad(t, a, abar, b, bbar)
        return tuple(_finite(np.asarray(p, dtype=float), f"{self.name} partials") for p in parts)

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, state_dim={self.state_dim})"


def quadratic_lagrangian(weight, linear=None, name="quadratic"):
    """L = z^T W z + w^T z with z = (a, abar, b, bbar) stacked, W of size 4N x 4N."""
    weight = np.atleast_2d(np.asarray(weight, dtype=float))
    if weight.shape[0] != weight.shape[1] or weight.shape[0] % 4:
        raise DimensionMismatch(f"weight must be 4N x 4N, got {weight.shape}")
    n = weight.shape[0] // 4
    sym = 0.5 * (weight + weight.T)
    lin = np.zeros(4 * n) if linear is None else np.asarray(linear, dtype=float).reshape(4 * n)

    def fun(t, a, abar, b, bbar):
        z = np.hstack([a, abar, b, bbar])
        return np.einsum("ij,jk,ik->i", z, sym, z) + z @ lin

    def grad(t, a, abar, b, bbar):
        z = np.hstack([a, abar, b, bbar])
        g = 2.0 * z @ sym + lin
        return tuple(g[:, k * n : (k + 1) * n] for k in range(4))

    lag = DelayedLagrangian(fun, grad, n, name=name)
    lag.weight, lag.linear = sym, lin
    return lag


def diagonal_quadratic(state_dim, a=0.0, abar=0.0, b=0.0, bbar=0.0):
    """``a*|x|^2 + abar*|x(t-tau1)|^2 + b*|x'|^2 + bbar*|x'(t-tau2)|^2``."""
    eye = np.eye(state_dim)
    weight = np.zeros((4 * state_dim, 4 * state_dim))
    for k, w in enumerate((a, abar, b, bbar)):
        weight[k * state_dim : (k + 1) * state_dim, k * state_dim : (k + 1) * state_dim] = w * eye
    return quadratic_lagrangian(weight, name="diagonal_quadratic")


def _single(tup):
    t, *rest = tup
    t = np.atleast_1d(np.asarray(t, dtype=float))
    rest = [np.atleast_1d(np.asarray(r, dtype=float))[None, :] for r in rest]
    return t, rest


def eval_lagrangian(lag, tup):
    """Value of ``lag`` at a single tuple ``(t, a, abar, b, bbar[, c])``."""
    t, rest = _single(tup)
    _check_dims(lag, rest)
    return float(lag.value(t, *rest)[0])


def eval_partials(lag, tup):
    """Partials of ``lag`` at a single tuple, each a 1-D array."""
    t, rest = _single(tup)
    _check_dims(lag, rest)
    return tuple(p[0] for p in lag.partials(t, *rest))


def _check_dims(lag, rest):
    expected = [lag.state_dim] * 4 + ([lag.control_dim] if lag.control_dim else [])
    got = [r.shape[1] for r in rest]
    if got != expected:
        raise DimensionMismatch(f"tuple dimensions {got} differ from expected {expected}")


class RunningCost:
    """l(t, a, bbar, c) with partials (l_a, l_bbar, l_c).

    ``coercivity_rho`` is the declared constant in ``l >= rho * |c|``
    (0 when unknown); it is recorded, not enforced.
    """

    def __init__(self, fun, grad, state_dim, control_dim, coercivity_rho=0.0, name="custom"):
        self._fun = fun
        self._grad = grad
        self.state_dim = int(state_dim)
        self.control_dim = int(control_dim)
        self.coercivity_rho = float(coercivity_rho)
        self.analytic = grad is not None
        self.name = name

    def value(self, t, a, bbar, c):
        return _finite(np.asarray(self._fun(t, a, bbar, c), dtype=float), self.name)

    def partials(self, t, a, bbar, c):
        if self._grad is None:
            parts = fd_partials(self._fun, (t, a, bbar, c))
        else:
            parts = self._grad(t, a, bbar, c)
        return tuple(_finite(np.asarray(p, dtype=float), f"{self.name} partials") for p in parts)


def _symmetric(name, mat, size):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.shape != (size, size):
        raise DimensionMismatch(f"{name} must be {size}x{size}, got {mat.shape}")
    if not np.allclose(mat, mat.T, rtol=0, atol=1e-12):
        raise ValueError(f"{name} is not symmetric")
    return mat


@dataclass(frozen=True)
class QuadraticCostSpec:
    """l = a^T Q a + bbar^T S bbar + c^T R c + q.a + s.bbar + r.c."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    q: np.ndarray | None = None
    s: np.ndarray | None = None
    r: np.ndarray | None = None

    def __post_init__(self):
        n = np.atleast_2d(self.Q).shape[0]
        m = np.atleast_2d(self.R).shape[0]
        Q = _symmetric("Q", self.Q, n)
        S = _symmetric("S", self.S, n)
        R = _symmetric("R", self.R, m)
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(S).min() < -1e-12:
            raise ValueError("S must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 1e-12:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)
        for name, size in (("q", n), ("s", n), ("r", m)):
            vec = getattr(self, name)
            vec = np.zeros(size) if vec is None else np.asarray(vec, dtype=float).reshape(-1)
            if vec.shape != (size,):
                raise DimensionMismatch(f"{name} must have length {size}")
            object.__setattr__(self, name, vec)

    @property
    def state_dim(self):
        return self.Q.shape[0]

    @property
    def control_dim(self):
        return self.R.shape[0]

    @property
    def has_linear_terms(self):
        return bool(np.any(self.q) or np.any(self.s) or np.any(self.r))

    def to_running_cost(self):
        Q, S, R, q, s, r = self.Q, self.S, self.R, self.q, self.s, self.r

        def fun(t, a, bbar, c):
            return (
                np.einsum("ij,jk,ik->i", a, Q, a)
                + np.einsum("ij,jk,ik->i", bbar, S, bbar)
                + np.einsum("ij,jk,ik->i", c, R, c)
                + a @ q
                + bbar @ s
                + c @ r
            )

        def grad(t, a, bbar, c):
            return 2.0 * a @ Q + q, 2.0 * bbar @ S + s, 2.0 * c @ R + r

        rho = 0.0 if self.has_linear_terms else float(np.linalg.eigvalsh(R).min())
        cost = RunningCost(fun, grad, self.state_dim, self.control_dim, rho, name="quadratic")
        cost.spec = self
        return cost


def check_coercivity(cost, rho, rng, samples=1000, min_control_norm=1.0, scale=10.0):
    """Sample ``l(t, a, bbar, c) >= rho |c|`` on random points with ``|c| >= min_control_norm``.

    Returns the number of violating samples. For quadratic costs the bound
    cannot hold near c = 0, hence the lower cutoff on ``|c|``.
    """
    n, m = cost.state_dim, cost.control_dim
    t = rng.uniform(0.0, 1.0, samples)
    a = rng.normal(scale=scale, size=(samples, n))
    bbar = rng.normal(scale=scale, size=(samples, n))
    c = rng.normal(size=(samples, m))
    radii = min_control_norm + rng.exponential(scale, samples)
    c *= (radii / np.linalg.norm(c, axis=1))[:, None]
    lhs = cost.value(t, a, bbar, c)
    return int(np.count_nonzero(lhs < rho * np.linalg.norm(c, axis=1) - 1e-12))


class PenalizedLagrangian(DelayedLagrangian):
    """L_n(t, a, abar, b, bbar, c) = l(t, a, bbar, c) + (c_n / 2) |b - A abar - B c|^2."""

    def __init__(self, cost: RunningCost, A, B, c_n):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        n, m = cost.state_dim, cost.control_dim
        if A.shape != (n, n) or B.shape != (n, m):
            raise DimensionMismatch(f"A must be {n}x{n} and B {n}x{m}; got {A.shape}, {B.shape}")
        c_n = float(c_n)
        if not (c_n > 0.0 and np.isfinite(c_n)):
            raise NonPositivePenalty(f"penalty weight must be positive, got {c_n}")
        super().__init__(self._value, self._partials, n, name=f"penalized[{cost.name}]")
        self.cost = cost
        self.A, self.B, self.c_n = A, B, c_n
        self.control_dim = m
        self.analytic = cost.analytic

    def residual(self, abar, b, c):
        """r = b - A abar - B c (dynamics defect)."""
        return b - abar @ self.A.T - c @ self.B.T

    def penalty(self, t, a, abar, b, bbar, c):
        r = self.residual(abar, b, c)
        return 0.5 * self.c_n * np.einsum("ij,ij->i", r, r)

    def value(self, t, a, abar, b, bbar, c):
        return _finite(self._value(t, a, abar, b, bbar, c), self.name)

    def partials(self, t, a, abar, b, bbar, c):
        return tuple(_finite(p, f"{self.name} partials") for p in self._partials(t, a, abar, b, bbar, c))

    def _value(self, t, a, abar, b, bbar, c):
        return self.cost.value(t, a, bbar, c) + self.penalty(t, a, abar, b, bbar, c)

    def _partials(self, t, a, abar, b, bbar, c):
        l_a, l_bbar, l_c = self.cost.partials(t, a, bbar, c)
        cr = self.c_n * self.residual(abar, b, c)
        return l_a, -cr @ self.A, cr, l_bbar, l_c - cr @ self.B


def make_penalized(cost, A, B, c_n):
    """Penalized Lagrangian for weight ``c_n > 0``."""
    return PenalizedLagrangian(cost, A, B, c_n)
