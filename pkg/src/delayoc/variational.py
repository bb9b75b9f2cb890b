"""Discretized delayed functional, its exact discrete gradient, and the
three-regime Euler-Lagrange residual.

The functional is ``J = sum_i w_i L(t_i, x_i, x(t_i - tau1), Dx_i, Dx(t_i - tau2))``
over main nodes, with forward differences ``D`` and left-endpoint weights
(``h`` on every node but the last). The gradient is that of this finite sum,
so it agrees with finite differences of :func:`functional_value` to rounding.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .descent import InnerOptions, minimize
from .errors import DimensionMismatch
from .grid import DelayGrid
from .trajectory import (
    HistorySpec,
    TangentVector,
    Trajectory,
    delayed_tuples,
    init_trajectory,
    state_free_mask,
)

__all__ = [
    "VariationalProblem",
    "DiscreteFunctional",
    "ELResidual",
    "functional_value",
    "gradient",
    "project_tangent",
    "el_residual",
    "solve_variational",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariationalProblem:
    """min J(x) with x = theta on [-tau1, 0] and x(T) = alpha."""

    grid: DelayGrid
    lagrangian: object
    history: HistorySpec
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "alpha", alpha)
        n = self.lagrangian.state_dim
        if self.history.state_dim != n or alpha.shape != (n,):
            raise DimensionMismatch("history, alpha and Lagrangian disagree on state_dim")
        if self.history.tau1 != self.grid.tau1 or self.history.tau2 != self.grid.tau2:
            raise DimensionMismatch("history delays differ from the grid delays")

    @property
    def state_dim(self):
        return self.lagrangian.state_dim

    def initial_trajectory(self, mode="linear", custom=None):
        return init_trajectory(self.grid, self.history, self.alpha, mode, custom)

    def functional(self, traj):
        return DiscreteFunctional(self.grid, self.lagrangian, traj.values)


class DiscreteFunctional:
    """Objective over the packed vector ``z = [x at all nodes | u at main nodes]``.

    Pinned entries of ``z`` are taken from the base arrays given at
    construction; :attr:`free_mask` marks the decision variables. The final
    control node has zero quadrature weight and is not a decision variable.
    """

    def __init__(self, grid, lagrangian, x_base, u_base=None):
        self.grid = grid
        self.lagrangian = lagrangian
        self.n = lagrangian.state_dim
        self.m = getattr(lagrangian, "control_dim", 0)
        x_base = np.asarray(x_base, dtype=float).reshape(grid.n_nodes, self.n)
        if self.m:
            if u_base is None:
                u_base = np.zeros((grid.n_main, self.m))
            u_base = np.asarray(u_base, dtype=float).reshape(grid.n_main, self.m)
        self.weights = grid.main_weights
        x_free = np.repeat(state_free_mask(grid)[:, None], self.n, axis=1)
        parts = [x_free.ravel()]
        base = [x_base.ravel()]
        if self.m:
            u_free = np.zeros((grid.n_main, self.m), dtype=bool)
            u_free[1:-1] = True
            parts.append(u_free.ravel())
            base.append(u_base.ravel())
        self.free_mask = np.concatenate(parts)
        self.base = np.concatenate(base)
        self._nx = grid.n_nodes * self.n

    def pack(self, x, u=None):
        x = np.asarray(x, dtype=float).ravel()
        if self.m:
            return np.concatenate([x, np.asarray(u, dtype=float).ravel()])
        return x.copy()

    def unpack(self, z):
        x = z[: self._nx].reshape(self.grid.n_nodes, self.n)
        u = z[self._nx :].reshape(self.grid.n_main, self.m) if self.m else None
        return x, u

    def args(self, z):
        x, u = self.unpack(z)
        tup = delayed_tuples(self.grid, x)
        return tup + (u,) if self.m else tup

    def pointwise(self, z):
        """Integrand values at every main node."""
        return self.lagrangian.value(*self.args(z))

    def value(self, z):
        return float(self.weights @ self.pointwise(z))

    def gradient(self, z):
        """Gradient of :meth:`value` w.r.t. ``z``; zero on pinned entries."""
        grid = self.grid
        k1, k2, n0, h = grid.k1, grid.k2, grid.n_history, grid.h
        args = self.args(z)
        parts = self.lagrangian.partials(*args)
        w = self.weights[:, None]
        p2, p3, p4, p5 = (p * w for p in parts[:4])

        gx = np.zeros((grid.n_nodes, self.n))
        gx[n0:] += p2
        gx[n0 - k1 : grid.n_nodes - k1] += p3
        # sensitivities of the objective to each node's discrete derivative
        gd = np.zeros_like(gx)
        gd[n0:] += p4
        gd[n0 - k2 : grid.n_nodes - k2] += p5
        gd[-2] += gd[-1]  # final node reuses the last forward difference
        gx[1:] += gd[:-1] / h
        gx[:-1] -= gd[:-1] / h

        out = [gx.ravel()]
        if self.m:
            out.append((parts[4] * w).ravel())
        g = np.concatenate(out)
        g[~self.free_mask] = 0.0
        return g


def functional_value(prob: VariationalProblem, traj: Trajectory):
    """Left-endpoint quadrature of the Lagrangian over the delayed tuples."""
    _check_grid(prob, traj)
    return prob.functional(traj).value(traj.values.ravel())


def gradient(prob: VariationalProblem, traj: Trajectory):
    """Exact gradient of :func:`functional_value` w.r.t. the free node values."""
    _check_grid(prob, traj)
    g = prob.functional(traj).gradient(traj.values.ravel())
    return project_tangent(prob.grid, g.reshape(traj.values.shape))


def project_tangent(grid: DelayGrid, v):
    """Zero the history nodes (t = 0 included) and the final node."""
    v = np.array(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != grid.n_nodes:
        raise DimensionMismatch(f"vector has {v.shape[0]} nodes, grid has {grid.n_nodes}")
    v[~state_free_mask(grid)] = 0.0
    return TangentVector(grid, v)


def _check_grid(prob, traj):
    if traj.grid != prob.grid:
        raise DimensionMismatch("trajectory lives on a different grid")
    if traj.state_dim != prob.state_dim:
        raise DimensionMismatch("trajectory state_dim differs from the problem")


@dataclass
class ELResidual:
    """Per-node residual of the delayed Euler-Lagrange system.

    ``residual[i]`` is ``d/dt(momentum) - force`` at main node ``i``;
    ``regime[i]`` is 1, 2 or 3, and ``interior[i]`` marks the nodes that
    enter the regime norms. Regime endpoints (t = 0, T - tau1, T - tau2, T)
    are kept in :attr:`boundary` and carry no pass/fail meaning.
    """

    times: np.ndarray
    regime: np.ndarray
    interior: np.ndarray
    residual: np.ndarray
    p_values: dict = field(repr=False)
    norms: np.ndarray = None
    boundary: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def _select(self, r):
        return self.residual[(self.regime == r) & self.interior]

    @property
    def regime1(self):
        return self._select(1)

    @property
    def regime2(self):
        return self._select(2)

    @property
    def regime3(self):
        return self._select(3)

    def summary(self):
        return {
            "regime_norms": [float(v) for v in self.norms],
            "interior_nodes": [int(np.sum((self.regime == r) & self.interior)) for r in (1, 2, 3)],
            "boundary": {k: [float(c) for c in v] for k, v in self.boundary.items()},
            "warnings": list(self.warnings),
        }

    def write_csv(self, path):
        n = self.residual.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "regime", "interior"] + [f"r{k + 1}" for k in range(n)] + ["norm"])
            for t, reg, inside, row in zip(self.times, self.regime, self.interior, self.residual):
                writer.writerow(
                    [format(t, ".17g"), int(reg), int(inside)]
                    + [format(v, ".17g") for v in row]
                    + [format(float(np.linalg.norm(row)), ".17g")]
                )


def el_residual(prob: VariationalProblem, traj: Trajectory, control=None):
    """Residual of the three-regime Euler-Lagrange equations at every main node.

    Momentum ``p4(t) + p5(t + tau2)`` and force ``p2(t) + p3(t + tau1)``
    keep their advanced terms only while ``t + tau < T``: nodal quantities
    are right limits (forward differences) and have no right limit at T.
    The time derivative is central inside a regime and one-sided at the two
    nodes next to each regime endpoint, so no stencil crosses T - tau1 or
    T - tau2.

    ``control`` (main-node array) is passed as the extra argument when
    ``prob.lagrangian`` is a penalized Lagrangian.
    """
    _check_grid(prob, traj)
    grid = prob.grid
    h, k1, k2, n = grid.h, grid.k1, grid.k2, grid.n_main
    tup = delayed_tuples(grid, np.asarray(traj.values))
    if getattr(prob.lagrangian, "control_dim", 0):
        tup = tup + (np.asarray(control, dtype=float).reshape(n, -1),)
    p2, p3, p4, p5 = prob.lagrangian.partials(*tup)[:4]

    momentum = p4.copy()
    momentum[: n - 1 - k2] += p5[k2 : n - 1]
    force = p2.copy()
    force[: n - 1 - k1] += p3[k1 : n - 1]

    b1, b2 = grid.boundary_tau1, grid.boundary_tau2
    regime = np.array([grid.regime_of(i) for i in range(n)])
    residual = np.zeros_like(p2)
    interior = np.zeros(n, dtype=bool)
    warnings = []
    for label, lo, hi in ((1, 0, b1), (2, b1, b2), (3, b2, n - 1)):
        inner = range(lo + 1, hi)
        if len(inner) < 2:
            warnings.append(f"regime {label} has {len(inner)} interior node(s); one-sided stencils only")
        for j in inner:
            interior[j] = True
            if lo < j - 1 and j + 1 < hi:
                slope = (momentum[j + 1] - momentum[j - 1]) / (2 * h)
            elif j + 1 < hi:
                slope = (momentum[j + 1] - momentum[j]) / h
            else:
                slope = (momentum[j] - momentum[j - 1]) / h
            residual[j] = slope - force[j]
    for j in (0, b1, b2, n - 1):
        if j == 0:
            slope = (momentum[1] - momentum[0]) / h
        else:
            slope = (momentum[j] - momentum[j - 1]) / h
        residual[j] = slope - force[j]
    boundary = {
        "t=0": residual[0].copy(),
        "T-tau1": residual[b1].copy(),
        "T-tau2": residual[b2].copy(),
        "T": residual[n - 1].copy(),
    }
    norms = np.array(
        [
            np.sqrt(h * np.sum(residual[(regime == r) & interior] ** 2))
            for r in (1, 2, 3)
        ]
    )
    return ELResidual(
        times=grid.main_times.copy(),
        regime=regime,
        interior=interior,
        residual=residual,
        p_values={"p2": p2, "p3": p3, "p4": p4, "p5": p5},
        norms=norms,
        boundary=boundary,
        warnings=warnings,
    )


def solve_variational(prob: VariationalProblem, init: Trajectory | None = None, options=None):
    """Minimize the discrete functional; returns ``(trajectory, InnerReport)``."""
    init = prob.initial_trajectory("linear") if init is None else init
    _check_grid(prob, init)
    fn = prob.functional(init)
    z, report = minimize(fn.value, fn.gradient, fn.pack(init.values), options or InnerOptions(), fn.free_mask)
    x, _ = fn.unpack(z)
    return Trajectory(prob.grid, x), report
