"""Grid representation of the state x on [-tau1, T] and the control u on [0, T].

The state is pinned on the history (both segments, t = 0 included) and at the
final node; the control is pinned at t = 0. Derivatives are forward
differences, with a backward difference at the final node only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    CustomArrayViolatesPins,
    DimensionMismatch,
    IndexOutOfRange,
    PinnedNodeError,
)
from .grid import DelayGrid, to_fraction

__all__ = [
    "PolynomialPiece",
    "HistorySpec",
    "Trajectory",
    "ControlPath",
    "TangentVector",
    "DelayedTuple",
    "init_trajectory",
    "derivative_at",
    "forward_derivatives",
    "delayed_tuple",
    "delayed_tuples",
    "state_free_mask",
    "write_csv",
    "read_csv",
]


@dataclass(frozen=True)
class PolynomialPiece:
    """Polynomial on ``[start, end]``; ``coefficients[k, p]`` multiplies ``t**p`` in component k."""

    start: Fraction
    end: Fraction
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start", to_fraction(self.start, "start"))
        object.__setattr__(self, "end", to_fraction(self.end, "end"))
        coeffs = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if coeffs.ndim != 2 or coeffs.shape[1] == 0:
            raise DimensionMismatch("coefficients must be a (state_dim, degree+1) array")
        if not self.start < self.end:
            raise ValueError(f"empty piece [{self.start}, {self.end}]")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def state_dim(self):
        return self.coefficients.shape[0]

    def __call__(self, t):
        # polyval with a 2-D coefficient array evaluates each row: result (N, len(t))
        return npoly.polyval(np.asarray(t, dtype=float), self.coefficients.T).T

    def __eq__(self, other):
        if not isinstance(other, PolynomialPiece):
            return NotImplemented
        return (
            self.start == other.start
            and self.end == other.end
            and np.array_equal(self.coefficients, other.coefficients)
        )

    __hash__ = None


def _check_cover(pieces, lo, hi, label):
    if not pieces:
        raise ValueError(f"{label} needs at least one piece")
    if pieces[0].start != lo or pieces[-1].end != hi:
        raise ValueError(f"{label} must cover exactly [{lo}, {hi}]")
    for left, right in zip(pieces, pieces[1:]):
        if left.end != right.start:
            raise ValueError(f"{label} pieces must be contiguous (gap or overlap at {left.end})")


@dataclass(frozen=True)
class HistorySpec:
    """Prescribed state on [-tau1, -tau2] (theta1) and [-tau2, 0] (theta2).

    At the shared point -tau2 the value of theta2 is used.
    """

    tau1: Fraction
    tau2: Fraction
    theta1: tuple
    theta2: tuple

    def __post_init__(self):
        tau1 = to_fraction(self.tau1, "tau1")
        tau2 = to_fraction(self.tau2, "tau2")
        object.__setattr__(self, "tau1", tau1)
        object.__setattr__(self, "tau2", tau2)
        theta1 = tuple(sorted(self.theta1, key=lambda p: p.start))
        theta2 = tuple(sorted(self.theta2, key=lambda p: p.start))
        object.__setattr__(self, "theta1", theta1)
        object.__setattr__(self, "theta2", theta2)
        _check_cover(theta1, -tau1, -tau2, "theta1")
        _check_cover(theta2, -tau2, Fraction(0), "theta2")
        dims = {p.state_dim for p in theta1 + theta2}
        if len(dims) != 1:
            raise DimensionMismatch(f"history pieces disagree on state dimension: {sorted(dims)}")

    @property
    def state_dim(self):
        return self.theta1[0].state_dim

    @classmethod
    def constant(cls, value, tau1, tau2):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.polynomial(value[:, None], tau1, tau2)

    @classmethod
    def polynomial(cls, coefficients, tau1, tau2):
        """One polynomial in t used on the whole history interval."""
        tau1, tau2 = to_fraction(tau1, "tau1"), to_fraction(tau2, "tau2")
        coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
        return cls(
            tau1,
            tau2,
            (PolynomialPiece(-tau1, -tau2, coefficients),),
            (PolynomialPiece(-tau2, Fraction(0), coefficients),),
        )

    def piece_at(self, t):
        """Piece used at the exact time ``t`` (a Fraction in [-tau1, 0])."""
        t = to_fraction(t, "t")
        if not -self.tau1 <= t <= 0:
            raise IndexOutOfRange(f"t={t} outside the history interval [{-self.tau1}, 0]")
        pieces = self.theta2 if t >= -self.tau2 else self.theta1
        chosen = pieces[0]
        for piece in pieces:
            if piece.start <= t:
                chosen = piece
        return chosen

    def __call__(self, t):
        t = to_fraction(t, "t")
        return self.piece_at(t)(float(t))

    def sample(self, grid):
        """State values at global nodes 0..k1 (from -tau1 up to and including t = 0)."""
        if grid.tau1 != self.tau1 or grid.tau2 != self.tau2:
            raise DimensionMismatch("history delays differ from the grid delays")
        return np.array([self(grid.node_time(j)) for j in range(grid.n_history + 1)])


def state_free_mask(grid):
    """Boolean mask over global nodes: True for interior main nodes."""
    mask = np.zeros(grid.n_nodes, dtype=bool)
    mask[grid.n_history + 1 : grid.n_nodes - 1] = True
    return mask


class Trajectory:
    """State values at every grid node, with history and endpoint pinned.

    ``values`` is exposed read-only; free nodes are written through
    ``traj[j] = v`` or :meth:`set_free`, both of which refuse pinned nodes.
    """

    def __init__(self, grid: DelayGrid, values):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != grid.n_nodes:
            raise DimensionMismatch(
                f"trajectory needs {grid.n_nodes} node values, got {values.shape[0]}"
            )
        self.grid = grid
        self._values = values
        self._free = state_free_mask(grid)

    @property
    def values(self):
        view = self._values.view()
        view.setflags(write=False)
        return view

    @property
    def state_dim(self):
        return self._values.shape[1]

    @property
    def free_mask(self):
        return self._free.copy()

    @property
    def main_values(self):
        return self.values[self.grid.n_history :]

    def __setitem__(self, j, value):
        if not self._free[j]:
            raise PinnedNodeError(f"node {j} is pinned (history or final node)")
        self._values[j] = value

    def set_free(self, free_values):
        free_values = np.asarray(free_values, dtype=float).reshape(-1, self.state_dim)
        if free_values.shape[0] != self._free.sum():
            raise DimensionMismatch("wrong number of free node values")
        self._values[self._free] = free_values

    def copy(self):
        return Trajectory(self.grid, self._values.copy())

    def __repr__(self):
        return f"Trajectory(n_nodes={self.grid.n_nodes}, state_dim={self.state_dim})"


class ControlPath:
    """Control values on the main nodes; ``u(0) = 0`` is enforced."""

    def __init__(self, grid: DelayGrid, values):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != grid.n_main:
            raise DimensionMismatch(f"control needs {grid.n_main} values, got {values.shape[0]}")
        if np.any(values[0] != 0.0):
            raise PinnedNodeError("u(0) must be zero")
        self.grid = grid
        self._values = values

    @classmethod
    def zeros(cls, grid, control_dim):
        return cls(grid, np.zeros((grid.n_main, control_dim)))

    @property
    def values(self):
        view = self._values.view()
        view.setflags(write=False)
        return view

    @property
    def control_dim(self):
        return self._values.shape[1]

    def __setitem__(self, i, value):
        if i == 0 or i == -self.grid.n_main:
            raise PinnedNodeError("u(0) is pinned to zero")
        self._values[i] = value

    def copy(self):
        return ControlPath(self.grid, self._values.copy())


@dataclass
class TangentVector:
    """Admissible variation: zero on the history and at the final node."""

    grid: DelayGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.grid.n_nodes:
            raise DimensionMismatch("tangent vector length differs from the node count")
        pinned = ~state_free_mask(self.grid)
        if np.any(values[pinned] != 0.0):
            raise PinnedNodeError("tangent vectors vanish on the history and at T")
        self.values = values

    @property
    def free_values(self):
        return self.values[state_free_mask(self.grid)]

    def norm(self):
        return float(np.linalg.norm(self.values))


class DelayedTuple(NamedTuple):
    t: float
    a: np.ndarray
    abar: np.ndarray
    b: np.ndarray
    bbar: np.ndarray


def init_trajectory(grid, hist: HistorySpec, alpha, mode="linear", custom=None):
    """Build a feasible trajectory.

    ``mode`` is ``"linear"`` (straight line from theta2(0) to alpha),
    ``"zero"`` or ``"custom"``. A custom array may list either every node
    (pinned entries must then match exactly) or only the interior main nodes.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    n = hist.state_dim
    if alpha.shape != (n,):
        raise DimensionMismatch(f"alpha has shape {alpha.shape}, history has state_dim {n}")
    values = np.zeros((grid.n_nodes, n))
    values[: grid.n_history + 1] = hist.sample(grid)
    values[-1] = alpha
    free = state_free_mask(grid)
    if mode == "linear":
        x0 = values[grid.n_history]
        s = (grid.main_times / grid.h) / (grid.n_main - 1)
        line = x0 + s[:, None] * (alpha - x0)
        values[free] = line[1:-1]
    elif mode == "zero":
        pass
    elif mode == "custom":
        if custom is None:
            raise ValueError("mode='custom' requires the custom array")
        custom = np.asarray(custom, dtype=float)
        if custom.ndim == 1:
            custom = custom[:, None]
        if custom.shape[1] != n:
            raise DimensionMismatch(f"custom array has {custom.shape[1]} components, expected {n}")
        if custom.shape[0] == grid.n_nodes:
            if not np.array_equal(custom[~free], values[~free]):
                raise CustomArrayViolatesPins("custom array disagrees with the pinned nodes")
            values[free] = custom[free]
        elif custom.shape[0] == free.sum():
            values[free] = custom
        else:
            raise DimensionMismatch(
                f"custom array needs {grid.n_nodes} or {free.sum()} rows, got {custom.shape[0]}"
            )
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return Trajectory(grid, values)


def forward_derivatives(values, h):
    """Forward differences at every node; backward difference at the last node."""
    d = np.empty_like(values)
    d[:-1] = np.diff(values, axis=0) / h
    d[-1] = d[-2]
    return d


def derivative_at(traj, j):
    """Discrete derivative at global node ``j``."""
    n = traj.grid.n_nodes
    if not -n <= j < n:
        raise IndexOutOfRange(f"node {j} outside [0, {n})")
    j %= n
    x = traj.values
    if j == n - 1:
        return (x[j] - x[j - 1]) / traj.grid.h
    return (x[j + 1] - x[j]) / traj.grid.h


def delayed_tuples(grid, values):
    """Arrays ``(t, a, abar, b, bbar)`` over all main nodes for node values ``values``."""
    k1, k2, n0 = grid.k1, grid.k2, grid.n_history
    d = forward_derivatives(values, grid.h)
    a = values[n0:]
    abar = values[n0 - k1 : grid.n_nodes - k1]
    b = d[n0:]
    bbar = d[n0 - k2 : grid.n_nodes - k2]
    return grid.main_times, a, abar, b, bbar


def delayed_tuple(traj, i):
    """``(t_i, x(t_i), x(t_i - tau1), x'(t_i), x'(t_i - tau2))`` at main node ``i``."""
    grid = traj.grid
    if not 0 <= i < grid.n_main:
        raise IndexOutOfRange(f"main index {i} outside [0, {grid.n_main})")
    j = grid.global_index(i)
    x = traj.values
    return DelayedTuple(
        float(grid.node_time(j)),
        x[j].copy(),
        x[j - grid.k1].copy(),
        derivative_at(traj, j),
        derivative_at(traj, j - grid.k2),
    )


def _fmt(x):
    return format(float(x), ".17g")


def write_csv(path, traj: Trajectory, control: ControlPath | None = None):
    """Rows ``t, x1..xN, u1..um``; history rows have negative t and blank controls."""
    grid = traj.grid
    n = traj.state_dim
    m = control.control_dim if control is not None else 0
    header = ["t"] + [f"x{k + 1}" for k in range(n)] + [f"u{k + 1}" for k in range(m)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for j in range(grid.n_nodes):
            row = [_fmt(grid.nodes[j])] + [_fmt(v) for v in traj.values[j]]
            i = j - grid.n_history
            if m:
                row += [_fmt(v) for v in control.values[i]] if i >= 0 else [""] * m
            writer.writerow(row)


def read_csv(path, grid: DelayGrid):
    """Read a file written by :func:`write_csv`; returns ``(state_values, control_values|None)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DimensionMismatch(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    xcols = [k for k, name in enumerate(header) if name.startswith("x")]
    ucols = [k for k, name in enumerate(header) if name.startswith("u")]
    if len(body) != grid.n_nodes:
        raise DimensionMismatch(f"{path}: {len(body)} rows, grid has {grid.n_nodes} nodes")
    times = np.array([float(r[0]) for r in body])
    if not np.allclose(times, grid.nodes, rtol=0, atol=1e-9 * max(1.0, float(grid.horizon))):
        raise DimensionMismatch(f"{path}: node times do not match the grid")
    x = np.array([[float(r[k]) for k in xcols] for r in body])
    u = None
    if ucols:
        u = np.array([[float(r[k]) for k in ucols] for r in body[grid.n_history :]])
    return x, u
