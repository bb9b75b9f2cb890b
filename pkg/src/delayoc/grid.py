"""Uniform time mesh on [-tau1, T] with both delays as integer index shifts.

All mesh arithmetic is carried out with :class:`fractions.Fraction`; floats
are produced only when node times are handed to numerical code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import IndexOutOfRange, NonCommensurate, NonPositive, OrderViolation

__all__ = ["DelayGrid", "build_grid", "shifted_index", "to_fraction", "TAU1", "TAU2"]

TAU1 = "tau1"
TAU2 = "tau2"

# Largest denominator accepted when a float is read as a rational number.
MAX_DENOMINATOR = 10**6
# Guard against pathological ratios that would need an astronomically fine mesh.
MAX_NODES = 2_000_000


def to_fraction(value, name="value"):
    """Convert ``value`` to an exact :class:`Fraction`.

    Strings such as ``"1/3"`` or ``"0.25"`` and integers are exact. Floats are
    matched to the nearest fraction with denominator at most ``MAX_DENOMINATOR``;
    a float that no such fraction reproduces to rounding accuracy is treated as
    irrational and rejected.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return Fraction(int(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise NonCommensurate(f"{name}={value!r} is not a rational literal") from exc
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if not math.isfinite(x):
            raise NonCommensurate(f"{name}={x!r} is not finite")
        frac = Fraction(x).limit_denominator(MAX_DENOMINATOR)
        if abs(float(frac) - x) > 4 * np.finfo(float).eps * max(abs(x), 1e-300):
            raise NonCommensurate(
                f"{name}={x!r} has no rational representation with denominator "
                f"<= {MAX_DENOMINATOR}"
            )
        return frac
    raise TypeError(f"{name} must be a number or rational string, got {type(value).__name__}")


def _rational_gcd(*values):
    nums = [v.numerator for v in values]
    dens = [v.denominator for v in values]
    num = math.gcd(*nums)
    den = math.lcm(*dens)
    return Fraction(num, den)


@dataclass(frozen=True)
class DelayGrid:
    """Immutable commensurate mesh.

    Global node ``j`` sits at ``t = (j - k1) * step``; the first ``n_history``
    nodes cover ``[-tau1, 0)`` and the remaining ``n_main`` nodes cover
    ``[0, T]`` with both endpoints included.
    """

    step: Fraction
    horizon: Fraction
    tau1: Fraction
    tau2: Fraction

    def __post_init__(self):
        for name in ("step", "horizon", "tau1", "tau2"):
            value = getattr(self, name)
            if not isinstance(value, Fraction):
                object.__setattr__(self, name, to_fraction(value, name))
        _check_order(self.horizon, self.tau1, self.tau2)
        if self.step <= 0:
            raise NonPositive("step must be positive")
        for name in ("horizon", "tau1", "tau2"):
            q = getattr(self, name) / self.step
            if q.denominator != 1:
                raise NonCommensurate(f"{name} is not an integer multiple of the step {self.step}")

    @property
    def h(self):
        return float(self.step)

    @property
    def k1(self):
        return int(self.tau1 / self.step)

    @property
    def k2(self):
        return int(self.tau2 / self.step)

    @property
    def n_history(self):
        return self.k1

    @property
    def n_main(self):
        return int(self.horizon / self.step) + 1

    @property
    def n_nodes(self):
        return self.n_history + self.n_main

    @cached_property
    def nodes(self):
        """Float node times from -tau1 to T (each the rounding of an exact rational)."""
        nodes = np.array([float(self.node_time(j)) for j in range(self.n_nodes)])
        nodes.setflags(write=False)
        return nodes

    @property
    def main_times(self):
        return self.nodes[self.n_history:]

    @property
    def history_times(self):
        return self.nodes[: self.n_history]

    def node_time(self, j):
        """Exact time of global node ``j``."""
        return (j - self.k1) * self.step

    def global_index(self, i):
        """Global index of main node ``i``."""
        return self.n_history + i

    @property
    def main_weights(self):
        """Quadrature weights on main nodes (left-endpoint rule).

        Node ``i < n_main - 1`` represents the interval ``[t_i, t_{i+1}]`` on
        which the forward difference is the exact slope, so it carries weight
        ``h``; the final node carries none.
        """
        w = np.full(self.n_main, self.h)
        w[-1] = 0.0
        return w

    @property
    def boundary_tau1(self):
        """Main index of the node T - tau1."""
        return self.n_main - 1 - self.k1

    @property
    def boundary_tau2(self):
        """Main index of the node T - tau2."""
        return self.n_main - 1 - self.k2

    def regime_of(self, i):
        """Regime number (1, 2, 3) of main node ``i``: [0,T-tau1], (T-tau1,T-tau2], (T-tau2,T]."""
        if i <= self.boundary_tau1:
            return 1
        if i <= self.boundary_tau2:
            return 2
        return 3

    def refined(self, factor=2):
        """Same delays and horizon with the step divided by ``factor``."""
        return DelayGrid(self.step / factor, self.horizon, self.tau1, self.tau2)

    def describe(self):
        return {
            "step": str(self.step),
            "horizon": str(self.horizon),
            "tau1": str(self.tau1),
            "tau2": str(self.tau2),
            "k1": self.k1,
            "k2": self.k2,
            "n_history": self.n_history,
            "n_main": self.n_main,
        }


def _check_order(horizon, tau1, tau2):
    for name, value in (("horizon", horizon), ("tau1", tau1), ("tau2", tau2)):
        if value <= 0:
            raise NonPositive(f"{name} must be positive, got {value}")
    if not tau2 < tau1:
        raise OrderViolation(f"tau2 ({tau2}) must be < tau1 ({tau1})")
    if not tau1 < horizon:
        raise OrderViolation(f"tau1 ({tau1}) must be < horizon ({horizon})")


def build_grid(horizon, tau1, tau2, h_target):
    """Largest commensurate step not exceeding ``h_target``.

    The step is ``g / ceil(g / h_target)`` where ``g`` is the rational GCD of
    the horizon and both delays.

    >>> build_grid(2, "1/2", "1/4", "1/10").step
    Fraction(1, 12)
    """
    horizon = to_fraction(horizon, "horizon")
    tau1 = to_fraction(tau1, "tau1")
    tau2 = to_fraction(tau2, "tau2")
    h_target = to_fraction(h_target, "h_target")
    if h_target <= 0:
        raise NonPositive(f"h_target must be positive, got {h_target}")
    _check_order(horizon, tau1, tau2)

    g = _rational_gcd(horizon, tau1, tau2)
    per_gcd = math.ceil(g / h_target)
    step = g / per_gcd
    if (horizon + tau1) / step + 1 > MAX_NODES:
        raise NonCommensurate(
            f"delays and horizon share only the common step {g}; the mesh would "
            f"exceed {MAX_NODES} nodes"
        )
    return DelayGrid(step, horizon, tau1, tau2)


def shifted_index(grid, i, which):
    """Global index of the node ``t_i - tau`` for main node ``i``."""
    if not 0 <= i < grid.n_main:
        raise IndexOutOfRange(f"main index {i} outside [0, {grid.n_main})")
    if which == TAU1:
        shift = grid.k1
    elif which == TAU2:
        shift = grid.k2
    else:
        raise ValueError(f"which must be {TAU1!r} or {TAU2!r}, got {which!r}")
    return grid.global_index(i) - shift
