"""Projected first-order descent over an affine set defined by pinned coordinates.

Pinned coordinates are marked by ``free_mask == False``. Search directions are
zero on them, so every iterate keeps the initial pinned values bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import LineSearchFailure, NonFiniteValue

__all__ = ["InnerOptions", "InnerReport", "line_search", "minimize", "MIN_STEP"]

log = logging.getLogger(__name__)

MIN_STEP = 1e-16
DIRECTIONS = ("steepest", "cg")


@dataclass(frozen=True)
class InnerOptions:
    """Stopping and line-search parameters for :func:`minimize`.

    ``direction`` is ``"steepest"`` (projected gradient) or ``"cg"``
    (Polak-Ribiere+ conjugate gradient built from projected gradients, with
    a secant Armijo search). ``barzilai_borwein`` seeds each
    steepest-descent line search with the BB1 step instead of
    ``initial_step``.
    """

    grad_tol: float = 1e-8
    max_iters: int = 50_000
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    direction: str = "steepest"
    barzilai_borwein: bool = False

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters > 0):
            raise ValueError("max_iters must be a positive integer")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")


@dataclass
class InnerReport:
    iterations: int
    final_value: float
    final_grad_norm: float
    converged: bool
    value_history: np.ndarray = field(repr=False)
    function_evals: int = 0
    message: str = ""

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "final_value": self.final_value,
            "final_grad_norm": self.final_grad_norm,
            "converged": self.converged,
            "function_evals": self.function_evals,
            "message": self.message,
        }


def _checked(value):
    value = float(value)
    if not np.isfinite(value):
        raise NonFiniteValue("objective returned a non-finite value")
    return value


def line_search(fun, x, direction, opts, fx=None, gx=None, initial_step=None):
    """Armijo backtracking.

    Returns the largest ``s = s0 * factor**k`` with
    ``f(x + s d) <= f(x) + c * s * <g, d>``, where ``s0`` defaults to
    ``opts.initial_step``.

    >>> line_search(lambda z: float(z @ z), np.array([1.0]), np.array([-2.0]),
    ...             InnerOptions(), gx=np.array([2.0]))
    0.5
    """
    if gx is None:
        raise ValueError("the gradient at x is required")
    fx = _checked(fun(x)) if fx is None else fx
    slope = float(np.dot(gx.ravel(), direction.ravel()))
    if not slope < 0:
        raise LineSearchFailure(f"not a descent direction (<g, d> = {slope:.3e})")
    step = opts.initial_step if initial_step is None else initial_step
    return _backtrack(fun, x, fx, slope, direction, step, opts)[0]


def _backtrack(fun, x, fx, slope, direction, step, opts):
    evals = 0
    while step >= MIN_STEP:
        trial = _checked(fun(x + step * direction))
        evals += 1
        if trial <= fx + opts.armijo_c * step * slope:
            return step, trial, evals
        step *= opts.backtrack_factor
    raise LineSearchFailure(f"no Armijo step above {MIN_STEP:g}")


def _secant_search(fun, dphi, x, fx, slope, direction, step, opts):
    """Armijo search whose trial step is the secant root of the directional derivative.

    ``dphi(s)`` is ``<grad f(x + s d), d>``. Exact along the line for
    quadratics, and unlike value-based interpolation it keeps working once
    decreases in ``f`` fall below rounding; the Armijo test carries a slack
    of a few ulps of ``f(x)`` for the same reason, so near the rounding floor
    the value history is monotone only up to that slack. Returns (step,
    value, evals).
    """
    slack = 8 * np.finfo(float).eps * max(abs(fx), 1.0)
    evals = 0
    while step >= MIN_STEP:
        probe = float(dphi(step))
        if probe > slope:
            guess = step * slope / (slope - probe)
        else:
            guess = 4.0 * step  # still no upward curvature: extend
        trial = _checked(fun(x + guess * direction))
        evals += 1
        if trial <= fx + opts.armijo_c * guess * slope + slack:
            return guess, trial, evals
        step = opts.backtrack_factor * min(guess, step)
    raise LineSearchFailure(f"no Armijo step above {MIN_STEP:g}")


def minimize(fun, grad, x0, opts: InnerOptions | None = None, free_mask=None, callback=None):
    """Minimize ``fun`` over ``{x : x[~free_mask] == x0[~free_mask]}``.

    Parameters
    ----------
    fun, grad : callable
        Objective and its gradient (same shape as ``x0``); the gradient is
        projected onto the free coordinates here.
    x0 : ndarray
        Feasible starting point.
    opts : InnerOptions
    free_mask : ndarray of bool, optional
        Defaults to all coordinates free.

    Returns
    -------
    x : ndarray
    report : InnerReport
    """
    opts = opts or InnerOptions()
    x = np.array(x0, dtype=float)
    mask = np.ones(x.shape, dtype=bool) if free_mask is None else np.asarray(free_mask, bool)

    def projected(z):
        g = np.asarray(grad(z), dtype=float).reshape(x.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteValue("gradient returned a non-finite value")
        return np.where(mask, g, 0.0)

    fx = _checked(fun(x))
    g = projected(x)
    gnorm = float(np.linalg.norm(g))
    history = [fx]
    evals = 1
    prev_step = None
    prev_x = prev_g = None
    d = None
    slope_prev = None
    n_free = int(mask.sum())

    it = 0
    while gnorm > opts.grad_tol and it < opts.max_iters:
        if opts.direction == "cg" and d is not None:
            beta = max(0.0, float(np.vdot(g, g - prev_g)) / float(np.vdot(prev_g, prev_g)))
            d = -g + beta * d
            if float(np.vdot(g, d)) >= 0 or (n_free and it % max(n_free, 1) == 0):
                d = -g
        else:
            d = -g
        slope = float(np.vdot(g, d))

        if opts.direction == "cg":
            if prev_step is None:
                s0 = opts.initial_step / max(gnorm, 1.0)
            else:
                s0 = prev_step * slope_prev / slope
            def dphi(s, d=d):
                return np.vdot(projected(x + s * d), d)

            step, f_new, used = _secant_search(fun, dphi, x, fx, slope, d, s0, opts)
            evals += used
        else:
            s0 = opts.initial_step
            if opts.barzilai_borwein and prev_x is not None:
                s_vec, y_vec = x - prev_x, g - prev_g
                sy = float(np.vdot(s_vec, y_vec))
                if sy > 0:
                    s0 = float(np.vdot(s_vec, s_vec)) / sy
            step, f_new, used = _backtrack(fun, x, fx, slope, d, s0, opts)
            evals += used

        prev_x, prev_g, prev_step, slope_prev = x, g, step, slope
        x = x + step * d
        fx = f_new
        g = projected(x)
        gnorm = float(np.linalg.norm(g))
        history.append(fx)
        it += 1
        if callback is not None:
            callback(x, fx, gnorm)

    converged = gnorm <= opts.grad_tol
    msg = "gradient tolerance reached" if converged else "iteration limit reached"
    log.debug("minimize: %s after %d iterations (|g| = %.3e)", msg, it, gnorm)
    report = InnerReport(it, fx, gnorm, converged, np.array(history), evals, msg)
    return x, report
