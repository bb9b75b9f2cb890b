"""Exterior-penalty outer loop for the delayed linear-quadratic control problem.

Stage ``n`` minimizes ``sum_i w_i [l + (c_n/2) |phi_i|^2]`` jointly over
state and control, where ``phi = x' - A x(t - tau1) - B u`` is the dynamics
defect. The weights ``c_n`` grow geometrically and each stage is warm-started
from the previous one.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .descent import InnerOptions, InnerReport, minimize
from .errors import DimensionMismatch, InnerSolveFailure, LineSearchFailure, NonPositivePenalty
from .grid import DelayGrid
from .lagrangian import RunningCost, make_penalized
from .trajectory import ControlPath, HistorySpec, Trajectory, delayed_tuples, init_trajectory
from .variational import DiscreteFunctional

__all__ = [
    "ControlProblem",
    "PenaltyConfig",
    "StageDiagnostics",
    "PenaltyReport",
    "compute_phi",
    "stationarity_diagnostics",
    "solve_control_problem",
    "PHI_GROWTH_LIMIT",
]

log = logging.getLogger(__name__)

PHI_GROWTH_LIMIT = 10.0


@dataclass(frozen=True)
class ControlProblem:
    """min int l dt  s.t.  x' = A x(t - tau1) + B u,  x = theta on [-tau1, 0],  x(T) = alpha,  u(0) = 0."""

    grid: DelayGrid
    A: np.ndarray
    B: np.ndarray
    cost: RunningCost
    history: HistorySpec
    alpha: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        n, m = self.cost.state_dim, self.cost.control_dim
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be {n}x{n}, got {A.shape}")
        if B.shape != (n, m):
            raise DimensionMismatch(f"B must be {n}x{m}, got {B.shape}")
        if alpha.shape != (n,) or self.history.state_dim != n:
            raise DimensionMismatch("alpha and history must have the state dimension of the cost")
        if self.history.tau1 != self.grid.tau1 or self.history.tau2 != self.grid.tau2:
            raise DimensionMismatch("history delays differ from the grid delays")
        for name, val in (("A", A), ("B", B), ("alpha", alpha)):
            object.__setattr__(self, name, val)

    @property
    def state_dim(self):
        return self.cost.state_dim

    @property
    def control_dim(self):
        return self.cost.control_dim


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty schedule ``c_n = c_start * growth**n`` for ``n < stages``.

    The loop stops after the first stage whose dynamics residual is at most
    ``dyn_residual_tol`` unless ``stop_early`` is false.
    """

    c_start: float = 10.0
    growth: float = 10.0
    stages: int = 5
    dyn_residual_tol: float = 1e-3
    inner: InnerOptions = field(default_factory=lambda: InnerOptions(direction="cg"))
    stop_early: bool = True

    def __post_init__(self):
        if not (self.c_start > 0 and math.isfinite(self.c_start)):
            raise NonPositivePenalty(f"c_start must be positive, got {self.c_start}")
        if not self.growth > 1:
            raise ValueError(f"growth must exceed 1, got {self.growth}")
        if not (isinstance(self.stages, (int, np.integer)) and self.stages >= 1):
            raise ValueError("stages must be an integer >= 1")
        if not self.dyn_residual_tol >= 0:
            raise ValueError("dyn_residual_tol must be nonnegative")

    def weight(self, n):
        return float(self.c_start * self.growth**n)


@dataclass
class StageDiagnostics:
    c_n: float
    cost_value: float
    penalty_value: float
    dyn_residual_norm: float
    phi_sup_norm: float
    stationarity_gap: float
    inner: InnerReport
    bound_flag: bool = False
    # pointwise quantities along the iterate (main nodes)
    a_n: np.ndarray = field(default=None, repr=False)
    e_n: np.ndarray = field(default=None, repr=False)
    b_n: np.ndarray = field(default=None, repr=False)
    phi: np.ndarray = field(default=None, repr=False)
    # L2 norms of the phi-equation residuals with (a - e)/c and (a + e)/c
    phi_ode_residual_minus: float = 0.0
    phi_ode_residual_plus: float = 0.0

    def to_dict(self):
        return {
            "c_n": self.c_n,
            "cost_value": self.cost_value,
            "penalty_value": self.penalty_value,
            "dyn_residual_norm": self.dyn_residual_norm,
            "phi_sup_norm": self.phi_sup_norm,
            "stationarity_gap": self.stationarity_gap,
            "bound_flag": self.bound_flag,
            "phi_ode_residual_minus": self.phi_ode_residual_minus,
            "phi_ode_residual_plus": self.phi_ode_residual_plus,
            "inner": self.inner.to_dict(),
        }


@dataclass
class PenaltyReport:
    stages: list
    final_trajectory: Trajectory
    final_control: ControlPath
    converged: bool
    objective_estimate: float

    def to_dict(self):
        return {
            "converged": self.converged,
            "objective_estimate": self.objective_estimate,
            "final_dyn_residual_norm": self.stages[-1].dyn_residual_norm if self.stages else None,
            "stages": [s.to_dict() for s in self.stages],
        }

    def to_json(self, **extra):
        doc = dict(extra)
        doc.update(self.to_dict())
        return dumps(doc)


def dumps(doc, indent=2):
    """JSON text with every float written to 17 significant digits.

    ``json`` always uses the shortest round-trip repr, so floats pass through
    as tagged strings and are unquoted afterwards.
    """

    def fix(obj):
        if isinstance(obj, dict):
            return {str(k): fix(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [fix(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return fix(obj.tolist())
        if isinstance(obj, (bool, np.bool_)):
            return bool(obj)
        if isinstance(obj, (int, np.integer)):
            return int(obj)
        if isinstance(obj, (float, np.floating)):
            value = float(obj)
            if not math.isfinite(value):
                return None
            return _FLOAT_TAG + format(value, ".17g")
        return obj

    text = json.dumps(fix(doc), indent=indent)
    return _FLOAT_RE.sub(r"\1", text) + "\n"


_FLOAT_TAG = "@f:"
_FLOAT_RE = re.compile('"' + _FLOAT_TAG + r'([^"]*)"')


def _controls(prob, u):
    vals = u.values if isinstance(u, ControlPath) else np.asarray(u, dtype=float)
    vals = vals.reshape(prob.grid.n_main, -1)
    if vals.shape[1] != prob.control_dim:
        raise DimensionMismatch(f"control has {vals.shape[1]} components, expected {prob.control_dim}")
    return vals


def compute_phi(prob: ControlProblem, traj: Trajectory, u):
    """Dynamics defect ``x'(t_i) - A x(t_i - tau1) - B u(t_i)`` at every main node."""
    if traj.grid != prob.grid:
        raise DimensionMismatch("trajectory lives on a different grid")
    if traj.state_dim != prob.state_dim:
        raise DimensionMismatch("trajectory state_dim differs from the problem")
    _, _, abar, b, _ = delayed_tuples(prob.grid, traj.values)
    return b - abar @ prob.A.T - _controls(prob, u) @ prob.B.T


def _cost_partials(prob, traj, u):
    t, a, _, _, bbar = delayed_tuples(prob.grid, traj.values)
    return prob.cost.partials(t, a, bbar, _controls(prob, u))


def stationarity_diagnostics(prob: ControlProblem, traj: Trajectory, u, c_n, phi_reference=None):
    """``(phi_sup_norm, stationarity_gap, bound_flag)`` for an iterate.

    The sup norm runs over nodes with positive quadrature weight; the gap
    ``|B^T phi - l_c / c_n|`` over the nodes where ``u`` is a decision
    variable. ``bound_flag`` is raised when ``phi_reference`` (the stage-0
    sup norm) is given and has been exceeded more than tenfold.
    """
    if not c_n > 0:
        raise NonPositivePenalty(f"c_n must be positive, got {c_n}")
    phi = compute_phi(prob, traj, u)
    l_c = _cost_partials(prob, traj, u)[2]
    positive = prob.grid.main_weights > 0
    sup = float(np.max(np.linalg.norm(phi[positive], axis=1)))
    gap_rows = phi @ prob.B - l_c / c_n
    gap = float(np.max(np.linalg.norm(gap_rows[1:-1], axis=1))) if prob.grid.n_main > 2 else 0.0
    flag = phi_reference is not None and sup > PHI_GROWTH_LIMIT * phi_reference
    return sup, gap, bool(flag)


def _phi_ode_residuals(prob, phi, a_n, e_n, c_n):
    """L2 norms of the pointwise phi-equation residuals for both sign conventions.

    The equations are ``phi' = A^T phi(t + tau1) + (a -/+ e)/c`` before T - tau1,
    ``phi' = (a -/+ e)/c`` up to T - tau2 and ``phi' = a/c`` after it.
    Reported only; nothing is asserted on them.
    """
    grid = prob.grid
    h, k1, n = grid.h, grid.k1, grid.n_main
    b1, b2 = grid.boundary_tau1, grid.boundary_tau2
    dphi = np.diff(phi, axis=0) / h  # at nodes 0..n-2
    idx = np.arange(n - 1)
    out = []
    for sign in (-1.0, 1.0):
        rhs = (a_n + sign * e_n)[: n - 1] / c_n
        rhs[idx > b2] = a_n[: n - 1][idx > b2] / c_n
        early = idx[(idx <= b1) & (idx + k1 <= n - 2)]
        rhs[early] += phi[early + k1] @ prob.A
        res = dphi - rhs
        out.append(float(np.sqrt(h * np.sum(res**2))))
    return out


def _stage_objective(prob, c_n, x, u):
    lag = make_penalized(prob.cost, prob.A, prob.B, c_n)
    return DiscreteFunctional(prob.grid, lag, x, u)


def solve_control_problem(prob: ControlProblem, cfg: PenaltyConfig | None = None, callback=None):
    """Run the penalty schedule and return a :class:`PenaltyReport`.

    ``callback(stage_index, StageDiagnostics)`` is called after each stage.
    An inner line-search breakdown raises :class:`InnerSolveFailure` carrying
    the report assembled so far.
    """
    cfg = cfg or PenaltyConfig()
    grid = prob.grid
    x = init_trajectory(grid, prob.history, prob.alpha, "linear").values.copy()
    u = np.zeros((grid.n_main, prob.control_dim))
    w = grid.main_weights
    stages = []
    phi_ref = None

    for n in range(cfg.stages):
        c_n = cfg.weight(n)
        fn = _stage_objective(prob, c_n, x, u)
        try:
            z, inner = minimize(fn.value, fn.gradient, fn.pack(x, u), cfg.inner, fn.free_mask)
        except LineSearchFailure as exc:
            partial = _report(prob, stages, x, u, cfg)
            raise InnerSolveFailure(f"stage {n} (c_n = {c_n:g}): {exc}", partial) from exc
        x_new, u_new = fn.unpack(z)
        x, u = x_new.copy(), u_new.copy()
        traj = Trajectory(grid, x)

        t, a, _, _, bbar = delayed_tuples(grid, x)
        cost_value = float(w @ prob.cost.value(t, a, bbar, u))
        a_n, e_n, b_n = prob.cost.partials(t, a, bbar, u)
        phi = compute_phi(prob, traj, u)
        sq = float(w @ np.einsum("ij,ij->i", phi, phi))
        sup, gap, flag = stationarity_diagnostics(prob, traj, u, c_n, phi_ref)
        if phi_ref is None:
            phi_ref = sup
        minus, plus = _phi_ode_residuals(prob, phi, a_n, e_n, c_n)
        diag = StageDiagnostics(
            c_n=c_n,
            cost_value=cost_value,
            penalty_value=0.5 * c_n * sq,
            dyn_residual_norm=math.sqrt(sq),
            phi_sup_norm=sup,
            stationarity_gap=gap,
            inner=inner,
            bound_flag=flag,
            a_n=a_n,
            e_n=e_n,
            b_n=b_n,
            phi=phi,
            phi_ode_residual_minus=minus,
            phi_ode_residual_plus=plus,
        )
        stages.append(diag)
        log.info(
            "stage %d: c=%g cost=%.6g residual=%.3e gap=%.3e inner=%d",
            n, c_n, cost_value, diag.dyn_residual_norm, gap, inner.iterations,
        )
        if callback is not None:
            callback(n, diag)
        if cfg.stop_early and diag.dyn_residual_norm <= cfg.dyn_residual_tol:
            break

    return _report(prob, stages, x, u, cfg)


def _report(prob, stages, x, u, cfg):
    grid = prob.grid
    last = stages[-1] if stages else None
    converged = bool(
        last is not None and last.dyn_residual_norm <= cfg.dyn_residual_tol and last.inner.converged
    )
    return PenaltyReport(
        stages=stages,
        final_trajectory=Trajectory(grid, x),
        final_control=ControlPath(grid, u),
        converged=converged,
        objective_estimate=last.cost_value if last else float("nan"),
    )
