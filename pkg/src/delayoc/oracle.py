"""Independent references: method-of-steps integration of x' = A x(t - tau1) + B u,
a direct KKT solve of the discretized linear-quadratic problem, and central
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonFiniteValue, ProblemTooLarge, SingularKKT
from .trajectory import ControlPath, HistorySpec, Trajectory, state_free_mask

__all__ = ["KKTSolution", "integrate_mos", "lq_direct_solve", "fd_gradient", "MAX_KKT_UNKNOWNS"]

MAX_KKT_UNKNOWNS = 4000


def integrate_mos(A, B, u, hist: HistorySpec, grid):
    """Integrate the delayed linear dynamics window by window (length tau1).

    Within each window the delayed state is already known, so the trapezoidal
    rule on the grid nodes is explicit. The result has no terminal pin.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = hist.state_dim
    uvals = u.values if isinstance(u, ControlPath) else np.asarray(u, dtype=float)
    if uvals.ndim == 1:
        uvals = uvals[:, None]
    if A.shape != (n, n) or B.shape != (n, uvals.shape[1]) or uvals.shape[0] != grid.n_main:
        raise DimensionMismatch("A, B, u and history dimensions are inconsistent")

    k1, n0, h = grid.k1, grid.n_history, grid.h
    x = np.zeros((grid.n_nodes, n))
    x[: n0 + 1] = hist.sample(grid)
    forced = uvals @ B.T
    start = 0  # main index at the left end of the current window
    while start < grid.n_main - 1:
        stop = min(start + k1, grid.n_main - 1)
        idx = np.arange(start, stop + 1)
        # delayed states x(t_i - tau1) sit at global index i, all computed already
        rhs = x[idx] @ A.T + forced[idx]
        increments = 0.5 * h * (rhs[1:] + rhs[:-1])
        x[n0 + start + 1 : n0 + stop + 1] = x[n0 + start] + np.cumsum(increments, axis=0)
        start = stop
    return Trajectory(grid, x)


@dataclass
class KKTSolution:
    x_nodes: np.ndarray
    u_nodes: np.ndarray
    multipliers: np.ndarray = field(repr=False)
    objective: float = 0.0
    residual: float = 0.0
    condition: float = 0.0

    def trajectory(self, grid):
        return Trajectory(grid, self.x_nodes)

    def control(self, grid):
        return ControlPath(grid, self.u_nodes)


def _operators(grid, n):
    """Sparse-free dense maps from all node values to main-node tuple slots."""
    nn, nm, n0, k1, k2, h = grid.n_nodes, grid.n_main, grid.n_history, grid.k1, grid.k2, grid.h
    diff = np.zeros((nn, nn))
    for j in range(nn - 1):
        diff[j, j], diff[j, j + 1] = -1.0 / h, 1.0 / h
    diff[nn - 1] = diff[nn - 2]
    pick = np.eye(nn)
    take_a = pick[n0 : n0 + nm]
    take_abar = pick[n0 - k1 : n0 - k1 + nm]
    take_b = diff[n0 : n0 + nm]
    take_bbar = diff[n0 - k2 : n0 - k2 + nm]
    eye = np.eye(n)
    return [np.kron(op, eye) for op in (take_a, take_abar, take_b, take_bbar)]


def lq_direct_solve(prob):
    """Solve the discretized LQ problem exactly through its KKT system.

    The discretization matches the penalty path: forward differences, the
    dynamics enforced at main nodes 0..n-2, left-endpoint weights, x pinned
    on the history and at T, u(0) = 0 and the zero-weight final control
    node held at zero.
    """
    spec = getattr(prob.cost, "spec", None)
    if spec is None:
        raise TypeError("lq_direct_solve needs a cost built from QuadraticCostSpec")
    grid, n, m = prob.grid, prob.state_dim, prob.control_dim
    nm, nn = grid.n_main, grid.n_nodes
    nx, nu = nn * n, nm * m
    x_free = np.repeat(state_free_mask(grid)[:, None], n, axis=1).ravel()
    u_free = np.zeros((nm, m), dtype=bool)
    u_free[1:-1] = True
    free = np.concatenate([x_free, u_free.ravel()])
    n_unknowns = int(free.sum()) + (nm - 1) * n
    if n_unknowns > MAX_KKT_UNKNOWNS:
        raise ProblemTooLarge(f"KKT system with {n_unknowns} unknowns exceeds {MAX_KKT_UNKNOWNS}")

    op_a, op_abar, op_b, op_bbar = _operators(grid, n)
    w = np.repeat(grid.main_weights, n)
    wu = np.repeat(grid.main_weights, m)
    Qb = np.kron(np.eye(nm), spec.Q)
    Sb = np.kron(np.eye(nm), spec.S)
    Rb = np.kron(np.eye(nm), spec.R)
    # cost = z^T H z / 2 + g^T z over z = [x (all nodes) | u (main nodes)]
    H = np.zeros((nx + nu, nx + nu))
    H[:nx, :nx] = 2.0 * (op_a.T @ (w[:, None] * Qb) @ op_a + op_bbar.T @ (w[:, None] * Sb) @ op_bbar)
    H[nx:, nx:] = 2.0 * wu[:, None] * Rb
    g = np.zeros(nx + nu)
    g[:nx] = op_a.T @ (w * np.tile(spec.q, nm)) + op_bbar.T @ (w * np.tile(spec.s, nm))
    g[nx:] = wu * np.tile(spec.r, nm)

    # dynamics rows at main nodes 0..n-2:  D x - A x(t - tau1) - B u = 0
    rows = slice(0, (nm - 1) * n)
    Ablk = np.kron(np.eye(nm), prob.A)
    Bblk = np.kron(np.eye(nm), prob.B)
    E = np.hstack([op_b - Ablk @ op_abar, -Bblk])[rows]

    z_fixed = np.zeros(nx + nu)
    x_pin = np.zeros((nn, n))
    x_pin[: grid.n_history + 1] = prob.history.sample(grid)
    x_pin[-1] = prob.alpha
    z_fixed[:nx] = x_pin.ravel()

    Hff = H[np.ix_(free, free)]
    Ef = E[:, free]
    rhs_top = -(g[free] + H[np.ix_(free, ~free)] @ z_fixed[~free])
    rhs_bot = -E[:, ~free] @ z_fixed[~free]
    nf, nc = Hff.shape[0], Ef.shape[0]
    K = np.block([[Hff, Ef.T], [Ef, np.zeros((nc, nc))]])
    rhs = np.concatenate([rhs_top, rhs_bot])
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularKKT(
            f"KKT matrix is singular or nearly so (condition {cond:.3e}); "
            "constraints may be redundant or the target unreachable"
        )
    sol = scipy.linalg.solve(K, rhs, assume_a="sym")
    if not np.all(np.isfinite(sol)):
        raise NonFiniteValue("KKT solve produced non-finite values")
    residual = float(np.max(np.abs(K @ sol - rhs)))

    z = z_fixed.copy()
    z[free] = sol[:nf]
    x_nodes = z[:nx].reshape(nn, n)
    u_nodes = z[nx:].reshape(nm, m)
    multipliers = -sol[nf:].reshape(nm - 1, n)
    objective = _direct_cost(prob, x_nodes, u_nodes)
    return KKTSolution(x_nodes, u_nodes, multipliers, objective, residual, float(cond))


def _direct_cost(prob, x, u):
    grid = prob.grid
    n0, k2, h = grid.n_history, grid.k2, grid.h
    d = np.vstack([np.diff(x, axis=0) / h, (x[-1] - x[-2])[None, :] / h])
    a = x[n0:]
    bbar = d[n0 - k2 : n0 - k2 + grid.n_main]
    return float(grid.main_weights @ prob.cost.value(grid.main_times, a, bbar, u))


def fd_gradient(fun, point, epsilon=1e-6, free_mask=None):
    """Central differences ``(f(x + e_k eps) - f(x - e_k eps)) / (2 eps)`` per free coordinate."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = np.array(point, dtype=float)
    flat = x.ravel()
    mask = np.ones(flat.shape, dtype=bool) if free_mask is None else np.asarray(free_mask).ravel()
    out = np.zeros_like(flat)
    for k in np.flatnonzero(mask):
        plus, minus = flat.copy(), flat.copy()
        plus[k] += epsilon
        minus[k] -= epsilon
        fp, fm = float(fun(plus.reshape(x.shape))), float(fun(minus.reshape(x.shape)))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteValue(f"objective is not finite near coordinate {k}")
        out[k] = (fp - fm) / (2 * epsilon)
    return out.reshape(x.shape)
