"""Delayed variational problems and penalty-method optimal control on commensurate grids.

The main entry points are :func:`build_grid`, :func:`solve_variational`,
:func:`el_residual`, :func:`solve_control_problem` and the oracles
:func:`integrate_mos` and :func:`lq_direct_solve`.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .descent import InnerOptions, InnerReport, line_search, minimize
from .errors import *  # noqa: F403
from .grid import DelayGrid, build_grid, shifted_index
from .lagrangian import (
    DelayedLagrangian,
    PenalizedLagrangian,
    QuadraticCostSpec,
    RunningCost,
    check_coercivity,
    diagonal_quadratic,
    eval_lagrangian,
    eval_partials,
    make_penalized,
    quadratic_lagrangian,
)
from .oracle import KKTSolution, fd_gradient, integrate_mos, lq_direct_solve
from .penalty import (
    ControlProblem,
    PenaltyConfig,
    PenaltyReport,
    StageDiagnostics,
    compute_phi,
    solve_control_problem,
    stationarity_diagnostics,
)
from .problemfile import ProblemFile, build_problem, parse_problem_file, serialize
from .trajectory import (
    ControlPath,
    HistorySpec,
    PolynomialPiece,
    TangentVector,
    Trajectory,
    delayed_tuple,
    derivative_at,
    init_trajectory,
    read_csv,
    write_csv,
)
from .variational import (
    DiscreteFunctional,
    ELResidual,
    VariationalProblem,
    el_residual,
    functional_value,
    gradient,
    project_tangent,
    solve_variational,
)
