"""Euler-Lagrange residuals under mesh refinement.

Minimize a delayed quadratic functional on successively finer grids and look
at the discrete Euler-Lagrange residual on each of the three regimes
[0, T - tau1], (T - tau1, T - tau2] and (T - tau2, T]. The regime norms
should shrink roughly linearly with h.
"""
# %%
from fractions import Fraction

import numpy as np

from delayoc import HistorySpec, InnerOptions, VariationalProblem, build_grid, diagonal_quadratic, el_residual, solve_variational

previous = None
for denom in (16, 32, 64, 128):
    grid = build_grid(1, Fraction(1, 2), Fraction(1, 4), Fraction(1, denom))
    prob = VariationalProblem(grid, diagonal_quadratic(1, 1, 1, 1, 1), HistorySpec.constant(1.0, grid.tau1, grid.tau2), [0.0])
    traj, report = solve_variational(prob, options=InnerOptions(direction="cg"))
    res = el_residual(prob, traj)
    ratio = "" if previous is None else "  ratios " + " ".join(f"{r:.3f}" for r in res.norms / previous)
    print(f"h=1/{denom:<4d} J={report.final_value:.8f}  iters={report.iterations:<5d} norms "
          + " ".join(f"{v:.2e}" for v in res.norms) + ratio)
    previous = res.norms

# %% The boundary nodes are reported separately
print(res.summary()["boundary"])

# %% The full pointwise residual can be stored for plotting
res.write_csv("el_residual.csv")
print(open("el_residual.csv").read().splitlines()[:3])
