"""Commensurate grids and history data.

The grid step is chosen so that T, tau1 and tau2 all land on nodes: the
rational gcd of the three times is divided into enough pieces to get below
the requested step.
"""
# %%
from fractions import Fraction

import numpy as np

from delayoc import HistorySpec, build_grid, init_trajectory, shifted_index

grid = build_grid(2, 0.5, 0.25, 0.1)
print(grid.describe())
# 0.1 does not divide 1/4, so the step becomes 1/4 / 3 = 1/12
print("step:", grid.step, "k1, k2:", grid.k1, grid.k2)

# %% Node bookkeeping: global index j <-> t = (j - k1) * step
i = 10
print("t_i       =", grid.node_time(grid.global_index(i)))
print("t_i - tau1 =", grid.node_time(shifted_index(grid, i, "tau1")))
print("t_i - tau2 =", grid.node_time(shifted_index(grid, i, "tau2")))

# %% Regimes split exactly at T - tau1 and T - tau2
regimes = np.array([grid.regime_of(i) for i in range(grid.n_main)])
for r in (1, 2, 3):
    times = grid.main_times[regimes == r]
    print(f"regime {r}: {times[0]:.4f} .. {times[-1]:.4f} ({len(times)} nodes)")

# %% History: theta1 on [-tau1, -tau2), theta2 on [-tau2, 0]
hist = HistorySpec.polynomial([[1.0, 0.0, 2.0]], grid.tau1, grid.tau2)  # 1 + 2 t^2
print("theta(-1/2) =", hist(Fraction(-1, 2)), " theta(0) =", hist(0))

# %% Initial trajectories keep the pinned nodes (history, x(T)) exact
traj = init_trajectory(grid, hist, [0.5], "linear")
print("history pinned:", np.array_equal(traj.values[: grid.n_history + 1], hist.sample(grid)))
print("x(T) =", traj.values[-1])
