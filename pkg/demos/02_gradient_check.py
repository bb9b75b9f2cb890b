"""Checking the discrete gradient against central differences.

The analytic gradient of the discretized functional should agree with a
central finite difference in every free coordinate; pinned coordinates carry
no gradient at all.
"""
# %%
from fractions import Fraction

import numpy as np

from delayoc import HistorySpec, VariationalProblem, build_grid, fd_gradient, quadratic_lagrangian

rng = np.random.default_rng(7)
n = 2
grid = build_grid(1, Fraction(1, 2), Fraction(1, 4), Fraction(1, 100))
w = rng.normal(size=(4 * n, 4 * n))
lag = quadratic_lagrangian(w @ w.T / (4 * n), rng.normal(size=4 * n))
hist = HistorySpec.polynomial(rng.normal(size=(n, 3)), grid.tau1, grid.tau2)
prob = VariationalProblem(grid, lag, hist, rng.normal(size=n))

# %% Evaluate both gradients at a random feasible point
fn = prob.functional(prob.initial_trajectory())
z = fn.pack(prob.initial_trajectory().values)
z = z + np.where(fn.free_mask, rng.normal(size=z.shape), 0.0)
analytic = fn.gradient(z)
numeric = fd_gradient(fn.value, z, 1e-6, fn.free_mask)

free = fn.free_mask
err = np.abs(analytic - numeric)[free] / np.maximum(np.abs(numeric[free]), 1.0)
print(f"{free.sum()} free coordinates, max relative error {err.max():.2e}")
print("gradient on pinned coordinates is zero:", np.all(analytic[~free] == 0))

# %% The step size trade-off: too small and roundoff takes over
for eps in (1e-2, 1e-4, 1e-6, 1e-8, 1e-10):
    num = fd_gradient(fn.value, z, eps, free)
    print(f"eps={eps:.0e}  max abs error {np.max(np.abs(num - analytic)):.2e}")
