"""Method of steps for x'(t) = a x(t - tau) + B u(t).

With a constant history the exact solution is a piecewise polynomial whose
degree rises by one on each delay interval. integrate_mos advances one
window of length tau1 at a time with the trapezoid rule, so it is exact while
the solution is at most quadratic and second order afterwards.
"""
# %%
import math
from fractions import Fraction

import numpy as np

from delayoc import ControlPath, HistorySpec, build_grid, integrate_mos

a, tau = -1.3, 0.5


def exact(t):
    k_max = int(math.floor(t / tau + 1e-12)) + 1
    return sum(a**k * (t - (k - 1) * tau) ** k / math.factorial(k) for k in range(k_max + 1))


for horizon in (Fraction(1), Fraction(3, 2)):
    print(f"horizon {horizon}:")
    previous = None
    for denom in (20, 40, 80, 160):
        grid = build_grid(horizon, Fraction(1, 2), Fraction(1, 4), Fraction(1, denom))
        x = integrate_mos([[a]], [[0.0]], ControlPath.zeros(grid, 1), HistorySpec.constant(1.0, grid.tau1, grid.tau2), grid)
        err = np.max(np.abs(x.main_values[:, 0] - [exact(t) for t in grid.main_times]))
        note = "" if previous is None else f"  ratio {previous / err:.2f}"
        print(f"  h=1/{denom:<4d} max error {err:.2e}{note}")
        previous = err
