from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from delayoc import (
    ControlProblem,
    HistorySpec,
    QuadraticCostSpec,
    build_grid,
)

# (criterion number, verdict line) collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def lq_instance(h=Fraction(1, 20)):
    """N = m = 1, A = -1, B = 1, tau = (1/2, 1/4), T = 2, l = a^2 + bbar^2 + c^2, theta = 1, alpha = 0."""
    grid = build_grid(2, Fraction(1, 2), Fraction(1, 4), h)
    cost = QuadraticCostSpec(Q=[[1.0]], S=[[1.0]], R=[[1.0]]).to_running_cost()
    hist = HistorySpec.constant(1.0, grid.tau1, grid.tau2)
    return ControlProblem(grid, [[-1.0]], [[1.0]], cost, hist, [0.0])


@pytest.fixture
def lq_problem():
    return lq_instance()


@pytest.fixture
def small_grid():
    # T = 1, tau1 = 1/2, tau2 = 1/4, h = 1/4: k1 = 2, k2 = 1
    return build_grid(1, Fraction(1, 2), Fraction(1, 4), Fraction(1, 4))


def random_problem_doc(rng, kind=None):
    """A valid problem-file dictionary with random dimensions, delays and data."""
    kind = kind or ("control" if rng.random() < 0.5 else "variational")
    n = int(rng.integers(1, 4))
    q = int(rng.integers(2, 9))
    tau2 = Fraction(int(rng.integers(1, 4)), q)
    tau1 = tau2 + Fraction(int(rng.integers(1, 4)), q)
    horizon = tau1 + Fraction(int(rng.integers(1, 6)), q)
    cut = -tau2
    history = [
        {"interval": [str(-tau1), str(cut)], "coefficients": rng.normal(size=(n, 2)).tolist()},
        {"interval": [str(cut), "0"], "coefficients": rng.normal(size=(n, 3)).tolist()},
    ]
    doc = {
        "kind": kind,
        "N": n,
        "horizon_T": str(horizon),
        "tau1": str(tau1),
        "tau2": str(tau2),
        "history": history,
        "alpha": rng.normal(size=n).tolist(),
        "mesh": {"h_target": str(Fraction(1, int(rng.integers(4, 40))))},
        "seed": int(rng.integers(0, 1000)),
    }
    if kind == "control":
        m = int(rng.integers(1, 3))
        doc["m"] = m
        a = rng.normal(size=(n, n))
        r = rng.normal(size=(m, m))
        doc["A"] = rng.normal(size=(n, n)).tolist()
        doc["B"] = rng.normal(size=(n, m)).tolist()
        doc["cost"] = {
            "Q": (a @ a.T).tolist(),
            "S": np.eye(n).tolist(),
            "R": (r @ r.T + np.eye(m)).tolist(),
            "q": rng.normal(size=n).tolist(),
        }
        doc["penalty"] = {"c_start": float(rng.uniform(1, 20)), "stages": int(rng.integers(1, 6))}
    else:
        doc["m"] = 0
        doc["lagrangian"] = {"name": "diagonal_quadratic", "params": {"a": float(rng.uniform(0, 2)), "b": 1.0}}
    return doc
