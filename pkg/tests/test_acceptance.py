"""Acceptance criteria 1-8.

Each test prints one ``criterion N: PASS|FAIL - details`` line (also collected
into the pytest terminal summary). Run directly with ``python3
tests/test_acceptance.py`` for the verdict lines alone.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES, lq_instance, random_problem_doc  # noqa: E402
from delayoc import (  # noqa: E402
    ControlPath,
    ControlProblem,
    HistorySpec,
    InnerOptions,
    PenaltyConfig,
    QuadraticCostSpec,
    Trajectory,
    VariationalProblem,
    build_grid,
    diagonal_quadratic,
    el_residual,
    fd_gradient,
    integrate_mos,
    lq_direct_solve,
    minimize,
    quadratic_lagrangian,
    serialize,
    solve_control_problem,
    solve_variational,
)
from delayoc.cli import main as cli_main  # noqa: E402
from delayoc.problemfile import parse_problem_text  # noqa: E402

TAU1, TAU2 = Fraction(1, 2), Fraction(1, 4)


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


# -- 1 ------------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = worst_pure = 0.0
    for _ in range(10):
        n = int(rng.integers(1, 4))
        grid = build_grid(1, TAU1, TAU2, Fraction(1, 100))
        w = rng.normal(size=(4 * n, 4 * n))
        lag = quadratic_lagrangian(w @ w.T / (4 * n), rng.normal(size=4 * n))
        hist = HistorySpec.polynomial(rng.normal(size=(n, 3)), grid.tau1, grid.tau2)
        prob = VariationalProblem(grid, lag, hist, rng.normal(size=n))
        fn = prob.functional(prob.initial_trajectory())
        z = fn.pack(prob.initial_trajectory().values)
        z = z + np.where(fn.free_mask, rng.normal(size=z.shape), 0.0)
        free = fn.free_mask
        analytic = fn.gradient(z)[free]
        numeric = fd_gradient(fn.value, z, 1e-6, free)[free]
        # relative to max(|fd|, 1): the central difference of a quadratic has no
        # truncation error, so what remains is roundoff in J, which a near-zero
        # derivative would otherwise amplify without bound
        diff = np.abs(analytic - numeric)
        worst = max(worst, float(np.max(diff / np.maximum(np.abs(numeric), 1.0))))
        worst_pure = max(worst_pure, float(np.max(diff / np.maximum(np.abs(numeric), 1e-300))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 10
    return verdict(1, ok, f"max relative error {worst:.2e} (tol 1e-5; |d|/max(|fd|,1), pure |d|/|fd| {worst_pure:.1e}) over 10 problems, {grid.n_main} main nodes, {elapsed:.2f} s (< 10 s)")


# -- 2 ------------------------------------------------------------------------


def criterion_2():
    grid = build_grid(1, TAU1, TAU2, Fraction(1, 20))
    prob = VariationalProblem(grid, diagonal_quadratic(1, b=1.0), HistorySpec.constant(0.0, grid.tau1, grid.tau2), [1.0])
    start = time.perf_counter()
    init = prob.initial_trajectory("zero")
    fn = prob.functional(init)
    z, report = minimize(fn.value, fn.gradient, fn.pack(init.values), InnerOptions(direction="cg"), fn.free_mask)
    traj = Trajectory(grid, fn.unpack(z)[0])
    elapsed = time.perf_counter() - start
    err = float(np.max(np.abs(traj.main_values[:, 0] - grid.main_times)))
    norms = el_residual(prob, traj).norms
    ok = report.converged and err <= 1e-6 and np.all(norms <= 1e-8) and elapsed < 1
    return verdict(2, ok, f"max |x - t| {err:.2e} (tol 1e-6), EL norms {_fmt(norms)} (tol 1e-8), {elapsed:.3f} s (< 1 s)")


# -- 3 ------------------------------------------------------------------------


def criterion_3():
    start = time.perf_counter()
    norms, split_ok = [], True
    for denom in (32, 64):
        grid = build_grid(1, TAU1, TAU2, Fraction(1, denom))
        prob = VariationalProblem(grid, diagonal_quadratic(1, 1, 1, 1, 1), HistorySpec.constant(1.0, grid.tau1, grid.tau2), [0.0])
        traj, report = solve_variational(prob, options=InnerOptions(direction="cg"))
        res = el_residual(prob, traj)
        norms.append(res.norms)
        # regime 1 ends exactly at T - tau1, regime 2 exactly at T - tau2
        split_ok &= report.converged
        split_ok &= res.times[res.regime == 1][-1] == 0.5 and res.times[res.regime == 2][0] > 0.5
        split_ok &= res.times[res.regime == 2][-1] == 0.75 and res.times[res.regime == 3][0] > 0.75
        split_ok &= bool(np.all(np.diff(res.regime) >= 0))
    ratios = norms[1] / norms[0]
    elapsed = time.perf_counter() - start
    ok = bool(np.all(ratios <= 0.75)) and split_ok and elapsed < 30
    return verdict(3, ok, f"h=1/32 -> 1/64 regime ratios {_fmt(ratios, '.3f')} (tol 0.75), partitions split at 1/2 and 3/4: {split_ok}, {elapsed:.2f} s (< 30 s)")


# -- 4 / 5 ---------------------------------------------------------------------

_LQ_CACHE = {}


def _lq_run():
    if not _LQ_CACHE:
        prob = lq_instance()
        start = time.perf_counter()
        report = solve_control_problem(prob, PenaltyConfig(c_start=10, growth=10, stages=4, stop_early=False))
        elapsed = time.perf_counter() - start
        _LQ_CACHE.update(prob=prob, report=report, elapsed=elapsed, kkt=lq_direct_solve(prob))
    return _LQ_CACHE


def criterion_4():
    run = _lq_run()
    report, kkt = run["report"], run["kkt"]
    res = [s.dyn_residual_norm for s in report.stages]
    decreasing = all(b < a for a, b in zip(res, res[1:]))
    rel = abs(report.objective_estimate - kkt.objective) / abs(kkt.objective)
    ok = decreasing and res[-1] <= 1e-3 and rel <= 0.01 and run["elapsed"] < 60
    return verdict(4, ok, f"residuals {_fmt(res)} (strictly decreasing: {decreasing}), final {res[-1]:.2e} (tol 1e-3), "
                          f"cost {report.objective_estimate:.8f} vs KKT {kkt.objective:.8f} (rel {rel:.1e}, tol 1e-2), {run['elapsed']:.2f} s (< 60 s)")


def criterion_5():
    report = _lq_run()["report"]
    converged = [s for s in report.stages if s.inner.converged]
    gaps = [s.stationarity_gap for s in converged]
    growth = report.stages[-1].phi_sup_norm / report.stages[0].phi_sup_norm
    ok = len(converged) == len(report.stages) and max(gaps) <= 1e-4 and growth < 10
    return verdict(5, ok, f"{len(converged)}/{len(report.stages)} stages inner-converged, max stationarity gap {max(gaps):.1e} (tol 1e-4), "
                          f"phi sup growth {growth:.3f}x (< 10x)")


# -- 6 ------------------------------------------------------------------------


def _steps_exact(a, tau, t):
    k_max = int(math.floor(t / tau + 1e-12)) + 1
    return sum(a**k * (t - (k - 1) * tau) ** k / math.factorial(k) for k in range(k_max + 1))


def _mos_error(a, horizon, denom):
    grid = build_grid(horizon, TAU1, TAU2, Fraction(1, denom))
    x = integrate_mos([[a]], [[0.0]], ControlPath.zeros(grid, 1), HistorySpec.constant(1.0, grid.tau1, grid.tau2), grid)
    exact = np.array([_steps_exact(a, float(TAU1), t) for t in grid.main_times])
    return float(np.max(np.abs(x.main_values[:, 0] - exact))), grid.h


def criterion_6():
    a = -1.3
    # on [0, 2 tau1] the exact solution is piecewise quadratic and the trapezoid rule reproduces it
    bound_ok, worst_c = True, 0.0
    for denom in (20, 40, 80):
        err, h = _mos_error(a, 2 * TAU1, denom)
        worst_c = max(worst_c, err / h**2)
        bound_ok &= err <= 1.0 * h**2
    # the order study therefore runs on [0, 3 tau1], where the cubic piece has a genuine O(h^2) error
    errs = [_mos_error(a, 3 * TAU1, d)[0] for d in (20, 40, 80)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    order_ok = min(ratios) >= 3

    rng = np.random.default_rng(606)
    worst_res = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        grid = build_grid(1, TAU1, TAU2, Fraction(1, int(rng.integers(8, 24))))
        q = rng.normal(size=(n, n))
        r = rng.normal(size=(n, n))
        spec = QuadraticCostSpec(Q=q @ q.T, S=np.eye(n), R=r @ r.T + np.eye(n), q=rng.normal(size=n))
        prob = ControlProblem(grid, rng.normal(size=(n, n)), rng.normal(size=(n, n)), spec.to_running_cost(),
                              HistorySpec.constant(rng.normal(size=n), grid.tau1, grid.tau2), rng.normal(size=n))
        worst_res = max(worst_res, lq_direct_solve(prob).residual)
    ok = bound_ok and order_ok and worst_res <= 1e-8
    return verdict(6, ok, f"[0,2tau1] max err/h^2 {worst_c:.1e} (C = 1); [0,3tau1] halving ratios {_fmt(ratios, '.2f')} (>= 3); "
                          f"max KKT residual {worst_res:.1e} on 20 instances (tol 1e-8)")


# -- 7 ------------------------------------------------------------------------


def _pins_exact(prob, x, u=None):
    grid = prob.grid
    ok = np.array_equal(x[: grid.n_history + 1], prob.history.sample(grid)) and np.array_equal(x[-1], prob.alpha)
    if u is not None:
        ok = ok and bool(np.all(u[0] == 0.0))
    return bool(ok)


def criterion_7():
    rng = np.random.default_rng(707)
    checks = {}
    grid = build_grid(1, TAU1, TAU2, Fraction(1, 16))
    hist = HistorySpec.polynomial(rng.normal(size=(2, 3)), grid.tau1, grid.tau2)
    vprob = VariationalProblem(grid, diagonal_quadratic(2, 1, 1, 1, 1), hist, rng.normal(size=2))
    traj, _ = solve_variational(vprob, options=InnerOptions(direction="cg"))
    checks["variational"] = _pins_exact(vprob, traj.values)
    traj, _ = solve_variational(vprob, options=InnerOptions(direction="steepest", max_iters=200))
    checks["variational (steepest, truncated)"] = _pins_exact(vprob, traj.values)

    report = _lq_run()["report"]
    lq = _lq_run()["prob"]
    checks["penalty"] = _pins_exact(lq, report.final_trajectory.values, report.final_control.values)
    for n, stage_ok in enumerate(_stagewise_pins(lq)):
        checks[f"penalty stage {n}"] = stage_ok
    kkt = _lq_run()["kkt"]
    checks["kkt"] = _pins_exact(lq, kkt.x_nodes, kkt.u_nodes)
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    return verdict(7, ok, f"{sum(checks.values())}/{len(checks)} solves bitwise-pinned" + (f"; failed: {failed}" if failed else ""))


def _stagewise_pins(prob, stages=3):
    # each stage's iterate is the final one of a schedule truncated after it
    out = []
    for k in range(1, stages + 1):
        rep = solve_control_problem(prob, PenaltyConfig(stages=k, stop_early=False))
        out.append(_pins_exact(prob, rep.final_trajectory.values, rep.final_control.values))
    return out


# -- 8 ------------------------------------------------------------------------


def criterion_8(tmpdir=None):
    rng = np.random.default_rng(808)
    fixpoints = 0
    for _ in range(100):
        pf = parse_problem_text(json.dumps(random_problem_doc(rng)))
        text = serialize(pf)
        again = parse_problem_text(text)
        fixpoints += again == pf and serialize(again) == text
    with tempfile.TemporaryDirectory(dir=tmpdir) as tmp:
        tmp = Path(tmp)
        files = {"lq": tmp / "lq.json"}
        files["lq"].write_text(json.dumps({
            "kind": "control", "N": 1, "m": 1, "horizon_T": "2", "tau1": "1/2", "tau2": "1/4",
            "history": [{"interval": ["-1/2", "0"], "coefficients": [[1.0]]}], "alpha": [0.0],
            "A": [[-1.0]], "B": [[1.0]], "cost": {"Q": [[1.0]], "S": [[1.0]], "R": [[1.0]]},
        }))
        for k in range(3):
            files[f"random{k}"] = tmp / f"random{k}.json"
            files[f"random{k}"].write_text(json.dumps(random_problem_doc(rng)))
        runs = [("solve", "lq", ["--seed", "5"]), ("oracle", "lq", []), ("check", "random0", ["--seed", "11"]),
                ("check", "random1", ["--seed", "11"]), ("check", "random2", ["--seed", "11"])]
        identical = 0
        for cmd, name, flags in runs:
            texts = []
            for rep in range(2):
                out = tmp / f"{cmd}-{name}-{rep}.json"
                with contextlib.redirect_stdout(io.StringIO()):
                    cli_main([cmd, str(files[name]), "--report", str(out), *flags])
                lines = out.read_bytes().splitlines(keepends=True)
                texts.append(b"".join(line for line in lines if not line.lstrip().startswith(b'"timestamp"')))
            identical += texts[0] == texts[1]
    ok = fixpoints == 100 and identical == len(runs)
    return verdict(8, ok, f"{fixpoints}/100 parse-serialize-parse fixpoints, {identical}/{len(runs)} CLI report pairs byte-identical excluding timestamp")


def _fmt(values, spec=".1e"):
    return "[" + ", ".join(format(float(v), spec) for v in values) + "]"


# -- pytest entry points -------------------------------------------------------


def test_criterion_1_gradient_correctness():
    assert criterion_1()


def test_criterion_2_classical_reduction():
    assert criterion_2()


def test_criterion_3_el_consistency():
    assert criterion_3()


def test_criterion_4_penalty_convergence():
    assert criterion_4()


def test_criterion_5_stationarity_diagnostics():
    assert criterion_5()


def test_criterion_6_oracle_self_consistency():
    assert criterion_6()


def test_criterion_7_feasibility_pins():
    assert criterion_7()


def test_criterion_8_cli_determinism(tmp_path):
    assert criterion_8(tmp_path)


if __name__ == "__main__":
    results = [fn() for fn in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8)]
    sys.exit(0 if all(results) else 1)
