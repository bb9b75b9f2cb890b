"""Command-line front end.

Subcommands:

* ``solve FILE``     penalty (control files) or direct (variational files) solve
* ``check FILE``     validate the file and finite-difference check the gradient
* ``oracle FILE``    direct KKT solve of a control file
* ``residual FILE --input CSV``  residuals of a stored trajectory

Exit codes: 0 success / converged, 2 ran but did not converge (or a check
failed), 1 error. Reports are JSON with 17-digit floats; stdout gets a
one-line summary and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import DelayOCError, ParseError, ValidationError
from .lagrangian import make_penalized
from .oracle import fd_gradient, lq_direct_solve
from .penalty import compute_phi, dumps, solve_control_problem
from .problemfile import build_problem, parse_problem_file
from .trajectory import ControlPath, Trajectory, init_trajectory, read_csv, write_csv
from .variational import DiscreteFunctional, el_residual, solve_variational

log = logging.getLogger("delayoc")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
FD_CHECK_TOL = 1e-5


def build_parser():
    parser = argparse.ArgumentParser(
        prog="delayoc",
        description="Delayed variational and optimal-control solver (penalty method).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("problem", help="problem file (JSON)")
        p.add_argument("--mesh", metavar="H", help="target step, e.g. 1/40 or 0.025")
        p.add_argument("--inner-tol", type=float, metavar="T", help="inner gradient tolerance")
        p.add_argument("--seed", type=int, metavar="S", help="seed for randomized checks")
        p.add_argument("--report", metavar="PATH", help="write the JSON report here")
        p.add_argument("--trajectory", metavar="PATH", help="write the trajectory CSV here")

    p = sub.add_parser("solve", help="solve the problem in FILE")
    common(p)
    p.add_argument("--penalty-start", type=float, metavar="C", help="first penalty weight")
    p.add_argument("--penalty-growth", type=float, metavar="G", help="penalty growth factor")
    p.add_argument("--stages", type=int, metavar="K", help="number of penalty stages")
    p.add_argument("--outer-tol", type=float, metavar="T", help="dynamics residual tolerance")

    p = sub.add_parser("check", help="validate FILE and finite-difference check the gradient")
    common(p)
    p.add_argument("--penalty-start", type=float, metavar="C", help="penalty weight used for the check")

    p = sub.add_parser("oracle", help="direct KKT solve of a control FILE")
    common(p)

    p = sub.add_parser("residual", help="residuals of a trajectory CSV for FILE")
    common(p)
    p.add_argument("--input", required=True, metavar="CSV", help="trajectory written by 'solve'")
    return parser


def _load(args):
    pf = parse_problem_file(args.problem)
    penalty = {}
    for flag, key in (("penalty_start", "c_start"), ("penalty_growth", "growth"),
                      ("stages", "stages"), ("outer_tol", "dyn_residual_tol")):
        value = getattr(args, flag, None)
        if value is not None:
            penalty[key] = value
    if pf.kind != "control":
        penalty = {}
    solver = {"grad_tol": args.inner_tol} if args.inner_tol is not None else None
    pf = pf.with_overrides(mesh=args.mesh, penalty=penalty, solver=solver, seed=args.seed)
    prob, options = build_problem(pf)
    return pf, prob, options


def _header(command, pf, prob):
    return {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "command": command,
        "version": __version__,
        "kind": pf.kind,
        "seed": pf.seed,
        "grid": prob.grid.describe(),
    }


def _pins(prob, traj, u=None):
    """Bitwise check of the history, terminal and u(0) pins."""
    grid = prob.grid
    x = traj.values
    ok = bool(
        np.array_equal(x[: grid.n_history + 1], prob.history.sample(grid))
        and np.array_equal(x[-1], prob.alpha)
    )
    if u is not None:
        ok = ok and bool(np.all(np.asarray(u)[0] == 0.0))
    return ok


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_solve(args):
    pf, prob, options = _load(args)
    doc = _header("solve", pf, prob)
    if pf.kind == "control":
        report = solve_control_problem(prob, options)
        doc.update(report.to_dict())
        doc["pins_exact"] = _pins(prob, report.final_trajectory, report.final_control.values)
        converged = report.converged
        traj, control = report.final_trajectory, report.final_control
        last = report.stages[-1]
        summary = (
            f"solve: {'converged' if converged else 'NOT converged'}; cost {report.objective_estimate:.10g}, "
            f"dynamics residual {last.dyn_residual_norm:.3e} after {len(report.stages)} stage(s)"
        )
    else:
        traj, inner = solve_variational(prob, options=options)
        control = None
        res = el_residual(prob, traj)
        converged = inner.converged
        doc["converged"] = converged
        doc["objective"] = inner.final_value
        doc["inner"] = inner.to_dict()
        doc["el_residual"] = res.summary()
        doc["pins_exact"] = _pins(prob, traj)
        summary = (
            f"solve: {'converged' if converged else 'NOT converged'}; J = {inner.final_value:.10g}, "
            f"EL norms {' '.join(f'{v:.3e}' for v in res.norms)}"
        )
    if args.report:
        _write(args.report, dumps(doc))
    if args.trajectory:
        write_csv(args.trajectory, traj, control)
    print(summary)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_check(args):
    pf, prob, options = _load(args)
    rng = np.random.default_rng(pf.seed)
    if pf.kind == "control":
        c = options.c_start if args.penalty_start is None else args.penalty_start
        x0 = init_trajectory(prob.grid, prob.history, prob.alpha, "linear").values
        fn = DiscreteFunctional(prob.grid, make_penalized(prob.cost, prob.A, prob.B, c), x0)
        z0 = fn.pack(x0, np.zeros((prob.grid.n_main, prob.control_dim)))
    else:
        fn = prob.functional(prob.initial_trajectory())
        z0 = fn.pack(prob.initial_trajectory().values)
    z = z0 + np.where(fn.free_mask, rng.normal(size=z0.shape), 0.0)
    analytic = fn.gradient(z)
    numeric = fd_gradient(fn.value, z, 1e-6, fn.free_mask)
    scale = np.maximum(np.abs(numeric), 1.0)
    rel = float(np.max(np.abs(analytic - numeric)[fn.free_mask] / scale[fn.free_mask]))
    ok = rel <= FD_CHECK_TOL
    doc = _header("check", pf, prob)
    doc.update({"valid": True, "gradient_max_rel_error": rel, "tolerance": FD_CHECK_TOL,
                "free_coordinates": int(fn.free_mask.sum()), "passed": ok})
    if args.report:
        _write(args.report, dumps(doc))
    print(f"check: file valid; gradient max relative error {rel:.3e} ({'ok' if ok else 'FAILED'})")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_oracle(args):
    pf, prob, _ = _load(args)
    if pf.kind != "control":
        raise ValidationError("kind", "the oracle subcommand needs a control problem")
    sol = lq_direct_solve(prob)
    doc = _header("oracle", pf, prob)
    doc.update({"objective": sol.objective, "kkt_residual": sol.residual, "condition": sol.condition})
    if args.report:
        _write(args.report, dumps(doc))
    if args.trajectory:
        write_csv(args.trajectory, sol.trajectory(prob.grid), sol.control(prob.grid))
    print(f"oracle: objective {sol.objective:.10g}, KKT residual {sol.residual:.3e}")
    return EXIT_OK


def cmd_residual(args):
    pf, prob, _ = _load(args)
    x, u = read_csv(args.input, prob.grid)
    traj = Trajectory(prob.grid, x)
    doc = _header("residual", pf, prob)
    if pf.kind == "control":
        if u is None:
            raise ValidationError("input", "control problems need u columns in the CSV")
        phi = compute_phi(prob, traj, ControlPath(prob.grid, u))
        w = prob.grid.main_weights
        norm = float(np.sqrt(w @ np.einsum("ij,ij->i", phi, phi)))
        doc.update({"dyn_residual_norm": norm, "phi_sup_norm": float(np.max(np.linalg.norm(phi[w > 0], axis=1)))})
        summary = f"residual: dynamics residual {norm:.3e}"
    else:
        res = el_residual(prob, traj)
        doc["el_residual"] = res.summary()
        if args.trajectory:
            res.write_csv(args.trajectory)
        summary = f"residual: EL norms {' '.join(f'{v:.3e}' for v in res.norms)}"
    if args.report:
        _write(args.report, dumps(doc))
    print(summary)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "oracle": cmd_oracle, "residual": cmd_residual}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"IoError: {exc}", file=sys.stderr)
    except ValidationError as exc:
        print(f"ValidationError: field '{exc.field}': {exc.rule}", file=sys.stderr)
    except ParseError as exc:
        print(f"ParseError: {exc}", file=sys.stderr)
    except (DelayOCError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
