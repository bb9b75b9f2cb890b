"""Declarative JSON problem files.

Times (horizon, delays, history interval ends, mesh step) are written as
exact rationals, either integers or strings such as ``"1/4"``. Everything
else is plain JSON numbers. A minimal control file::

    {
      "kind": "control",
      "N": 1, "m": 1,
      "horizon_T": "2", "tau1": "1/2", "tau2": "1/4",
      "history": [{"interval": ["-1/2", "0"], "coefficients": [[1.0]]}],
      "alpha": [0.0],
      "A": [[-1.0]], "B": [[1.0]],
      "cost": {"Q": [[1.0]], "S": [[1.0]], "R": [[1.0]]}
    }

History pieces cover ``[-tau1, 0]``; a piece straddling ``-tau2`` is split
there. Missing optional blocks (``mesh``, ``penalty``, ``solver``,
``seed``) are filled with defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .descent import DIRECTIONS, InnerOptions
from .errors import ParseError, ValidationError
from .grid import build_grid, to_fraction
from .lagrangian import QuadraticCostSpec, diagonal_quadratic, quadratic_lagrangian
from .penalty import ControlProblem, PenaltyConfig, dumps
from .trajectory import HistorySpec, PolynomialPiece
from .variational import VariationalProblem

__all__ = [
    "ProblemFile",
    "parse_problem_file",
    "parse_problem_text",
    "load_problem",
    "serialize",
    "build_problem",
    "KINDS",
    "LAGRANGIANS",
]

KINDS = ("variational", "control")
LAGRANGIANS = ("diagonal_quadratic", "quadratic", "arc_length_sq")

DEFAULT_MESH = Fraction(1, 20)
PENALTY_DEFAULTS = {"c_start": 10.0, "growth": 10.0, "stages": 5, "dyn_residual_tol": 1e-3}
SOLVER_DEFAULTS = {"grad_tol": 1e-8, "max_iters": 50_000, "direction": "cg"}

_KNOWN = {
    "kind", "N", "m", "horizon_T", "tau1", "tau2", "history", "alpha", "A", "B",
    "cost", "lagrangian", "mesh", "penalty", "solver", "seed",
}


@dataclass(frozen=True)
class HistoryPiece:
    start: Fraction
    end: Fraction
    coefficients: tuple  # one tuple of polynomial coefficients per state component


@dataclass(frozen=True)
class ProblemFile:
    kind: str
    N: int
    m: int
    horizon_T: Fraction
    tau1: Fraction
    tau2: Fraction
    history: tuple
    alpha: tuple
    h_target: Fraction = DEFAULT_MESH
    A: tuple | None = None
    B: tuple | None = None
    cost: dict | None = None
    lagrangian: dict | None = None
    penalty: dict = field(default_factory=lambda: dict(PENALTY_DEFAULTS))
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    seed: int = 0

    def to_dict(self):
        doc = {
            "kind": self.kind,
            "N": self.N,
            "m": self.m,
            "horizon_T": str(self.horizon_T),
            "tau1": str(self.tau1),
            "tau2": str(self.tau2),
            "history": [
                {"interval": [str(p.start), str(p.end)], "coefficients": [list(r) for r in p.coefficients]}
                for p in self.history
            ],
            "alpha": list(self.alpha),
            "mesh": {"h_target": str(self.h_target)},
            "solver": dict(self.solver),
            "seed": self.seed,
        }
        if self.kind == "control":
            doc["A"] = [list(r) for r in self.A]
            doc["B"] = [list(r) for r in self.B]
            doc["cost"] = {k: _listify(v) for k, v in self.cost.items()}
            doc["penalty"] = dict(self.penalty)
        else:
            doc["lagrangian"] = {
                "name": self.lagrangian["name"],
                "params": {k: _listify(v) for k, v in self.lagrangian["params"].items()},
            }
        return doc

    def with_overrides(self, mesh=None, penalty=None, solver=None, seed=None):
        """Copy with command-line overrides applied (and re-validated)."""
        doc = self.to_dict()
        if mesh is not None:
            doc["mesh"] = {"h_target": str(to_fraction(mesh, "mesh"))}
        if penalty:
            doc.setdefault("penalty", {}).update(penalty)
        if solver:
            doc["solver"].update(solver)
        if seed is not None:
            doc["seed"] = seed
        return _validate(doc)


def _listify(v):
    if isinstance(v, tuple):
        return [_listify(x) for x in v]
    return v


def parse_problem_file(path):
    """Read and validate a problem file. ``OSError`` propagates for unreadable paths."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_problem_text(text)


def parse_problem_text(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", line=1)
    return _validate(doc)


def serialize(pf: ProblemFile):
    return dumps(pf.to_dict())


# --- validation -----------------------------------------------------------------


def _require(doc, key):
    if key not in doc:
        raise ValidationError(key, "is required")
    return doc[key]


def _int(value, name, minimum):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(name, "must be an integer")
    if value < minimum:
        raise ValidationError(name, f"must be >= {minimum}")
    return value


def _time(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, str, float)):
        raise ValidationError(name, "must be a rational number (integer or 'p/q' string)")
    try:
        return to_fraction(value, name)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(name, f"not a valid rational: {exc}") from exc


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, "must be a number")
    value = float(value)
    if not np.isfinite(value):
        raise ValidationError(name, "must be finite")
    return value


def _matrix(value, name, rows, cols):
    if not isinstance(value, list) or len(value) != rows:
        raise ValidationError(name, f"must be a list of {rows} rows")
    out = []
    for r, row in enumerate(value):
        if not isinstance(row, list) or len(row) != cols:
            raise ValidationError(f"{name}[{r}]", f"must have {cols} entries")
        out.append(tuple(_number(v, f"{name}[{r}]") for v in row))
    return tuple(out)


def _vector(value, name, size):
    if not isinstance(value, list) or len(value) != size:
        raise ValidationError(name, f"must be a list of {size} numbers")
    return tuple(_number(v, name) for v in value)


def _validate(doc):
    unknown = sorted(set(doc) - _KNOWN)
    if unknown:
        raise ValidationError(unknown[0], "unknown field")
    kind = _require(doc, "kind")
    if kind not in KINDS:
        raise ValidationError("kind", f"must be one of {KINDS}")
    n = _int(_require(doc, "N"), "N", 1)
    m = _int(doc.get("m", 0), "m", 1 if kind == "control" else 0)
    horizon = _time(_require(doc, "horizon_T"), "horizon_T")
    tau1 = _time(_require(doc, "tau1"), "tau1")
    tau2 = _time(_require(doc, "tau2"), "tau2")
    if horizon <= 0:
        raise ValidationError("horizon_T", "must be > 0")
    if tau2 <= 0:
        raise ValidationError("tau2", "must be > 0")
    if not tau2 < tau1:
        raise ValidationError("tau2", "must be < tau1")
    if not tau1 < horizon:
        raise ValidationError("tau1", "must be < horizon_T")

    mesh = doc.get("mesh", {})
    if not isinstance(mesh, dict):
        raise ValidationError("mesh", "must be an object")
    h_target = _time(mesh.get("h_target", str(DEFAULT_MESH)), "mesh.h_target")
    if h_target <= 0:
        raise ValidationError("mesh.h_target", "must be > 0")
    try:
        build_grid(horizon, tau1, tau2, h_target)
    except ValueError as exc:
        raise ValidationError("mesh.h_target", str(exc)) from exc

    history = _history(_require(doc, "history"), n, tau1, tau2)
    alpha = _vector(_require(doc, "alpha"), "alpha", n)
    solver = _solver(doc.get("solver", {}))
    seed = _int(doc.get("seed", 0), "seed", 0)

    fields = dict(
        kind=kind, N=n, m=m, horizon_T=horizon, tau1=tau1, tau2=tau2, history=history,
        alpha=alpha, h_target=h_target, solver=solver, seed=seed,
    )
    if kind == "control":
        fields["A"] = _matrix(_require(doc, "A"), "A", n, n)
        fields["B"] = _matrix(_require(doc, "B"), "B", n, m)
        fields["cost"] = _cost(_require(doc, "cost"), n, m)
        fields["penalty"] = _penalty(doc.get("penalty", {}))
        if "lagrangian" in doc:
            raise ValidationError("lagrangian", "only allowed for kind 'variational'")
    else:
        fields["lagrangian"] = _lagrangian(_require(doc, "lagrangian"), n)
        fields["penalty"] = {}
        for key in ("A", "B", "cost", "penalty"):
            if key in doc:
                raise ValidationError(key, "only allowed for kind 'control'")
    return ProblemFile(**fields)


def _history(value, n, tau1, tau2):
    if not isinstance(value, list) or not value:
        raise ValidationError("history", "must be a non-empty list of pieces")
    pieces = []
    for k, item in enumerate(value):
        name = f"history[{k}]"
        if not isinstance(item, dict):
            raise ValidationError(name, "must be an object")
        interval = _require_field(item, "interval", name)
        if not isinstance(interval, list) or len(interval) != 2:
            raise ValidationError(f"{name}.interval", "must be [start, end]")
        start = _time(interval[0], f"{name}.interval")
        end = _time(interval[1], f"{name}.interval")
        if not start < end:
            raise ValidationError(f"{name}.interval", "start must be < end")
        coeffs = _require_field(item, "coefficients", name)
        if not isinstance(coeffs, list) or len(coeffs) != n:
            raise ValidationError(f"{name}.coefficients", f"must have {n} rows (one per state)")
        degree = None
        rows = []
        for r, row in enumerate(coeffs):
            if not isinstance(row, list) or not row:
                raise ValidationError(f"{name}.coefficients[{r}]", "must be a non-empty list")
            if degree is not None and len(row) != degree:
                raise ValidationError(f"{name}.coefficients", "rows must have equal length")
            degree = len(row)
            rows.append(tuple(_number(v, f"{name}.coefficients[{r}]") for v in row))
        pieces.append(HistoryPiece(start, end, tuple(rows)))
    pieces.sort(key=lambda p: p.start)
    if pieces[0].start != -tau1 or pieces[-1].end != 0:
        raise ValidationError("history", f"must cover exactly [{-tau1}, 0]")
    for left, right in zip(pieces, pieces[1:]):
        if left.end != right.start:
            raise ValidationError("history", f"pieces must be contiguous (break at {left.end})")
    return tuple(pieces)


def _require_field(item, key, name):
    if key not in item:
        raise ValidationError(f"{name}.{key}", "is required")
    return item[key]


def _solver(block):
    if not isinstance(block, dict):
        raise ValidationError("solver", "must be an object")
    unknown = sorted(set(block) - set(SOLVER_DEFAULTS))
    if unknown:
        raise ValidationError(f"solver.{unknown[0]}", "unknown field")
    out = dict(SOLVER_DEFAULTS)
    out.update(block)
    out["grad_tol"] = _number(out["grad_tol"], "solver.grad_tol")
    if out["grad_tol"] <= 0:
        raise ValidationError("solver.grad_tol", "must be > 0")
    out["max_iters"] = _int(out["max_iters"], "solver.max_iters", 1)
    if out["direction"] not in DIRECTIONS:
        raise ValidationError("solver.direction", f"must be one of {DIRECTIONS}")
    return out


def _penalty(block):
    if not isinstance(block, dict):
        raise ValidationError("penalty", "must be an object")
    unknown = sorted(set(block) - set(PENALTY_DEFAULTS))
    if unknown:
        raise ValidationError(f"penalty.{unknown[0]}", "unknown field")
    out = dict(PENALTY_DEFAULTS)
    out.update(block)
    out["c_start"] = _number(out["c_start"], "penalty.c_start")
    if out["c_start"] <= 0:
        raise ValidationError("penalty.c_start", "must be > 0")
    out["growth"] = _number(out["growth"], "penalty.growth")
    if out["growth"] <= 1:
        raise ValidationError("penalty.growth", "must be > 1")
    out["stages"] = _int(out["stages"], "penalty.stages", 1)
    out["dyn_residual_tol"] = _number(out["dyn_residual_tol"], "penalty.dyn_residual_tol")
    if out["dyn_residual_tol"] < 0:
        raise ValidationError("penalty.dyn_residual_tol", "must be >= 0")
    return out


def _cost(block, n, m):
    if not isinstance(block, dict):
        raise ValidationError("cost", "must be an object")
    unknown = sorted(set(block) - {"Q", "S", "R", "q", "s", "r"})
    if unknown:
        raise ValidationError(f"cost.{unknown[0]}", "unknown field")
    out = {
        "Q": _matrix(_require_field(block, "Q", "cost"), "cost.Q", n, n),
        "S": _matrix(_require_field(block, "S", "cost"), "cost.S", n, n),
        "R": _matrix(_require_field(block, "R", "cost"), "cost.R", m, m),
    }
    for key, size in (("q", n), ("s", n), ("r", m)):
        if key in block:
            out[key] = _vector(block[key], f"cost.{key}", size)
    for key, psd in (("Q", "positive semidefinite"), ("S", "positive semidefinite"), ("R", "positive definite")):
        mat = np.array(out[key])
        if not np.allclose(mat, mat.T, rtol=0, atol=1e-12):
            raise ValidationError(f"cost.{key}", "must be symmetric")
        low = np.linalg.eigvalsh(mat).min()
        if (key == "R" and low <= 1e-12) or low < -1e-12:
            raise ValidationError(f"cost.{key}", f"must be {psd}")
    return out


def _lagrangian(block, n):
    if not isinstance(block, dict):
        raise ValidationError("lagrangian", "must be an object")
    name = _require_field(block, "name", "lagrangian")
    if name not in LAGRANGIANS:
        raise ValidationError("lagrangian.name", f"must be one of {LAGRANGIANS}")
    params = block.get("params", {})
    if not isinstance(params, dict):
        raise ValidationError("lagrangian.params", "must be an object")
    if name == "diagonal_quadratic":
        unknown = sorted(set(params) - {"a", "abar", "b", "bbar"})
        if unknown:
            raise ValidationError(f"lagrangian.params.{unknown[0]}", "unknown field")
        clean = {k: _number(params.get(k, 0.0), f"lagrangian.params.{k}") for k in ("a", "abar", "b", "bbar")}
    elif name == "quadratic":
        unknown = sorted(set(params) - {"weight", "linear"})
        if unknown:
            raise ValidationError(f"lagrangian.params.{unknown[0]}", "unknown field")
        clean = {"weight": _matrix(_require_field(params, "weight", "lagrangian.params"),
                                   "lagrangian.params.weight", 4 * n, 4 * n)}
        if "linear" in params:
            clean["linear"] = _vector(params["linear"], "lagrangian.params.linear", 4 * n)
    else:
        if params:
            raise ValidationError(f"lagrangian.params.{sorted(params)[0]}", "unknown field")
        clean = {}
    return {"name": name, "params": clean}


# --- model construction ---------------------------------------------------------


def _history_spec(pf):
    """Split pieces at -tau2 into the theta1 / theta2 families."""
    cut = -pf.tau2
    theta1, theta2 = [], []
    for p in pf.history:
        coeffs = np.array(p.coefficients, dtype=float)
        if p.end <= cut:
            theta1.append(PolynomialPiece(p.start, p.end, coeffs))
        elif p.start >= cut:
            theta2.append(PolynomialPiece(p.start, p.end, coeffs))
        else:
            theta1.append(PolynomialPiece(p.start, cut, coeffs))
            theta2.append(PolynomialPiece(cut, p.end, coeffs))
    return HistorySpec(pf.tau1, pf.tau2, tuple(theta1), tuple(theta2))


def _inner_options(pf):
    s = pf.solver
    return InnerOptions(grad_tol=s["grad_tol"], max_iters=s["max_iters"], direction=s["direction"])


def build_problem(pf: ProblemFile):
    """Model objects for a validated file.

    Returns ``(problem, options)`` where ``options`` is a :class:`PenaltyConfig`
    for control files and an :class:`InnerOptions` for variational files.
    """
    grid = build_grid(pf.horizon_T, pf.tau1, pf.tau2, pf.h_target)
    hist = _history_spec(pf)
    inner = _inner_options(pf)
    if pf.kind == "control":
        spec = QuadraticCostSpec(**{k: np.array(v, dtype=float) for k, v in pf.cost.items()})
        prob = ControlProblem(grid, np.array(pf.A), np.array(pf.B), spec.to_running_cost(), hist, np.array(pf.alpha))
        p = pf.penalty
        cfg = PenaltyConfig(p["c_start"], p["growth"], p["stages"], p["dyn_residual_tol"], inner)
        return prob, cfg
    name, params = pf.lagrangian["name"], pf.lagrangian["params"]
    if name == "diagonal_quadratic":
        lag = diagonal_quadratic(pf.N, **params)
    elif name == "quadratic":
        lag = quadratic_lagrangian(np.array(params["weight"]), params.get("linear"))
    else:
        lag = diagonal_quadratic(pf.N, b=1.0)  # |x'|^2
        lag.name = "arc_length_sq"
    return VariationalProblem(grid, lag, hist, np.array(pf.alpha)), inner


def load_problem(path):
    """Parse a file and build its model objects in one step."""
    return build_problem(parse_problem_file(path))

