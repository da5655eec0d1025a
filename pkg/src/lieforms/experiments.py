"""Manufactured-solution experiments: convergence and stability sweeps.

Experiments I-III solve the transient problem

    du/dt + eps curl rot u + beta div u + R grad(u . R beta) = f

for a vector proxy ``u`` (a 1-form) with ``R`` the rotation by +90 degrees.
Its convection term is the negative adjoint of the 1-form Lie derivative, so
these runs use the adjoint schemes. Experiment IV solves the stationary
problem ``u + eps curl rot u + L_beta u = f`` with the direct Lie derivative
``L_beta u = grad(beta . u) + rot(u) R beta``.
"""
import csv
import math
import os
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import sympy as sp

from .errors import InvalidArgumentError, LieFormsError
from .flow import VelocityField
from .mesh import build_structured_mesh, write_vtk
from .schemes import SchemeConfig, SchemeOperators, solve_stationary
from .whitney import (AnalyticForm, Cochain, assemble_mass, cochain_proxy, derham_interpolate,
                      error_norm)

_x, _y, _t = sp.symbols("x y t", real=True)

TRANSIENT_SCHEMES = ("sl-adjoint", "eul-implicit-standard", "eul-implicit-upwind")
STATIONARY_VARIANTS = ("standard", "upwind")
SATURATED = float("inf")


# ----------------------------------------------------------------------
# symbolic operators on proxies

def _rot(u):
    return sp.diff(u[1], _x) - sp.diff(u[0], _y)


def _curl(s):
    return (sp.diff(s, _y), -sp.diff(s, _x))


def _grad(s):
    return (sp.diff(s, _x), sp.diff(s, _y))


def _div(u):
    return sp.diff(u[0], _x) + sp.diff(u[1], _y)


def _r90(v):
    return (-v[1], v[0])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def velocity_expression(name):
    """Symbolic velocity of the named experiment field."""
    if name in ("I", "III", "IV"):
        return ((1 - _x**2) ** 2 * (_y - _y**3), -((1 - _y**2) ** 2) * (_x - _x**3))
    if name == "II":
        return (sp.sin(sp.pi * _x) * (1 - _y**2), sp.sin(sp.pi * _y) * (1 - _x**2))
    raise InvalidArgumentError(f"unknown experiment {name!r}")


def solution_expression(transient=True):
    base = (sp.sin(sp.pi * _x) * sp.sin(sp.pi * _y), (1 - _x**2) * (1 - _y**2))
    if not transient:
        return base
    c = sp.cos(2 * sp.pi * _t)
    return (c * base[0], c * base[1])


def adjoint_source(u, beta, eps):
    """``du/dt + eps curl rot u + beta div u + R grad(u . R beta)``."""
    r = _curl(_rot(u))
    g = _r90(_grad(_dot(u, _r90(beta))))
    du = _div(u)
    return tuple(sp.diff(u[i], _t) + eps * r[i] + beta[i] * du + g[i] for i in range(2))


def direct_stationary_source(u, beta, eps, reaction=1):
    """``reaction u + eps curl rot u + grad(beta . u) + rot(u) R beta``."""
    r = _curl(_rot(u))
    g = _grad(_dot(beta, u))
    rb = _r90(beta)
    ru = _rot(u)
    return tuple(reaction * u[i] + eps * r[i] + g[i] + ru * rb[i] for i in range(2))


def _vector_function(expr):
    fs = [sp.lambdify((_x, _y, _t), e, "numpy") for e in expr]

    def evaluate(pts, t=0.0):
        pts = np.atleast_2d(pts)
        out = np.empty((len(pts), 2))
        for i, f in enumerate(fs):
            out[:, i] = np.broadcast_to(f(pts[:, 0], pts[:, 1], t), (len(pts),))
        return out

    return evaluate


def _scalar_function(expr):
    f = sp.lambdify((_x, _y, _t), expr, "numpy")

    def evaluate(pts, t=0.0):
        pts = np.atleast_2d(pts)
        return np.broadcast_to(np.asarray(f(pts[:, 0], pts[:, 1], t), dtype=float), (len(pts),)).copy()

    return evaluate


def velocity_field(name):
    """Experiment velocity with its analytic Jacobian."""
    b = velocity_expression(name)
    jac = [[sp.diff(b[i], v) for v in (_x, _y)] for i in range(2)]
    fj = [[_scalar_function(jac[i][j]) for j in range(2)] for i in range(2)]
    func = _vector_function(b)

    def jacobian(pts, t=0.0):
        pts = np.atleast_2d(pts)
        out = np.empty((len(pts), 2, 2))
        for i in range(2):
            for j in range(2):
                out[:, i, j] = fj[i][j](pts, t)
        return out

    return VelocityField(func, jacobian, stationary=True)


@dataclass
class ManufacturedProblem:
    """Exact solution, source and velocity of one experiment."""

    experiment: str
    epsilon: float
    velocity: VelocityField
    exact: AnalyticForm
    source: AnalyticForm
    transient: bool
    u_expr: tuple = field(repr=False, default=())
    beta_expr: tuple = field(repr=False, default=())
    f_expr: tuple = field(repr=False, default=())


@lru_cache(maxsize=None)
def _symbolic(experiment, epsilon):
    transient = experiment != "IV"
    beta = velocity_expression(experiment)
    u = solution_expression(transient)
    eps = sp.Float(epsilon)
    f = adjoint_source(u, beta, eps) if transient else direct_stationary_source(u, beta, eps)
    return transient, u, beta, f


def manufactured_problem(experiment, epsilon):
    """Build the exact solution and symbolically derived source."""
    if experiment not in ("I", "II", "III", "IV"):
        raise InvalidArgumentError(f"unknown experiment {experiment!r}")
    transient, u, beta, f = _symbolic(experiment, float(epsilon))
    exact = AnalyticForm(1, _vector_function(u), _scalar_function(_rot(u)))
    source = AnalyticForm(1, _vector_function(f))
    return ManufacturedProblem(experiment, epsilon, velocity_field(experiment), exact, source,
                               transient, u, beta, f)


def finite_difference_source(problem, pts, t, step=1e-4):
    """Apply the continuous operator to the exact solution by central differences."""
    u = problem.exact
    b = problem.velocity
    eps = problem.epsilon
    ex, ey = np.array([step, 0.0]), np.array([0.0, step])

    def rot(p, tt):
        return ((u(p + ex, tt)[:, 1] - u(p - ex, tt)[:, 1])
                - (u(p + ey, tt)[:, 0] - u(p - ey, tt)[:, 0])) / (2 * step)

    curl_rot = np.stack([(rot(pts + ey, t) - rot(pts - ey, t)) / (2 * step),
                         -(rot(pts + ex, t) - rot(pts - ex, t)) / (2 * step)], axis=1)
    bv = b(pts, t)
    if problem.transient:
        dudt = (u(pts, t + step) - u(pts, t - step)) / (2 * step)
        div = ((u(pts + ex, t)[:, 0] - u(pts - ex, t)[:, 0])
               + (u(pts + ey, t)[:, 1] - u(pts - ey, t)[:, 1])) / (2 * step)

        def s(p):
            rb = b(p, t)
            return np.einsum("pd,pd->p", u(p, t), np.stack([-rb[:, 1], rb[:, 0]], axis=1))

        gs = np.stack([(s(pts + ex) - s(pts - ex)) / (2 * step), (s(pts + ey) - s(pts - ey)) / (2 * step)], axis=1)
        return dudt + eps * curl_rot + bv * div[:, None] + np.stack([-gs[:, 1], gs[:, 0]], axis=1)

    def bu(p):
        return np.einsum("pd,pd->p", b(p, t), u(p, t))

    grad_bu = np.stack([(bu(pts + ex) - bu(pts - ex)) / (2 * step), (bu(pts + ey) - bu(pts - ey)) / (2 * step)], axis=1)
    rb = np.stack([-bv[:, 1], bv[:, 0]], axis=1)
    return u(pts, t) + eps * curl_rot + grad_bu + rot(pts, t)[:, None] * rb


def validate_source(problem, samples=100, seed=0, tol=1e-6):
    """Largest deviation between the symbolic source and the finite-difference
    operator at random space-time points; raises if above ``tol``."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.95, 0.95, size=(samples, 2))
    times = rng.uniform(0.0, 0.5, size=samples) if problem.transient else np.zeros(samples)
    worst = 0.0
    for p, tt in zip(pts, times):
        fd = finite_difference_source(problem, p[None], tt)
        worst = max(worst, float(np.max(np.abs(fd - problem.source(p[None], tt)))))
    if worst > tol:
        raise LieFormsError(f"manufactured source disagrees with the operator ({worst:.2e})")
    return worst


# ----------------------------------------------------------------------
# convergence bookkeeping

def convergence_rates(errors, h):
    """Pairwise rates ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})``.

    A zero error yields the ``SATURATED`` sentinel (``inf``)."""
    errors = [float(e) for e in errors]
    h = [float(v) for v in h]
    if len(errors) != len(h) or len(errors) < 2:
        raise InvalidArgumentError("need matching error and mesh-size lists of length >= 2")
    if any(v <= 0 for v in h) or any(e < 0 for e in errors):
        raise InvalidArgumentError("mesh sizes must be positive and errors non-negative")
    rates = []
    for i in range(len(errors) - 1):
        if errors[i] == 0.0 or errors[i + 1] == 0.0:
            rates.append(SATURATED)
        else:
            rates.append(math.log(errors[i] / errors[i + 1]) / math.log(h[i] / h[i + 1]))
    return rates


def least_squares_rate(errors, h):
    """Slope of the least-squares line through ``(log h, log e)``."""
    return float(np.polyfit(np.log(np.asarray(h, float)), np.log(np.asarray(errors, float)), 1)[0])


def mesh_for_size(target):
    """Structured mesh whose longest edge is closest to ``target``."""
    n = max(1, round(2.0 * math.sqrt(2.0) / target))
    return build_structured_mesh(n)


# ----------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """Settings of one experiment sweep; ``None`` fields take the defaults."""

    experiment: str
    schemes: Optional[list] = None
    epsilons: Optional[list] = None
    cfls: Optional[list] = None
    refinements: Optional[list] = None
    t_end: Optional[float] = None
    mesh_size: Optional[float] = None
    integrator: str = "euler"
    out: Optional[str] = None
    vtk_dir: Optional[str] = None

    def __post_init__(self):
        exp = self.experiment
        if exp not in ("I", "II", "III", "IV"):
            raise InvalidArgumentError(f"unknown experiment {exp!r}")
        if self.schemes is None:
            self.schemes = {"III": ["sl-adjoint", "eul-implicit-upwind", "eul-semi-implicit-upwind"],
                            "IV": list(STATIONARY_VARIANTS)}.get(exp, list(TRANSIENT_SCHEMES))
        if self.epsilons is None:
            self.epsilons = {"III": [1e-3, 1e-9], "IV": [1.0, 1e-5]}.get(exp, [1.0])
        if self.cfls is None:
            self.cfls = ([round(0.1 * k, 1) for k in range(1, 9)] if exp == "III"
                         else [] if exp == "IV" else [0.1, 0.8])
        if self.refinements is None:
            self.refinements = [] if exp == "III" else [4, 8, 16, 32, 64]
        if self.t_end is None:
            self.t_end = 0.5 if exp == "III" else 0.25
        if exp == "III" and self.mesh_size is None:
            self.mesh_size = 0.11
        valid = STATIONARY_VARIANTS if exp == "IV" else (
            "sl-direct", "sl-adjoint", "eul-implicit-standard", "eul-implicit-upwind", "eul-semi-implicit-upwind")
        for s in self.schemes:
            if s not in valid:
                raise InvalidArgumentError(f"scheme {s!r} is not available for experiment {exp}")


CSV_FIELDS = ["experiment", "scheme", "epsilon", "cfl", "n", "h", "dt", "steps", "norm", "error",
              "rate", "initial_norm", "final_norm", "iterations", "max_weak_closedness",
              "max_clamp", "wall_time", "status", "message"]


def _meshes(spec):
    if spec.experiment == "III" and not spec.refinements:
        return [mesh_for_size(spec.mesh_size)]
    return [build_structured_mesh(n) for n in spec.refinements]


def _n_of(mesh):
    return int(round(math.sqrt(mesh.n_triangles / 2)))


def _transient_row(spec, problem, scheme, cfl, mesh):
    cfg = SchemeConfig(scheme, 1, problem.velocity, epsilon=problem.epsilon, cfl=cfl,
                       t_end=spec.t_end, source=problem.source, formulation="adjoint",
                       integrator=spec.integrator)
    times = cfg.time_grid(mesh)
    row = {"experiment": spec.experiment, "scheme": scheme, "epsilon": problem.epsilon, "cfl": cfl,
           "n": _n_of(mesh), "h": mesh.h, "dt": times[1] - times[0], "steps": len(times) - 1, "norm": "L2"}
    ops = SchemeOperators(mesh, cfg)
    w = derham_interpolate(mesh, 1, problem.exact, 0.0)
    w[mesh.boundary_edges] = 0.0
    def norm(v):
        return float(np.sqrt(max(v @ (ops.mass @ v), 0.0)))

    row["initial_norm"] = norm(w)
    its, wc, clamp = 0, 0.0, 0.0
    for k in range(len(times) - 1):
        w, rep = ops.step(w, times[k], times[k + 1], k + 1)
        its += rep.iterations
        wc = max(wc, rep.weak_closedness or 0.0)
        clamp = max(clamp, rep.max_clamp)
        if spec.vtk_dir:
            _snapshot(spec, mesh, w, scheme, cfl, problem.epsilon, k + 1)
        if not np.all(np.isfinite(w)):
            break
    row.update(final_norm=norm(w), iterations=its, max_weak_closedness=wc, max_clamp=clamp)
    if np.all(np.isfinite(w)):
        row["error"] = error_norm(mesh, Cochain(mesh, 1, w), problem.exact, spec.t_end, "L2")
    else:
        row["error"] = float("nan")
    return row


def _stationary_row(spec, problem, variant, mesh):
    row = {"experiment": "IV", "scheme": variant, "epsilon": problem.epsilon, "cfl": "",
           "n": _n_of(mesh), "h": mesh.h, "dt": "", "steps": 0, "norm": "Hcurl", "iterations": 0}
    sol = solve_stationary(mesh, problem.velocity, problem.epsilon, problem.source, variant)
    row["error"] = error_norm(mesh, sol, problem.exact, 0.0, "Hd")
    w = sol.coefficients
    row["final_norm"] = float(np.sqrt(w @ (assemble_mass(mesh, 1) @ w)))
    if spec.vtk_dir:
        _snapshot(spec, mesh, sol.coefficients, variant, "", problem.epsilon, 0)
    return row


def _snapshot(spec, mesh, w, scheme, cfl, eps, step):
    os.makedirs(spec.vtk_dir, exist_ok=True)
    tris = np.arange(mesh.n_triangles)
    lam = np.full((mesh.n_triangles, 1, 3), 1.0 / 3.0)
    proxy = cochain_proxy(mesh, 1, w, tris, lam)[:, 0, :]
    name = f"exp{spec.experiment}_{scheme}_cfl{cfl}_eps{eps:g}_n{_n_of(mesh)}_step{step:04d}.vtk"
    write_vtk(mesh, os.path.join(spec.vtk_dir, name), cell_data={"u": proxy})


def run_experiment(spec, log=None):
    """Run every (scheme, epsilon, CFL, mesh) cell; failures are recorded per row.

    Returns the list of row dictionaries (also written to ``spec.out``)."""
    rows = []
    meshes = _meshes(spec)
    for eps in spec.epsilons:
        problem = manufactured_problem(spec.experiment, eps)
        validate_source(problem)
        for scheme in spec.schemes:
            cfls = spec.cfls if spec.experiment != "IV" else [None]
            for cfl in cfls:
                group = []
                for mesh in meshes:
                    start = time.perf_counter()
                    try:
                        if spec.experiment == "IV":
                            row = _stationary_row(spec, problem, scheme, mesh)
                        else:
                            row = _transient_row(spec, problem, scheme, cfl, mesh)
                        row["status"] = "ok" if np.isfinite(row["error"]) else "diverged"
                        row["message"] = ""
                    except LieFormsError as exc:
                        row = {"experiment": spec.experiment, "scheme": scheme, "epsilon": eps,
                               "cfl": cfl if cfl is not None else "", "n": _n_of(mesh), "h": mesh.h,
                               "status": "failed", "message": str(exc), "error": float("nan")}
                    row["wall_time"] = time.perf_counter() - start
                    _attach_rate(row, group[-1] if group else None)
                    group.append(row)
                    if log is not None:
                        log(row)
                rows += group
    if spec.out:
        write_csv(rows, spec.out)
    return rows


def _attach_rate(row, prev):
    row["rate"] = ""
    if prev is None:
        return
    e, e0 = row.get("error", float("nan")), prev.get("error", float("nan"))
    if np.isfinite(e) and np.isfinite(e0) and row["h"] != prev["h"]:
        row["rate"] = convergence_rates([e0, e], [prev["h"], row["h"]])[0]


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: r.get(k, "") for k in CSV_FIELDS})


def all_completed(rows):
    return all(r.get("status") == "ok" for r in rows)


# ----------------------------------------------------------------------
# key=value configuration files

_CONFIG_KEYS = {
    "experiment": str,
    "schemes": lambda v: [s.strip() for s in v.split(",") if s.strip()],
    "epsilons": lambda v: [float(s) for s in v.split(",")],
    "cfls": lambda v: [float(s) for s in v.split(",")],
    "refinements": lambda v: [int(s) for s in v.split(",")],
    "t_end": float,
    "mesh_size": float,
    "integrator": str,
    "out": str,
    "vtk_dir": str,
}


def parse_config(text):
    """Parse flat ``key = value`` lines (``#`` comments); unknown keys are rejected."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise InvalidArgumentError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise InvalidArgumentError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return out
