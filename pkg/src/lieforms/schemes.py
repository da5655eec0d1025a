"""Implicit-Euler time stepping for convection-diffusion of Whitney forms.

All schemes share the Galerkin mass ``M`` (optionally weighted) and the
``d``-``d`` stiffness ``C``. Semi-Lagrangian steps use the transport matrices
of the approximate flow, Eulerian steps use a discrete Lie derivative.

``formulation="direct"`` discretizes ``dw/dt + eps d*d w + L_beta w = f``.
``formulation="adjoint"`` discretizes the dual problem whose convection is
the negative adjoint of ``L_beta``; its semi-Lagrangian step uses the
transpose of the forward-flow transport matrix.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse

from .errors import InvalidArgumentError, InvalidCoefficientError
from .flow import VelocityField, discrete_flow
from .lie_operators import assemble_standard_lie, assemble_upwind_lie
from .linalg import Factorization, solve_general, solve_spd
from .sl_transport import assemble_transport
from .whitney import AnalyticForm, Cochain, assemble_mass, assemble_stiffness, derham_interpolate

SCHEMES = (
    "sl-direct",
    "sl-adjoint",
    "eul-implicit-standard",
    "eul-implicit-upwind",
    "eul-semi-implicit-upwind",
)

Coefficient = Union[None, float, Callable]


@dataclass
class SchemeConfig:
    """Settings of a time-stepping run.

    ``scheme`` may name the formulation (``sl-direct``/``sl-adjoint``); the
    Eulerian schemes take it from ``formulation``. Exactly one of ``dt`` and
    ``cfl`` must be given.
    """

    scheme: str
    degree: int
    velocity: VelocityField
    epsilon: float = 1.0
    dt: Optional[float] = None
    cfl: Optional[float] = None
    t_start: float = 0.0
    t_end: float = 1.0
    source: Optional[AnalyticForm] = None
    formulation: str = "direct"
    reaction: float = 0.0
    mass_coefficient: Coefficient = None
    stiffness_coefficient: Coefficient = None
    boundary: str = "dirichlet"
    integrator: str = "euler"
    substeps: int = 1
    solver_tol: float = 1e-12
    max_iter: Optional[int] = None
    quad_order: int = 4

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "sl-direct":
            self.formulation = "direct"
        elif self.scheme == "sl-adjoint":
            self.formulation = "adjoint"
        if self.formulation not in ("direct", "adjoint"):
            raise InvalidArgumentError(f"unknown formulation {self.formulation!r}")
        if self.degree not in (0, 1, 2):
            raise InvalidArgumentError(f"invalid form degree {self.degree}")
        if self.epsilon < 0:
            raise InvalidArgumentError("epsilon must be non-negative")
        if (self.dt is None) == (self.cfl is None):
            raise InvalidArgumentError("give exactly one of dt and cfl")
        if self.dt is not None and not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        if self.cfl is not None and not self.cfl > 0:
            raise InvalidArgumentError("cfl must be positive")
        if self.boundary not in ("dirichlet", "none"):
            raise InvalidArgumentError(f"unknown boundary treatment {self.boundary!r}")

    def time_grid(self, mesh):
        """Time levels with the nominal step; the final step is shortened to hit ``t_end``."""
        span = self.t_end - self.t_start
        if span <= 0:
            raise InvalidArgumentError("t_end must exceed t_start")
        if self.dt is not None:
            dt = self.dt
        else:
            bmax = self.velocity.max_norm(mesh)
            dt = self.cfl * mesh.h / bmax if bmax > 0 else span
        full = int(math.floor(span / dt * (1 + 1e-12)))
        times = self.t_start + dt * np.arange(full + 1)
        if self.t_end - times[-1] > 1e-12 * span:
            times = np.append(times, self.t_end)
        times[-1] = self.t_end
        return times


@dataclass
class TimeStepReport:
    step: int
    time: float
    iterations: int
    residual: float
    norm: float
    weak_closedness: Optional[float] = None
    max_clamp: float = 0.0


def weak_closedness_residual(mesh, degree, state, alpha=None, mass=None):
    """``max |D_{l-1}^T M_l w|`` over interior test simplices of degree ``l-1``."""
    if degree not in (1, 2):
        raise InvalidArgumentError("weak closedness needs a form degree >= 1")
    w = state.coefficients if isinstance(state, Cochain) else np.asarray(state, dtype=float)
    d = mesh.d0 if degree == 1 else mesh.d1
    m = assemble_mass(mesh, degree, alpha) if mass is None else mass
    r = d.T @ (m @ w)
    inner = mesh.free_dofs(degree - 1)
    return float(np.max(np.abs(r[inner]))) if len(inner) else 0.0


class SchemeOperators:
    """Matrices of one scheme on one mesh, cached across steps.

    With a stationary velocity and a fixed step size the transport and Lie
    matrices, and the factorized system matrix, are built once.
    """

    def __init__(self, mesh, config):
        self.mesh = mesh
        self.config = config
        l = config.degree
        self.mass = assemble_mass(mesh, l, config.mass_coefficient)
        if l < 2 and config.epsilon > 0:
            self.stiff = assemble_stiffness(mesh, l, config.stiffness_coefficient)
        else:
            n = mesh.n_simplices(l)
            self.stiff = sparse.csr_matrix((n, n))
        if config.boundary == "dirichlet":
            self.free = mesh.free_dofs(l)
        else:
            self.free = np.arange(mesh.n_simplices(l))
        self._cache = {}
        self.last_clamp = 0.0

    # -- building blocks ------------------------------------------------
    def _key(self, name, t0, t1):
        if self.config.velocity.stationary:
            return (name, round(t1 - t0, 14))
        return (name, t0, t1)

    def transport(self, t0, t1):
        """Transport matrix of the step: backward flow (direct) or forward flow (adjoint)."""
        key = self._key("P", t0, t1)
        if key not in self._cache:
            cfg = self.config
            if cfg.formulation == "direct":
                flow = discrete_flow(self.mesh, cfg.velocity, t1, t0, cfg.integrator, cfg.substeps)
            else:
                flow = discrete_flow(self.mesh, cfg.velocity, t0, t1, cfg.integrator, cfg.substeps)
            self._cache[key] = (assemble_transport(self.mesh, flow, cfg.degree).matrix,
                                float(np.max(flow.clamp_distances, initial=0.0)))
        mat, self.last_clamp = self._cache[key]
        return mat

    def lie(self, kind, t):
        """``kind`` in {"standard", "upwind", "downwind"}; upwind variants are
        returned premultiplied by the mass matrix."""
        cfg = self.config
        key = ("L", kind) if cfg.velocity.stationary else ("L", kind, t)
        if key not in self._cache:
            if kind == "standard":
                mat = assemble_standard_lie(self.mesh, cfg.degree, cfg.velocity, cfg.quad_order,
                                            cfg.mass_coefficient, t=t).matrix
            else:
                up = assemble_upwind_lie(self.mesh, cfg.degree, cfg.velocity, kind, cfg.quad_order, t=t).matrix
                mat = (self.mass @ up).tocsr()
            self._cache[key] = mat
        return self._cache[key]

    def convection(self, t):
        """Eulerian convection matrix ``K`` entering the system as ``M + dt*K``."""
        cfg = self.config
        if cfg.scheme == "eul-implicit-standard":
            b = self.lie("standard", t)
            return b if cfg.formulation == "direct" else -b.T.tocsr()
        if cfg.formulation == "direct":
            return self.lie("upwind", t)
        return -self.lie("downwind", t).T.tocsr()

    def source_vector(self, t):
        cfg = self.config
        if cfg.source is None:
            return np.zeros(self.mesh.n_simplices(cfg.degree))
        return self.mass @ derham_interpolate(self.mesh, cfg.degree, cfg.source, t)

    def diffusion_matrix(self, dt):
        cfg = self.config
        a = self.mass + dt * cfg.epsilon * self.stiff
        if cfg.reaction:
            a = a + dt * cfg.reaction * self.mass
        return a.tocsr()

    def system(self, t0, t1):
        """Left-hand matrix of the step restricted to free DOFs."""
        cfg = self.config
        dt = t1 - t0
        a = self.diffusion_matrix(dt)
        if cfg.scheme in ("eul-implicit-standard", "eul-implicit-upwind"):
            a = a + dt * self.convection(t1)
        f = self.free
        return a.tocsr()[f][:, f]

    def right_hand_side(self, w0, t0, t1):
        cfg = self.config
        dt = t1 - t0
        m = self.mass
        if cfg.scheme == "sl-direct":
            rhs = m @ (self.transport(t0, t1) @ w0)
        elif cfg.scheme == "sl-adjoint":
            rhs = self.transport(t0, t1).T @ (m @ w0)
        elif cfg.scheme == "eul-semi-implicit-upwind":
            rhs = m @ w0 - dt * (self.convection(t0) @ w0)
        else:
            rhs = m @ w0
        return rhs + dt * self.source_vector(t1)

    # -- solving --------------------------------------------------------
    def solve(self, t0, t1, rhs):
        cfg = self.config
        f = self.free
        out = np.zeros(self.mesh.n_simplices(cfg.degree))
        symmetric = cfg.scheme in ("sl-direct", "sl-adjoint", "eul-semi-implicit-upwind")
        if symmetric:
            key = ("A", round(t1 - t0, 14))
            if key not in self._cache:
                self._cache[key] = self.system(t0, t1)
            x, hist = solve_spd(self._cache[key], rhs[f], cfg.solver_tol, cfg.max_iter, return_history=True)
            out[f] = x
            return out, len(hist) - 1, hist[-1]
        if cfg.velocity.stationary:
            key = ("LU", round(t1 - t0, 14))
            if key not in self._cache:
                self._cache[key] = Factorization(self.system(t0, t1))
            fac = self._cache[key]
            x = fac.solve(rhs[f])
            res = np.linalg.norm(fac.matrix @ x - rhs[f]) / max(np.linalg.norm(rhs[f]), 1e-300)
        else:
            a = self.system(t0, t1)
            x = solve_general(a, rhs[f])
            res = np.linalg.norm(a @ x - rhs[f]) / max(np.linalg.norm(rhs[f]), 1e-300)
        out[f] = x
        return out, 0, float(res)

    def step(self, w0, t0, t1, index=0):
        self.last_clamp = 0.0
        rhs = self.right_hand_side(np.asarray(w0, dtype=float), t0, t1)
        w1, its, res = self.solve(t0, t1, rhs)
        norm = float(np.sqrt(max(w1 @ (self.mass @ w1), 0.0)))
        wc = None
        if self.config.degree >= 1:
            wc = weak_closedness_residual(self.mesh, self.config.degree, w1, mass=self.mass)
        return w1, TimeStepReport(index, t1, its, res, norm, wc, self.last_clamp)


def _operators(mesh, state, config, ops):
    if state.degree != config.degree:
        raise InvalidArgumentError("state degree does not match the configuration")
    return ops if ops is not None else SchemeOperators(mesh, config)


def step_semi_lagrangian(mesh, state, config, t_k, t_k1, ops=None):
    """One semi-Lagrangian step ``(M + dt eps C) w1 = M P w0 + dt M f``
    (direct) or ``... = P^T M w0 + ...`` (adjoint)."""
    if not config.scheme.startswith("sl-"):
        raise InvalidArgumentError("configuration does not name a semi-Lagrangian scheme")
    ops = _operators(mesh, state, config, ops)
    w1, rep = ops.step(state.coefficients, t_k, t_k1)
    return Cochain(mesh, config.degree, w1), rep


def step_eulerian(mesh, state, config, t_k, t_k1, ops=None):
    """One implicit or semi-implicit Eulerian step."""
    if not config.scheme.startswith("eul-"):
        raise InvalidArgumentError("configuration does not name an Eulerian scheme")
    ops = _operators(mesh, state, config, ops)
    w1, rep = ops.step(state.coefficients, t_k, t_k1)
    return Cochain(mesh, config.degree, w1), rep


@dataclass
class RunResult:
    """Final coefficients (possibly non-finite after a blow-up) and step reports."""

    times: np.ndarray
    coefficients: np.ndarray
    reports: list = field(default_factory=list)

    @property
    def finite(self):
        return bool(np.all(np.isfinite(self.coefficients)))


def run_scheme(mesh, config, initial, callback=None):
    """Advance ``initial`` (Cochain, or AnalyticForm to interpolate) to ``t_end``."""
    if isinstance(initial, AnalyticForm):
        w = derham_interpolate(mesh, config.degree, initial, config.t_start)
    else:
        w = np.array(initial.coefficients, dtype=float)
    ops = SchemeOperators(mesh, config)
    w[np.setdiff1d(np.arange(len(w)), ops.free)] = 0.0
    times = config.time_grid(mesh)
    reports = []
    for k in range(len(times) - 1):
        w, rep = ops.step(w, times[k], times[k + 1], k + 1)
        reports.append(rep)
        if callback is not None:
            callback(rep, w)
        if not np.all(np.isfinite(w)):
            break
    return RunResult(times, w, reports)


def solve_stationary(mesh, beta, epsilon, source, variant="upwind", degree=1, reaction=1.0,
                     boundary="dirichlet", quad_order=4):
    """Stationary problem ``(r M + eps C + K) w = M f``.

    ``K`` is the standard Lie bilinear form or the mass-weighted upwind Lie
    matrix; boundary DOFs are set to zero.
    """
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    if variant not in ("standard", "upwind"):
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    m = assemble_mass(mesh, degree)
    a = reaction * m + epsilon * assemble_stiffness(mesh, degree)
    if variant == "standard":
        a = a + assemble_standard_lie(mesh, degree, beta, quad_order).matrix
    else:
        a = a + m @ assemble_upwind_lie(mesh, degree, beta, "upwind", quad_order).matrix
    rhs = m @ derham_interpolate(mesh, degree, source)
    free = mesh.free_dofs(degree) if boundary == "dirichlet" else np.arange(mesh.n_simplices(degree))
    w = np.zeros(mesh.n_simplices(degree))
    w[free] = solve_general(a.tocsr()[free][:, free], rhs[free])
    return Cochain(mesh, degree, w)


@dataclass
class EddySystem:
    """2D eddy-current time step: ``matrix`` (free DOFs) and ``rhs(state, t0, t1)``."""

    operators: SchemeOperators
    matrix: sparse.csr_matrix

    def rhs(self, state, t0, t1):
        return self.operators.right_hand_side(np.asarray(state, dtype=float), t0, t1)

    def step(self, state, t0, t1):
        return self.operators.step(state, t0, t1)


def assemble_eddy_system(mesh, formulation, mu, sigma, beta, dt, scheme="sl", source=None):
    """Eddy-current step in the moving-conductor setting (2D, scalar curl).

    ``h-based``: ``(M_mu + dt C_{1/sigma}) h1 = P^T M_mu h0 + dt f`` with the
    forward-flow transport (adjoint formulation). ``a-based``:
    ``(M_sigma + dt C_{1/mu}) a1 = M_sigma P a0 + dt f`` with the
    backward-flow transport (direct formulation). ``scheme`` is ``sl`` or one
    of the Eulerian scheme names.
    """
    def positive(c, name):
        if c is None:
            return None
        if np.isscalar(c):
            if not c > 0:
                raise InvalidCoefficientError(f"{name} must be positive")
            return float(c)
        return c

    mu = positive(mu, "mu")
    sigma = positive(sigma, "sigma")

    def inverse(c):
        if c is None:
            return None
        if np.isscalar(c):
            return 1.0 / c
        return lambda x: 1.0 / np.asarray(c(x), dtype=float)

    if formulation == "h-based":
        form, mass, stiff = "adjoint", mu, inverse(sigma)
    elif formulation == "a-based":
        form, mass, stiff = "direct", sigma, inverse(mu)
    else:
        raise InvalidArgumentError(f"unknown formulation {formulation!r}")
    name = f"sl-{form}" if scheme == "sl" else scheme
    cfg = SchemeConfig(name, 1, beta, epsilon=1.0, dt=dt, formulation=form, source=source,
                       mass_coefficient=mass, stiffness_coefficient=stiff)
    ops = SchemeOperators(mesh, cfg)
    return EddySystem(ops, ops.system(0.0, dt))
