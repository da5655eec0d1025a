"""Characteristics of a velocity field and the piecewise-linear discrete flow."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, LocationError, PropagationError, TracingCycleError
from .mesh import TOL_GEOM


@dataclass
class VelocityField:
    """Velocity ``func(x, t)`` with ``x`` of shape (N, 2), returning (N, 2).

    ``jacobian(x, t)`` (N, 2, 2) is optional; a central difference is used
    otherwise. ``stationary`` allows callers to reuse time-step operators.
    """

    func: Callable
    jacobian: Optional[Callable] = None
    stationary: bool = True
    sup_norm: Optional[float] = None

    def __call__(self, x, t=0.0):
        return np.asarray(self.func(np.atleast_2d(x), t), dtype=float)

    def jac(self, x, t=0.0, step=1e-6):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x, t), dtype=float)
        out = np.empty((len(x), 2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = step
            out[:, :, j] = (self(x + e, t) - self(x - e, t)) / (2 * step)
        return out

    def max_norm(self, mesh):
        """Sup norm sampled on the mesh vertices (unless supplied)."""
        if self.sup_norm is not None:
            return float(self.sup_norm)
        return float(np.max(np.linalg.norm(self(mesh.vertices, 0.0), axis=1)))


def _rhs(beta, x, t):
    v = beta(x, t)
    bad = ~np.all(np.isfinite(v), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PropagationError(f"velocity is not finite at point {i} ({x[i, 0]}, {x[i, 1]})")
    return v


def integrate_points(beta, x, t_from, t_to, integrator="rk4", substeps=1):
    """Integrate dX/dt = beta(X, t) from ``t_from`` to ``t_to`` for all points."""
    if substeps < 1:
        raise InvalidArgumentError("substeps must be >= 1")
    x = np.array(x, dtype=float, copy=True)
    h = (t_to - t_from) / substeps
    t = t_from
    for _ in range(substeps):
        if integrator == "euler":
            x = x + h * _rhs(beta, x, t)
        elif integrator == "rk2":
            k1 = _rhs(beta, x, t)
            x = x + h * _rhs(beta, x + 0.5 * h * k1, t + 0.5 * h)
        elif integrator == "rk4":
            k1 = _rhs(beta, x, t)
            k2 = _rhs(beta, x + 0.5 * h * k1, t + 0.5 * h)
            k3 = _rhs(beta, x + 0.5 * h * k2, t + 0.5 * h)
            k4 = _rhs(beta, x + h * k3, t + h)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            raise InvalidArgumentError(f"unknown integrator {integrator!r}")
        t += h
    return x


def flow_map_and_jacobian(beta, x, t_from, t_to, substeps=1):
    """RK4 integration of the characteristic together with its variational
    equation d/dt DX = Dbeta(X) DX. Returns (X, DX) for every point."""
    x = np.array(np.atleast_2d(x), dtype=float, copy=True)
    J = np.broadcast_to(np.eye(2), (len(x), 2, 2)).copy()
    h = (t_to - t_from) / substeps
    t = t_from

    def f(xx, JJ, tt):
        return _rhs(beta, xx, tt), beta.jac(xx, tt) @ JJ

    for _ in range(substeps):
        k1x, k1j = f(x, J, t)
        k2x, k2j = f(x + 0.5 * h * k1x, J + 0.5 * h * k1j, t + 0.5 * h)
        k3x, k3j = f(x + 0.5 * h * k2x, J + 0.5 * h * k2j, t + 0.5 * h)
        k4x, k4j = f(x + h * k3x, J + h * k3j, t + h)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        J = J + h / 6.0 * (k1j + 2 * k2j + 2 * k3j + k4j)
        t += h
    return x, J


def flow_jacobian(beta, x, t_from, t_to, substeps=1):
    """Jacobian of the exact flow map at a single point."""
    return flow_map_and_jacobian(beta, np.asarray(x, dtype=float)[None], t_from, t_to, substeps)[1][0]


def advect_vertices(mesh, beta, t_from, t_to, integrator="euler", substeps=1):
    """Approximate images of all vertices under the flow from ``t_from`` to ``t_to``.

    Images leaving the domain are projected back onto the boundary.
    Returns ``(images, clamp_distances)``.
    """
    images = integrate_points(beta, mesh.vertices, t_from, t_to, integrator, substeps)
    return mesh.clamp_to_domain(images)


@dataclass
class SegmentPiece:
    """Part of a straight segment inside one triangle."""

    triangle: int
    a: np.ndarray
    b: np.ndarray
    a_bary: np.ndarray
    b_bary: np.ndarray

    @property
    def length(self):
        return float(np.linalg.norm(self.b - self.a))


def _next_triangle(mesh, t, q, end, tol):
    rem = end - q
    dist = np.linalg.norm(rem)
    delta = min(1e-9 * mesh.h, 0.5 * dist)
    z = q + delta * rem / dist
    cands = np.unique(np.concatenate([mesh.vertex_triangles[v] for v in mesh.triangles[t]]))
    cands = cands[cands != t]
    lam = mesh.bary(cands, z)
    ok = cands[np.min(lam, axis=1) >= -tol]
    if len(ok) == 0:
        return -1
    return int(ok.min())


def trace_segment(mesh, start_triangle, start, end, tol=TOL_GEOM):
    """Split the segment ``[start, end]`` into per-triangle pieces.

    ``start`` must lie in ``start_triangle``. Crossings are found from the
    zero of the barycentric coordinate of the exit edge.
    """
    t = int(start_triangle)
    p = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if np.array_equal(p, end):
        lam = mesh.bary(t, p)
        return [SegmentPiece(t, p, end, lam, lam)]
    pieces = []
    for _ in range(mesh.n_triangles + 4):
        lam_p = mesh.bary(t, p)
        lam_e = mesh.bary(t, end)
        if lam_e.min() >= -tol:
            pieces.append(SegmentPiece(t, p, end, lam_p, lam_e))
            return pieces
        s_exit = 1.0
        for k in range(3):
            if lam_e[k] < -tol and lam_e[k] < lam_p[k]:
                s = max(lam_p[k], 0.0) / (lam_p[k] - lam_e[k])
                s_exit = min(s_exit, s)
        q = p + s_exit * (end - p)
        if s_exit > 0.0 and not np.array_equal(q, p):
            pieces.append(SegmentPiece(t, p, q, lam_p, mesh.bary(t, q)))
        nxt = _next_triangle(mesh, t, q, end, tol)
        if nxt < 0:
            if np.linalg.norm(end - q) <= 1e-10 * mesh.h:
                pieces.append(SegmentPiece(t, q, end, mesh.bary(t, q), lam_e))
                return pieces
            raise LocationError(end, f"segment leaves the mesh at {tuple(q)}")
        t, p = nxt, q
    raise TracingCycleError("segment tracing did not terminate")


@dataclass
class DiscreteFlow:
    """Vertex images of the approximate flow and their host triangles."""

    direction: str
    t_from: float
    t_to: float
    images: np.ndarray
    hosts: np.ndarray
    bary: np.ndarray
    clamp_distances: np.ndarray = field(default=None)

    def evaluate(self, mesh, t, lam):
        """Piecewise-linear flow map at barycentric points ``lam`` of triangle ``t``."""
        return np.asarray(lam) @ self.images[mesh.triangles[t]]


def build_discrete_flow(mesh, images, t_from=0.0, t_to=0.0, clamp_distances=None):
    """Locate every vertex image by tracing from its source vertex."""
    images = np.asarray(images, dtype=float)
    n0 = mesh.n_vertices
    hosts = np.empty(n0, dtype=np.int64)
    bary = np.empty((n0, 3))
    for i in range(n0):
        start_t = int(mesh.vertex_triangles[i][0])
        try:
            pieces = trace_segment(mesh, start_t, mesh.vertices[i], images[i])
        except LocationError as exc:
            raise LocationError(images[i], f"image of vertex {i} could not be located: {exc}") from exc
        t, lam = mesh.locate_point(images[i], hint=pieces[-1].triangle)
        hosts[i] = t
        bary[i] = lam
    direction = "forward" if t_to >= t_from else "backward"
    if clamp_distances is None:
        clamp_distances = np.zeros(n0)
    return DiscreteFlow(direction, t_from, t_to, images, hosts, bary, clamp_distances)


def discrete_flow(mesh, beta, t_from, t_to, integrator="euler", substeps=1):
    """Convenience: advect the vertices and build the discrete flow."""
    images, dist = advect_vertices(mesh, beta, t_from, t_to, integrator, substeps)
    return build_discrete_flow(mesh, images, t_from, t_to, dist)
