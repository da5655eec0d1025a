"""Lowest-order Whitney forms: basis, de Rham interpolation, mass/stiffness, norms.

Vector proxies: 0-forms are functions, 1-forms are vector fields paired with
edge tangents, 2-forms are densities. The scalar exterior derivative of a
1-form is ``rot u = d/dx u_2 - d/dy u_1``.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .errors import InvalidArgumentError, InvalidCoefficientError
from .mesh import LOCAL_EDGES, TOL_GEOM
from .quadrature import gauss_segment, triangle_rule

_LA = np.array([a for a, _ in LOCAL_EDGES])
_LB = np.array([b for _, b in LOCAL_EDGES])


@dataclass
class Cochain:
    """Coefficients of a discrete form in the Whitney basis."""

    mesh: object
    degree: int
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.degree not in (0, 1, 2):
            raise InvalidArgumentError(f"invalid form degree {self.degree}")
        if self.coefficients.shape != (self.mesh.n_simplices(self.degree),):
            raise InvalidArgumentError("coefficient vector does not match the mesh")
        if not np.all(np.isfinite(self.coefficients)):
            raise InvalidArgumentError("cochain coefficients must be finite")


@dataclass
class AnalyticForm:
    """A smooth form given by its vector proxy ``proxy(x, t)``.

    ``x`` has shape (N, 2); the result has shape (N,) for degrees 0 and 2 and
    (N, 2) for degree 1. ``d_proxy`` is the proxy of the exterior derivative.
    """

    degree: int
    proxy: Callable
    d_proxy: Optional[Callable] = None

    def __call__(self, x, t=0.0):
        return np.asarray(self.proxy(np.atleast_2d(x), t), dtype=float)


def dof_map(mesh, degree):
    """Global DOF indices of the local basis functions, shape (N2, k)."""
    if degree == 0:
        return mesh.triangles
    if degree == 1:
        return mesh.tri_edges
    return np.arange(mesh.n_triangles)[:, None]


def local_basis(mesh, degree, tris, lam):
    """Basis proxies on triangles ``tris`` at barycentric points ``lam``.

    ``tris`` has shape (M,), ``lam`` shape (M, P, 3). Returns (M, P, 3) for
    degree 0, (M, P, 3, 2) for degree 1 and (M, P, 1) for degree 2. Global
    orientation signs are applied.
    """
    tris = np.asarray(tris)
    if degree == 0:
        return lam
    if degree == 1:
        g = mesh.bary_grads[tris]  # (M, 3, 2)
        la = lam[..., _LA]  # (M, P, 3)
        lb = lam[..., _LB]
        vals = la[..., None] * g[:, None, _LB, :] - lb[..., None] * g[:, None, _LA, :]
        return vals * mesh.tri_edge_sign[tris][:, None, :, None]
    return np.broadcast_to((1.0 / mesh.areas[tris])[:, None, None], lam.shape[:2] + (1,))


def local_basis_d(mesh, degree, tris):
    """Exterior-derivative proxies of the local basis (constant per triangle).

    Degree 0 gives gradients (M, 3, 2); degree 1 gives rot values (M, 3).
    """
    tris = np.asarray(tris)
    g = mesh.bary_grads[tris]
    if degree == 0:
        return g
    if degree == 1:
        ga, gb = g[:, _LA, :], g[:, _LB, :]
        cross = ga[..., 0] * gb[..., 1] - ga[..., 1] * gb[..., 0]
        return 2.0 * cross * mesh.tri_edge_sign[tris]
    raise InvalidArgumentError("2-forms have zero exterior derivative")


def evaluate_whitney_basis(mesh, degree, triangle, x):
    """Local basis proxies of ``triangle`` at point ``x``."""
    lam = mesh.bary(triangle, np.asarray(x, dtype=float))[None, None, :]
    vals = local_basis(mesh, degree, np.array([triangle]), lam)[0, 0]
    if degree == 2:
        return float(vals[0])
    return np.array(vals)


def cochain_proxy(mesh, degree, coeffs, tris, lam):
    """Proxy of the discrete form with coefficients ``coeffs`` at (M, P) points."""
    basis = local_basis(mesh, degree, tris, lam)
    c = np.asarray(coeffs)[dof_map(mesh, degree)[tris]]  # (M, k)
    if degree == 1:
        return np.einsum("mpkd,mk->mpd", basis, c)
    return np.einsum("mpk,mk->mp", basis, c)


def cochain_d_proxy(mesh, degree, coeffs, tris):
    """Constant-per-triangle proxy of the exterior derivative of a cochain."""
    c = np.asarray(coeffs)[dof_map(mesh, degree)[tris]]
    dvals = local_basis_d(mesh, degree, tris)
    if degree == 0:
        return np.einsum("mkd,mk->md", dvals, c)
    return np.einsum("mk,mk->m", dvals, c)


def quadrature_points(mesh, subdivisions=1):
    """Physical quadrature points (N2, P, 2), barycentrics (P, 3), weights (N2, P)."""
    lam, w = triangle_rule(subdivisions)
    pts = np.einsum("pk,tkd->tpd", lam, mesh.vertices[mesh.triangles])
    return pts, lam, mesh.areas[:, None] * w[None, :]


def derham_interpolate(mesh, degree, form, t=0.0, quad_order=6, segments=1):
    """Degrees of freedom of a smooth form: point values, edge or cell integrals."""
    if form.degree != degree:
        raise InvalidArgumentError("form degree does not match the requested degree")
    v = mesh.vertices
    if degree == 0:
        return np.asarray(form(v, t), dtype=float).reshape(-1)
    if degree == 1:
        s, w = gauss_segment(quad_order)
        a, b = v[mesh.edges[:, 0]], v[mesh.edges[:, 1]]
        out = np.zeros(mesh.n_edges)
        for j in range(segments):
            ss = (j + s) / segments
            pts = a[:, None, :] + ss[None, :, None] * (b - a)[:, None, :]
            u = form(pts.reshape(-1, 2), t).reshape(mesh.n_edges, len(s), 2)
            out += np.einsum("epd,ed,p->e", u, b - a, w) / segments
        return out
    pts, _, wq = quadrature_points(mesh, max(segments, 1))
    vals = form(pts.reshape(-1, 2), t).reshape(wq.shape)
    return np.sum(vals * wq, axis=1)


def _coefficient_at(alpha, pts):
    if alpha is None:
        return np.ones(pts.shape[:-1])
    if np.isscalar(alpha):
        vals = np.full(pts.shape[:-1], float(alpha))
    else:
        vals = np.asarray(alpha(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:-1])
    if np.any(~(vals > 0)):
        raise InvalidCoefficientError("material coefficient must be uniformly positive")
    return vals


def assemble_mass(mesh, degree, alpha=None):
    """Weighted mass matrix of Whitney ``degree``-forms (the discrete Hodge star)."""
    if degree not in (0, 1, 2):
        raise InvalidArgumentError(f"invalid form degree {degree}")
    pts, lam, wq = quadrature_points(mesh)
    a = _coefficient_at(alpha, pts) * wq  # (N2, P)
    tris = np.arange(mesh.n_triangles)
    lam_all = np.broadcast_to(lam, (mesh.n_triangles,) + lam.shape)
    phi = local_basis(mesh, degree, tris, lam_all)
    if degree == 1:
        loc = np.einsum("tp,tpid,tpjd->tij", a, phi, phi)
    else:
        loc = np.einsum("tp,tpi,tpj->tij", a, phi, phi)
    dofs = dof_map(mesh, degree)
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    n = mesh.n_simplices(degree)
    m = sparse.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))
    return ((m + m.T) * 0.5).tocsr()


def assemble_stiffness(mesh, degree, alpha=None):
    """``D^T M_{l+1}(alpha) D``: the weighted ``d``-``d`` form of the diffusion term."""
    if degree not in (0, 1):
        raise InvalidArgumentError("top-degree forms have no diffusion term")
    d = mesh.d0 if degree == 0 else mesh.d1
    return (d.T @ assemble_mass(mesh, degree + 1, alpha) @ d).tocsr()


def error_norm(mesh, cochain, exact, t=0.0, kind="L2", subdivisions=1):
    """L2 (or graph-norm ``Hd``) distance between a cochain and a smooth form."""
    degree = cochain.degree
    if exact.degree != degree:
        raise InvalidArgumentError("degrees of cochain and exact form differ")
    if kind not in ("L2", "Hd"):
        raise InvalidArgumentError(f"unknown norm {kind!r}")
    pts, lam, wq = quadrature_points(mesh, subdivisions)
    tris = np.arange(mesh.n_triangles)
    lam_all = np.broadcast_to(lam, (mesh.n_triangles,) + lam.shape)
    uh = cochain_proxy(mesh, degree, cochain.coefficients, tris, lam_all)
    ue = exact(pts.reshape(-1, 2), t).reshape(uh.shape)
    diff = (uh - ue) ** 2
    if diff.ndim == 3:
        diff = diff.sum(axis=2)
    total = np.sum(diff * wq)
    if kind == "Hd" and degree < 2:
        if exact.d_proxy is None:
            raise InvalidArgumentError("Hd norm needs the exact exterior derivative")
        dh = cochain_d_proxy(mesh, degree, cochain.coefficients, tris)[:, None]
        de = np.asarray(exact.d_proxy(pts.reshape(-1, 2), t), dtype=float)
        de = de.reshape(dh.shape[:1] + (lam.shape[0],) + dh.shape[2:])
        dd = (dh - de) ** 2
        if dd.ndim == 3:
            dd = dd.sum(axis=2)
        total += np.sum(dd * wq)
    return float(np.sqrt(total))
