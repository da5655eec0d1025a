"""Brute-force reference values for the discrete Lie derivatives.

These evaluate pullbacks under the exact (RK4-integrated) flow. They are slow
and meant for verification only.
"""
import numpy as np

from .errors import InvalidArgumentError, TracingCycleError
from .flow import flow_map_and_jacobian, integrate_points
from .quadrature import collapsed_gauss_rule, gauss_segment
from .sl_transport import clip_polygon, overlap_areas, signed_area
from .whitney import Cochain, dof_map, local_basis


def extrapolate_to_zero(dtaus, values):
    """Value at 0 of the polynomial fit (degree ``len(dtaus) - 1``) in ``dtau``."""
    dtaus = np.asarray(dtaus, dtype=float)
    vals = np.asarray(values, dtype=float)
    shape = vals.shape[1:]
    coef = np.polyfit(dtaus, vals.reshape(len(dtaus), -1), len(dtaus) - 1)
    return coef[-1].reshape(shape)


def _coefficients(omega):
    return omega.coefficients if isinstance(omega, Cochain) else np.asarray(omega, dtype=float)


def _pulled_basis(mesh, degree, tri, y, jac):
    """Pullbacks of the (affinely extended) local basis of ``tri`` from points ``y``.

    Returns (P, k, dim)."""
    lam = mesh.bary(tri, y)[None]
    phi = local_basis(mesh, degree, np.array([tri]), lam)[0]
    if degree == 0:
        return phi[..., None]
    if degree == 1:
        return np.einsum("pij,pki->pkj", jac, phi)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    return (phi * det[:, None])[..., None]


def _boundary_polyline(mesh, tri, samples):
    corners = mesh.vertices[mesh.triangles[tri]]
    s = np.arange(samples) / samples
    return np.concatenate([
        corners[k] + s[:, None] * (corners[(k + 1) % 3] - corners[k]) for k in range(3)
    ])


def _fan_quadrature(poly, order):
    """Signed-fan quadrature points and weights for a simple polygon."""
    lam, w = collapsed_gauss_rule(order)
    a = poly[0]
    b, c = poly[1:-1], poly[2:]
    area = 0.5 * ((b[:, 0] - a[0]) * (c[:, 1] - a[1]) - (c[:, 0] - a[0]) * (b[:, 1] - a[1]))
    pts = lam[None, :, 0:1] * a + lam[None, :, 1:2] * b[:, None] + lam[None, :, 2:3] * c[:, None]
    return pts.reshape(-1, 2), (area[:, None] * w[None, :]).ravel()


def _pullback_matrix(mesh, degree, beta, t, tau, samples, order, substeps):
    """Matrix of ``int (X_{t,t+tau}^* b_j) . b_i`` with exact-flow pullbacks."""
    n = mesh.n_simplices(degree)
    out = np.zeros((n, n))
    dofs = dof_map(mesh, degree)
    tris = np.arange(mesh.n_triangles)
    for k in tris:
        cands = np.unique(np.concatenate([mesh.vertex_triangles[v] for v in mesh.triangles[k]]))
        clip = mesh.vertices[mesh.triangles[k]]
        for kp in cands:
            # region of K whose image lies in K'
            pre = integrate_points(beta, _boundary_polyline(mesh, kp, samples), t + tau, t, "rk4", substeps)
            region = clip_polygon(pre, clip)
            if len(region) < 3 or signed_area(region) == 0.0:
                continue
            x, w = _fan_quadrature(region, order)
            y, jac = flow_map_and_jacobian(beta, x, t, t + tau, substeps)
            pulled = _pulled_basis(mesh, degree, kp, y, jac)
            test = local_basis(mesh, degree, np.array([k]), mesh.bary(k, x)[None])[0]
            if degree != 1:
                test = test[..., None]
            loc = np.einsum("p,pid,pjd->ij", w, test, pulled)
            out[np.ix_(dofs[k], dofs[kp])] += loc
    return out


def oracle_lie_matrix(mesh, degree, beta, dtau, sample_density=256, order=6, substeps=1, t=0.0):
    """Central variational difference quotient of the exact-flow pullback.

    Entry (i, j) approximates ``b_dtau(b_j, b_i)``. The regions of each element
    mapped into each neighbour are bounded by traced polylines with
    ``sample_density`` points per edge and integrated with a signed fan of
    conical Gauss rules.
    """
    if degree not in (0, 1, 2):
        raise InvalidArgumentError(f"invalid form degree {degree}")
    if dtau <= 0:
        raise InvalidArgumentError("dtau must be positive")
    fwd = _pullback_matrix(mesh, degree, beta, t, dtau, sample_density, order, substeps)
    bwd = _pullback_matrix(mesh, degree, beta, t, -dtau, sample_density, order, substeps)
    return (fwd - bwd) / (2.0 * dtau)


def oracle_lie_bilinear(mesh, degree, beta, omega, eta, dtau, sample_density=256, t=0.0):
    """``b_dtau(omega, eta)`` for two cochains via :func:`oracle_lie_matrix`."""
    mat = oracle_lie_matrix(mesh, degree, beta, dtau, sample_density, t=t)
    return float(_coefficients(eta) @ mat @ _coefficients(omega))


# ----------------------------------------------------------------------

def _curve_pieces(mesh, curve, samples, delta=1e-11, max_pieces=100000):
    """Split the curve parameter range [0, 1] into per-triangle intervals.

    The host of each piece is located just past its start, so curves running
    along mesh edges still advance."""
    s = np.linspace(0.0, 1.0, samples + 1)
    pts = curve(s)
    pieces = []
    cur = 0.0
    for _ in range(max_pieces):
        lo = min(cur + delta, 1.0)
        tri, _ = mesh.locate_point(curve(np.array([lo]))[0])
        inside = np.min(mesh.bary(tri, pts), axis=1) >= -1e-13
        after = np.flatnonzero((s > lo) & ~inside)
        if len(after) == 0:
            pieces.append((cur, 1.0, tri))
            return pieces
        hi = s[after[0]]
        lo = max(lo, s[after[0] - 1])
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.min(mesh.bary(tri, curve(np.array([mid]))[0])) >= -1e-13:
                lo = mid
            else:
                hi = mid
        pieces.append((cur, lo, tri))
        cur = lo
        if cur >= 1.0:
            return pieces
    raise TracingCycleError("transported curve could not be split into pieces")


def _edge_image_integral(mesh, beta, coeffs, e, t, tau, samples, substeps):
    v = mesh.vertices
    a, b = v[mesh.edges[e, 0]], v[mesh.edges[e, 1]]

    def curve(s):
        return integrate_points(beta, a + s[:, None] * (b - a), t, t + tau, "rk4", substeps)

    gs, gw = gauss_segment(16)
    total = 0.0
    for s0, s1, tri in _curve_pieces(mesh, curve, samples):
        ss = s0 + (s1 - s0) * gs
        y, jac = flow_map_and_jacobian(beta, a + ss[:, None] * (b - a), t, t + tau, substeps)
        tangent = jac @ (b - a)
        phi = local_basis(mesh, 1, np.array([tri]), mesh.bary(tri, y)[None])[0]
        u = np.einsum("pkd,k->pd", phi, coeffs[mesh.tri_edges[tri]])
        total += (s1 - s0) * np.dot(gw, np.einsum("pd,pd->p", u, tangent))
    return total


def oracle_upwind_cochain(mesh, degree, beta, omega, dtau, direction="upwind",
                          samples=64, area_samples=1024, substeps=1, t=0.0, dofs=None):
    """One-sided co-chain difference quotient with exact-flow transport.

    Upwind: ``(<w, s> - <w, X_{t,t-dtau}(s)>) / dtau``; downwind uses
    ``X_{t,t+dtau}`` with the opposite sign. Transported edges are split at
    element crossings (located by bisection) and integrated with 16-point
    Gauss rules; transported triangles are polygons with ``area_samples``
    points per edge clipped against the mesh. ``dofs`` restricts the
    evaluation to selected simplices; other entries are NaN.
    """
    if direction not in ("upwind", "downwind"):
        raise InvalidArgumentError(f"unknown direction {direction!r}")
    sgn = -1.0 if direction == "upwind" else 1.0
    tau = sgn * dtau
    c = _coefficients(omega)
    n = mesh.n_simplices(degree)
    idx = np.arange(n) if dofs is None else np.atleast_1d(dofs)
    moved = np.full(n, np.nan)
    if degree == 0:
        y = integrate_points(beta, mesh.vertices[idx], t, t + tau, "rk4", substeps)
        for i, yi in zip(idx, y):
            tri, lam = mesh.locate_point(yi)
            moved[i] = lam @ c[mesh.triangles[tri]]
    elif degree == 1:
        for e in idx:
            moved[e] = _edge_image_integral(mesh, beta, c, e, t, tau, samples, substeps)
    elif degree == 2:
        for k in idx:
            poly = integrate_points(beta, _boundary_polyline(mesh, k, area_samples), t, t + tau, "rk4", substeps)
            hosts = [mesh.locate_point(p)[0] for p in poly[::area_samples]]
            moved[k] = sum(c[tri] / mesh.areas[tri] * area
                           for tri, area in overlap_areas(mesh, poly, hosts).items())
    else:
        raise InvalidArgumentError(f"invalid form degree {degree}")
    return sgn * (moved - c) / dtau
