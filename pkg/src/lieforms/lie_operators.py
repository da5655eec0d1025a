"""Eulerian discrete Lie derivatives of Whitney forms.

Two discretizations are provided: the standard bilinear form with central
face terms, and the upwind (or downwind) interpolated Lie derivative that
maps cochain coefficients to the degrees of freedom of the one-sided limit.
"""
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import brentq

from .errors import InvalidArgumentError
from .mesh import LOCAL_EDGES
from .quadrature import gauss_segment, triangle_rule
from .whitney import _coefficient_at, dof_map, local_basis, local_basis_d

_LA = np.array([a for a, _ in LOCAL_EDGES])
_LB = np.array([b for _, b in LOCAL_EDGES])
# samples per edge used to bracket sign changes of beta.n
_SIDE_SAMPLES = 16


@dataclass
class LieMatrix:
    """Sparse discrete Lie derivative of ``degree``-forms.

    For ``variant == "standard"`` entry (i, j) is ``b0(b_j, b_i)``; for the
    one-sided variants row i is the DOF on simplex i of the Lie derivative
    of basis form j.
    """

    degree: int
    matrix: sparse.csr_matrix
    variant: str

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def toarray(self):
        return self.matrix.toarray()


def _rot90(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def edge_normals(mesh):
    """Unit normals of all edges pointing out of their first incident triangle."""
    v = mesh.vertices
    tau = v[mesh.edges[:, 1]] - v[mesh.edges[:, 0]]
    n = np.stack([tau[:, 1], -tau[:, 0]], axis=1)
    n /= np.linalg.norm(n, axis=1)[:, None]
    toward = mesh.centroids()[mesh.edge_to_triangles[:, 0]] - v[mesh.edges[:, 0]]
    n[np.einsum("ed,ed->e", n, toward) > 0] *= -1
    return n


def _scatter(mesh, rows_dofs, cols_dofs, loc, n_rows, n_cols):
    kr, kc = rows_dofs.shape[1], cols_dofs.shape[1]
    rows = np.repeat(rows_dofs, kc, axis=1).ravel()
    cols = np.tile(cols_dofs, (1, kr)).ravel()
    return sparse.coo_matrix((loc.ravel(), (rows, cols)), shape=(n_rows, n_cols))


def _broken_lie_of_basis(mesh, degree, beta, pts, lam, t):
    """Pointwise Lie derivative of each local basis form inside its triangle.

    Returns (N2, P, k, dim) with dim 2 for degree 1 and 1 otherwise."""
    n2, npts = pts.shape[:2]
    flat = pts.reshape(-1, 2)
    b = beta(flat, t).reshape(n2, npts, 2)
    tris = np.arange(n2)
    g = mesh.bary_grads
    if degree == 0:
        return np.einsum("tpd,tkd->tpk", b, g)[..., None]
    jac = beta.jac(flat, t).reshape(n2, npts, 2, 2)  # [..., i, j] = d_j beta_i
    if degree == 2:
        div = jac[..., 0, 0] + jac[..., 1, 1]
        rho = local_basis(mesh, 2, tris, lam)  # (N2, P, 1)
        return (rho * div[..., None])[..., None]
    phi = local_basis(mesh, 1, tris, lam)  # (N2, P, 3, 2)
    ga, gb = g[:, _LA, :], g[:, _LB, :]
    sign = mesh.tri_edge_sign[:, :, None, None]
    # du[t, k, i, j] = d_j u_i of local basis k
    du = sign * (gb[..., :, None] * ga[..., None, :] - ga[..., :, None] * gb[..., None, :])
    grad_bu = np.einsum("tpij,tpki->tpkj", jac, phi) + np.einsum("tkij,tpi->tpkj", du, b)
    rot = local_basis_d(mesh, 1, tris)  # (N2, 3)
    return grad_bu + rot[:, None, :, None] * _rot90(b)[:, :, None, :]


def assemble_standard_lie(mesh, degree, beta, quad_order=4, alpha=None, subdivisions=1, t=0.0):
    """Standard discrete Lie bilinear form ``b0`` with central face terms.

    Parameters
    ----------
    mesh : SimplicialMesh
    degree : int
        Form degree 0, 1 or 2.
    beta : VelocityField
    quad_order : int
        Number of Gauss points on edges.
    alpha : float or callable, optional
        Positive weight multiplying the test function (material parameter).
    subdivisions : int
        Composite refinement of the degree-4 triangle rule.

    Returns
    -------
    LieMatrix
        ``B[i, j] = b0(b_j, b_i)``.
    """
    if degree not in (0, 1, 2):
        raise InvalidArgumentError(f"invalid form degree {degree}")
    n = mesh.n_simplices(degree)
    tris = np.arange(mesh.n_triangles)
    lam_ref, w_ref = triangle_rule(subdivisions)
    pts = np.einsum("pk,tkd->tpd", lam_ref, mesh.vertices[mesh.triangles])
    wq = mesh.areas[:, None] * w_ref[None, :] * _coefficient_at(alpha, pts)
    lam = np.broadcast_to(lam_ref, (mesh.n_triangles,) + lam_ref.shape)
    test = local_basis(mesh, degree, tris, lam)
    if degree != 1:
        test = test[..., None]
    lie = _broken_lie_of_basis(mesh, degree, beta, pts, lam, t)
    loc = np.einsum("tp,tpid,tpjd->tij", wq, test, lie)
    dofs = dof_map(mesh, degree)
    mat = _scatter(mesh, dofs, dofs, loc, n, n)
    if degree > 0:
        mat = mat + _face_terms(mesh, degree, beta, quad_order, alpha, t)
    return LieMatrix(degree, mat.tocsr(), "standard")


def _face_terms(mesh, degree, beta, quad_order, alpha, t):
    """``-1/2 int_e (beta.n+) [u] . (v+ + v-)`` over interior edges."""
    inner = np.flatnonzero(mesh.edge_to_triangles[:, 1] >= 0)
    n = mesh.n_simplices(degree)
    if len(inner) == 0:
        return sparse.coo_matrix((n, n))
    s, w = gauss_segment(quad_order)
    v = mesh.vertices
    a, b = v[mesh.edges[inner, 0]], v[mesh.edges[inner, 1]]
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]  # (E, P, 2)
    length = mesh.edge_lengths[inner]
    nrm = edge_normals(mesh)[inner]
    bn = np.einsum("epd,ed->ep", beta(pts.reshape(-1, 2), t).reshape(pts.shape), nrm)
    wgt = -0.5 * length[:, None] * w[None, :] * bn * _coefficient_at(alpha, pts)
    tp, tm = mesh.edge_to_triangles[inner, 0], mesh.edge_to_triangles[inner, 1]
    lam_p = mesh.bary(tp[:, None], pts)
    lam_m = mesh.bary(tm[:, None], pts)
    phi_p = local_basis(mesh, degree, tp, lam_p)
    phi_m = local_basis(mesh, degree, tm, lam_m)
    if degree == 2:
        phi_p, phi_m = phi_p[..., None], phi_m[..., None]
    both = np.concatenate([phi_p, phi_m], axis=2)
    jump = np.concatenate([phi_p, -phi_m], axis=2)
    loc = np.einsum("ep,epid,epjd->eij", wgt, both, jump)
    dofs = np.concatenate([dof_map(mesh, degree)[tp], dof_map(mesh, degree)[tm]], axis=1)
    return _scatter(mesh, dofs, dofs, loc, n, n)


# ----------------------------------------------------------------------
# one-sided (upwind / downwind) interpolated Lie derivative

def _direction_sign(direction):
    if direction == "upwind":
        return -1.0
    if direction == "downwind":
        return 1.0
    raise InvalidArgumentError(f"direction must be 'upwind' or 'downwind', got {direction!r}")


def probe_triangle(mesh, vertex, bvec, sign):
    """Triangle of the star of ``vertex`` containing ``x + sign*eps*beta``.

    Ties go to the lowest index. Returns -1 if ``beta`` vanishes."""
    if not np.any(bvec):
        return -1
    x = mesh.vertices[vertex]
    probe = x + sign * 1e-8 * mesh.h * bvec / np.linalg.norm(bvec)
    star = mesh.vertex_triangles[vertex]
    lam = mesh.bary(star, probe)
    m = np.min(lam, axis=1)
    ok = star[m >= -1e-14]
    if len(ok):
        return int(ok.min())
    return int(star[np.argmax(m)])


def _edge_sides(mesh, beta, e, normal, sign, npts, t):
    """Sub-segments of edge ``e`` with their one-sided triangle.

    Returns (s0, s1, triangle) with ``s`` the parameter from the low to the
    high vertex. Splits are at the zeros of the normal flux, bracketed on a
    uniform sample grid and refined by root finding."""
    v = mesh.vertices
    a, b = v[mesh.edges[e, 0]], v[mesh.edges[e, 1]]
    tp, tm = mesh.edge_to_triangles[e]
    def flux(s):
        return beta(a + np.atleast_1d(s)[:, None] * (b - a), t) @ normal

    grid = np.linspace(0.0, 1.0, _SIDE_SAMPLES + 1)
    f = flux(grid)
    cuts = [0.0]
    def scalar(s):
        return float(flux(s)[0])

    for i in np.flatnonzero(f[:-1] * f[1:] < 0):
        lo, hi = grid[i], grid[i + 1]
        if scalar(lo) * scalar(hi) < 0:
            cuts.append(brentq(scalar, lo, hi, xtol=1e-15))
    cuts.append(1.0)
    out = []
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        mid = a + 0.5 * (s0 + s1) * (b - a)
        f = float(beta(mid[None], t)[0] @ normal)
        # upwind: the side x - eps*beta; beta.n+ > 0 means it is the + side
        if f * sign < 0:
            tri = tp
        elif f * sign > 0:
            tri = tm if tm >= 0 else tp
        else:
            tri = min(tp, tm) if tm >= 0 else tp
        out.append((s0, s1, int(tri)))
    return out


def assemble_upwind_lie(mesh, degree, beta, direction="upwind", quad_order=4, t=0.0):
    """One-sided interpolated discrete Lie derivative.

    Row i holds the DOF on simplex i of ``d i_beta w + i_beta d w`` with the
    contractions evaluated from the upwind (``x - eps*beta``) or downwind
    side.

    Parameters
    ----------
    mesh : SimplicialMesh
    degree : int
    beta : VelocityField
    direction : {"upwind", "downwind"}
    quad_order : int
        Gauss points per edge sub-segment.
    """
    if degree not in (0, 1, 2):
        raise InvalidArgumentError(f"invalid form degree {degree}")
    sign = _direction_sign(direction)
    n = mesh.n_simplices(degree)
    rows, cols, vals = [], [], []
    v = mesh.vertices
    if degree in (0, 1):
        bv = beta(v, t)
        vtri = np.array([probe_triangle(mesh, i, bv[i], sign) for i in range(mesh.n_vertices)])
    if degree == 0:
        for i in range(mesh.n_vertices):
            tr = vtri[i]
            if tr < 0:
                continue
            rows += [i] * 3
            cols += list(mesh.triangles[tr])
            vals += list(mesh.bary_grads[tr] @ bv[i])
        return LieMatrix(0, sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)), direction)

    s_ref, w_ref = gauss_segment(quad_order)
    normals = edge_normals(mesh)
    if degree == 1:
        rot = local_basis_d(mesh, 1, np.arange(mesh.n_triangles))
        for e in range(mesh.n_edges):
            ia, ib = mesh.edges[e]
            # vertex terms: beta . u at both endpoints from the one-sided element
            for vert, sg in ((ib, 1.0), (ia, -1.0)):
                tr = vtri[vert]
                if tr < 0:
                    continue
                lam = mesh.bary(tr, v[vert])[None, None, :]
                phi = local_basis(mesh, 1, np.array([tr]), lam)[0, 0]  # (3, 2)
                rows += [e] * 3
                cols += list(mesh.tri_edges[tr])
                vals += list(sg * (phi @ bv[vert]))
            # contraction of the (constant) rot along the edge
            tau = v[ib] - v[ia]
            for s0, s1, tr in _edge_sides(mesh, beta, e, normals[e], sign, quad_order, t):
                ss = s0 + (s1 - s0) * s_ref
                pts = v[ia] + ss[:, None] * tau
                integral = (s1 - s0) * np.dot(w_ref, _cross(tau, beta(pts, t)))
                rows += [e] * 3
                cols += list(mesh.tri_edges[tr])
                vals += list(-integral * rot[tr])
        return LieMatrix(1, sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)), direction)

    # degree 2: one-sided boundary fluxes
    for e in range(mesh.n_edges):
        ia, ib = mesh.edges[e]
        tau = v[ib] - v[ia]
        length = np.linalg.norm(tau)
        tp, tm = mesh.edge_to_triangles[e]
        for s0, s1, tr in _edge_sides(mesh, beta, e, normals[e], sign, quad_order, t):
            ss = s0 + (s1 - s0) * s_ref
            pts = v[ia] + ss[:, None] * tau
            flux = (s1 - s0) * length * np.dot(w_ref, beta(pts, t) @ normals[e])
            # flux out of tp through e, into tm
            rows.append(tp)
            cols.append(tr)
            vals.append(flux / mesh.areas[tr])
            if tm >= 0:
                rows.append(tm)
                cols.append(tr)
                vals.append(-flux / mesh.areas[tr])
    return LieMatrix(2, sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)), direction)


from .oracles import oracle_lie_bilinear, oracle_lie_matrix, oracle_upwind_cochain  # noqa: E402,F401
