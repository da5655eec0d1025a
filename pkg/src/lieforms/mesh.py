"""Oriented 2D simplicial meshes.

Edges are globally oriented from the lower to the higher vertex index and
triangles are stored counterclockwise. Within a triangle, local edge ``k`` is
the edge opposite local vertex ``k``.
"""
import numpy as np
from scipy import sparse

from .errors import GeometryError, InvalidArgumentError, LocationError

TOL_GEOM = 1e-12

# local edge k is opposite local vertex k
LOCAL_EDGES = ((1, 2), (0, 2), (0, 1))
# counterclockwise traversal of local edge k
_CCW_TRAVERSAL = ((1, 2), (2, 0), (0, 1))


class SimplicialMesh:
    """Oriented triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : array_like, shape (N0, 2)
    triangles : array_like, shape (N2, 3)
        Vertex indices. Clockwise triangles are reoriented.

    Attributes
    ----------
    edges : ndarray, shape (N1, 2)
        Sorted vertex pairs.
    tri_edges : ndarray, shape (N2, 3)
        Global edge index of local edge ``k`` (opposite local vertex ``k``).
    tri_edge_sign : ndarray, shape (N2, 3)
        +1 where the local orientation ``LOCAL_EDGES[k]`` agrees with the
        global one.
    d0, d1 : scipy.sparse.csr_matrix
        Signed incidence matrices (edges x vertices, triangles x edges).
    edge_to_triangles : ndarray, shape (N1, 2)
        Incident triangles, second column -1 on boundary edges.
    neighbors : ndarray, shape (N2, 3)
        Triangle across local edge ``k``, or -1.
    """

    def __init__(self, vertices, triangles):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        tris = np.array(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InvalidArgumentError("vertices must have shape (N, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise InvalidArgumentError("triangles must have shape (M, 3)")
        p = self.vertices[tris]
        area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                 - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        if np.any(np.abs(area2) <= 1e-300):
            raise GeometryError("degenerate triangle in mesh")
        flip = area2 < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        self.triangles = tris
        self.areas = 0.5 * np.abs(area2)
        self._build_topology()
        self._build_geometry()

    # ------------------------------------------------------------------
    def _build_topology(self):
        tris = self.triangles
        n2 = len(tris)
        local = np.array(LOCAL_EDGES)
        pairs = tris[:, local]  # (N2, 3, 2)
        lo = np.minimum(pairs[..., 0], pairs[..., 1])
        hi = np.maximum(pairs[..., 0], pairs[..., 1])
        keys = np.stack([lo.ravel(), hi.ravel()], axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        self.edges = edges
        self.tri_edges = inverse.reshape(n2, 3)
        self.tri_edge_sign = np.where(pairs[..., 0] < pairs[..., 1], 1, -1)

        n0, n1 = len(self.vertices), len(edges)
        rows = np.repeat(np.arange(n1), 2)
        cols = edges.ravel()
        vals = np.tile([-1, 1], n1)
        self.d0 = sparse.csr_matrix((vals, (rows, cols)), shape=(n1, n0), dtype=float)

        trav = tris[:, np.array(_CCW_TRAVERSAL)]
        trav_sign = np.where(trav[..., 0] < trav[..., 1], 1, -1)
        self.d1 = sparse.csr_matrix(
            (trav_sign.ravel(), (np.repeat(np.arange(n2), 3), self.tri_edges.ravel())),
            shape=(n2, n1), dtype=float)

        e2t = -np.ones((n1, 2), dtype=np.int64)
        count = np.zeros(n1, dtype=np.int64)
        for t in range(n2):
            for k in range(3):
                e = self.tri_edges[t, k]
                if count[e] >= 2:
                    raise GeometryError(f"edge {e} shared by more than two triangles")
                e2t[e, count[e]] = t
                count[e] += 1
        self.edge_to_triangles = e2t
        nb = -np.ones((n2, 3), dtype=np.int64)
        for t in range(n2):
            for k in range(3):
                a, b = e2t[self.tri_edges[t, k]]
                nb[t, k] = b if a == t else a
        self.neighbors = nb

        self.boundary_edges = e2t[:, 1] < 0
        bverts = np.zeros(n0, dtype=bool)
        bverts[edges[self.boundary_edges].ravel()] = True
        self.boundary_vertices = bverts
        self.boundary_triangles = np.any(self.boundary_edges[self.tri_edges], axis=1)

        star = [[] for _ in range(n0)]
        for t, tri in enumerate(tris):
            for v in tri:
                star[v].append(t)
        self.vertex_triangles = [np.array(s, dtype=np.int64) for s in star]

    def _build_geometry(self):
        p = self.vertices[self.triangles]
        # lambda_k(x) = grads[t, k] . x + consts[t, k]
        mats = np.concatenate([p, np.ones((len(p), 3, 1))], axis=2)  # rows [x, y, 1]
        inv = np.linalg.inv(mats)  # columns give coefficients of lambda_k
        self.bary_grads = np.transpose(inv[:, :2, :], (0, 2, 1)).copy()
        self.bary_consts = inv[:, 2, :].copy()
        elen = np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)
        self.edge_lengths = elen
        self.h = float(elen.max())

    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def n_simplices(self, degree):
        return (self.n_vertices, self.n_edges, self.n_triangles)[degree]

    def boundary_flags(self, degree):
        return (self.boundary_vertices, self.boundary_edges, self.boundary_triangles)[degree]

    def free_dofs(self, degree):
        """Indices of degrees of freedom kept after Dirichlet elimination."""
        if degree == 2:
            return np.arange(self.n_triangles)
        return np.flatnonzero(~self.boundary_flags(degree))

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def bary(self, t, x):
        """Barycentric coordinates of point(s) ``x`` w.r.t. triangle(s) ``t``."""
        x = np.asarray(x, dtype=float)
        return np.einsum("...kd,...d->...k", self.bary_grads[t], x) + self.bary_consts[t]

    def contains(self, t, x, tol=TOL_GEOM):
        return bool(np.all(self.bary(t, x) >= -tol))

    # ------------------------------------------------------------------
    def locate_point(self, x, hint=0, tol=TOL_GEOM):
        """Find the lowest-indexed triangle containing ``x`` by neighbour walking."""
        x = np.asarray(x, dtype=float)
        t = int(hint) if 0 <= hint < self.n_triangles else 0
        visited = set()
        found = None
        while t not in visited:
            visited.add(t)
            lam = self.bary(t, x)
            k = int(np.argmin(lam))
            if lam[k] >= -tol:
                found = t
                break
            nxt = self.neighbors[t, k]
            if nxt < 0:
                break
            t = int(nxt)
        if found is None:
            return self._locate_exhaustive(x, tol)
        cands = np.unique(np.concatenate([self.vertex_triangles[v] for v in self.triangles[found]]))
        lam = self.bary(cands, x)
        inside = cands[np.min(lam, axis=1) >= -tol]
        best = int(inside.min())
        return best, self.bary(best, x)

    def _locate_exhaustive(self, x, tol):
        lam = self.bary(np.arange(self.n_triangles), x)
        inside = np.flatnonzero(np.min(lam, axis=1) >= -tol)
        if len(inside) == 0:
            raise LocationError(x)
        t = int(inside[0])
        return t, lam[t]

    def locate_points(self, xs, tol=TOL_GEOM, chunk=4096):
        """Vectorised exhaustive location; returns -1 for points outside."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        out = -np.ones(len(xs), dtype=np.int64)
        g, c = self.bary_grads, self.bary_consts
        for s in range(0, len(xs), chunk):
            blk = xs[s:s + chunk]
            lam = np.einsum("tkd,pd->ptk", g, blk) + c[None]
            ok = np.min(lam, axis=2) >= -tol
            has = ok.any(axis=1)
            first = np.argmax(ok, axis=1)
            out[s:s + chunk] = np.where(has, first, -1)
        return out

    # ------------------------------------------------------------------
    def _boundary_segments(self):
        e = self.edges[self.boundary_edges]
        return self.vertices[e[:, 0]], self.vertices[e[:, 1]]

    def clamp_to_domain(self, points, tol=TOL_GEOM):
        """Project points lying outside the (convex) domain onto its boundary.

        Returns the clamped points and the per-point clamp distance.
        """
        pts = np.array(points, dtype=float, copy=True)
        a, b = self._boundary_segments()
        ab = b - a
        # outward normal of each boundary edge from its interior triangle
        tris = self.edge_to_triangles[self.boundary_edges, 0]
        normal = np.stack([ab[:, 1], -ab[:, 0]], axis=1)
        toward = self.centroids()[tris] - a
        normal[np.einsum("ij,ij->i", normal, toward) > 0] *= -1
        normal /= np.linalg.norm(normal, axis=1)[:, None]
        side = np.einsum("pd,ed->pe", pts, normal) - np.einsum("ed,ed->e", a, normal)[None]
        outside = np.max(side, axis=1) > tol
        dist = np.zeros(len(pts))
        if outside.any():
            q = pts[outside]
            s = np.einsum("ped,ed->pe", q[:, None, :] - a[None], ab) / np.einsum("ed,ed->e", ab, ab)
            s = np.clip(s, 0.0, 1.0)
            proj = a[None] + s[..., None] * ab[None]
            d = np.linalg.norm(proj - q[:, None, :], axis=2)
            j = np.argmin(d, axis=1)
            pts[outside] = proj[np.arange(len(q)), j]
            dist[outside] = d[np.arange(len(q)), j]
        return pts, dist


def build_structured_mesh(n):
    """Uniform right-triangle mesh of [-1, 1]^2 with ``n`` cells per side."""
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"number of subdivisions must be >= 1, got {n}")
    n = int(n)
    g = np.linspace(-1.0, 1.0, n + 1)
    xx, yy = np.meshgrid(g, g)
    verts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i]
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper
    return SimplicialMesh(verts, tris)


def barycentric_coordinates(mesh, triangle, x):
    """Barycentric coordinates of ``x`` in ``triangle``; may be negative outside."""
    if not 0 <= triangle < mesh.n_triangles:
        raise InvalidArgumentError(f"invalid triangle id {triangle}")
    return mesh.bary(triangle, x)


def locate_point(mesh, x, hint=0):
    return mesh.locate_point(x, hint)


def incidence_matrix(mesh, degree):
    if degree == 0:
        return mesh.d0
    if degree == 1:
        return mesh.d1
    raise InvalidArgumentError("no exterior derivative of 2-forms in 2D")


def write_vtk(mesh, path, point_data=None, cell_data=None, title="lieforms"):
    """Dump the mesh (and optional fields) as legacy ASCII VTK."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.16g} {y:.16g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines += ["5"] * mesh.n_triangles
    for header, count, data in (("POINT_DATA", mesh.n_vertices, point_data),
                                ("CELL_DATA", mesh.n_triangles, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.16g}" for v in values]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{v[0]:.16g} {v[1]:.16g} 0" for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
