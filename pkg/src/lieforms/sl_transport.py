"""Semi-Lagrangian transport matrices: interpolated pullbacks of Whitney forms."""
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import InvalidArgumentError, SingularFlowError
from .flow import trace_segment
from .mesh import LOCAL_EDGES, TOL_GEOM


@dataclass
class TransportMatrix:
    """Sparse matrix acting on cochain coefficients, tagged with degree and direction."""

    degree: int
    matrix: sparse.csr_matrix
    direction: str

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def toarray(self):
        return self.matrix.toarray()


def assemble_P0(mesh, flow):
    """Row i: barycentric coordinates of the image of vertex i in its host."""
    n0 = mesh.n_vertices
    rows = np.repeat(np.arange(n0), 3)
    cols = mesh.triangles[flow.hosts].ravel()
    vals = flow.bary.ravel()
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(n0, n0))
    m.eliminate_zeros()
    return TransportMatrix(0, m, flow.direction)


def edge_pullback_row(mesh, flow, edge):
    """Columns and values of the transported edge ``edge`` (low to high vertex)."""
    j, k = mesh.edges[edge]
    pieces = trace_segment(mesh, flow.hosts[j], flow.images[j], flow.images[k])
    cols, vals = [], []
    for pc in pieces:
        la, lb = pc.a_bary, pc.b_bary
        for m, (p, q) in enumerate(LOCAL_EDGES):
            v = la[p] * lb[q] - la[q] * lb[p]
            if v != 0.0:
                cols.append(mesh.tri_edges[pc.triangle, m])
                vals.append(v * mesh.tri_edge_sign[pc.triangle, m])
    return cols, vals


def assemble_P1(mesh, flow):
    """Edge DOFs of the pulled-back Whitney 1-forms, exact per traced piece."""
    rows, cols, vals = [], [], []
    for e in range(mesh.n_edges):
        c, v = edge_pullback_row(mesh, flow, e)
        rows += [e] * len(c)
        cols += c
        vals += v
    n1 = mesh.n_edges
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(n1, n1))
    m.eliminate_zeros()
    return TransportMatrix(1, m, flow.direction)


def signed_area(poly):
    """Shoelace area of a polygon given as (K, 2) vertices."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject, clip):
    """Sutherland-Hodgman clipping of ``subject`` by the convex ccw polygon ``clip``."""
    out = [np.asarray(p, dtype=float) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        ab = b - a
        inp, out = out, []
        side = [ab[0] * (p[1] - a[1]) - ab[1] * (p[0] - a[0]) for p in inp]
        for m in range(len(inp)):
            p, q = inp[m], inp[(m + 1) % len(inp)]
            sp, sq = side[m], side[(m + 1) % len(inp)]
            if sp >= 0:
                out.append(p)
            if (sp >= 0) != (sq >= 0):
                out.append(p + (sp / (sp - sq)) * (q - p))
    return np.array(out).reshape(-1, 2)


def overlap_areas(mesh, polygon, seeds):
    """Positive overlap areas of a convex ccw polygon with mesh triangles.

    Candidates are grown from ``seeds`` through edge neighbours."""
    poly = np.asarray(polygon, dtype=float)
    seen = set()
    queue = deque()
    for s in seeds:
        for v in mesh.triangles[s]:
            for t in mesh.vertex_triangles[v]:
                if t not in seen:
                    seen.add(int(t))
                    queue.append(int(t))
    result = {}
    thresh = TOL_GEOM * mesh.h * mesh.h
    while queue:
        t = queue.popleft()
        area = signed_area(clip_polygon(poly, mesh.vertices[mesh.triangles[t]]))
        if area > thresh:
            result[t] = area
            for nb in mesh.neighbors[t]:
                if nb >= 0 and nb not in seen:
                    seen.add(int(nb))
                    queue.append(int(nb))
    return result


def assemble_P2(mesh, flow):
    """Cell DOFs of pulled-back piecewise-constant densities by polygon clipping."""
    rows, cols, vals = [], [], []
    for i in range(mesh.n_triangles):
        tri = mesh.triangles[i]
        img = flow.images[tri]
        a = signed_area(img)
        if abs(a) <= TOL_GEOM * mesh.areas[i]:
            raise SingularFlowError(f"image of triangle {i} is degenerate")
        # an orientation-reversing image contributes negative overlap
        sign = 1.0 if a > 0 else -1.0
        poly = img if a > 0 else img[::-1]
        for t, area in overlap_areas(mesh, poly, flow.hosts[tri]).items():
            rows.append(i)
            cols.append(t)
            vals.append(sign * area / mesh.areas[t])
    n2 = mesh.n_triangles
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(n2, n2))
    return TransportMatrix(2, m, flow.direction)


def assemble_transport(mesh, flow, degree):
    """Dispatch to the transport matrix of the given form degree."""
    if degree == 0:
        return assemble_P0(mesh, flow)
    if degree == 1:
        return assemble_P1(mesh, flow)
    if degree == 2:
        return assemble_P2(mesh, flow)
    raise InvalidArgumentError(f"invalid form degree {degree}")
