"""Quadrature rules on the reference segment [0, 1] and the reference triangle."""
from functools import lru_cache

import numpy as np

# Degree-4 symmetric rule with 6 points (Dunavant), barycentric points, weights sum to 1.
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322


@lru_cache(maxsize=None)
def gauss_segment(npts):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(npts))
    return 0.5 * (x + 1.0), 0.5 * w


def _dunavant4():
    pts = []
    for a in (_A1, _A2):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
    w = np.array([_W1] * 3 + [_W2] * 3)
    return np.array(pts), w


@lru_cache(maxsize=None)
def triangle_rule(subdivisions=1):
    """Barycentric points and weights (summing to 1) of the degree-4 rule,
    composited over ``subdivisions**2`` congruent sub-triangles."""
    bp, bw = _dunavant4()
    m = int(subdivisions)
    if m == 1:
        return bp, bw
    pts, wts = [], []
    corners = []
    for i in range(m):
        for j in range(m - i):
            # upward sub-triangle
            corners.append(((i, j), (i + 1, j), (i, j + 1)))
            if i + j < m - 1:
                corners.append(((i + 1, j), (i + 1, j + 1), (i, j + 1)))
    for c in corners:
        # sub-triangle vertices in barycentric coords (l1 = i/m, l2 = j/m)
        v = np.array([[1.0 - (a + b) / m, a / m, b / m] for a, b in c])
        pts.append(bp @ v)
        wts.append(bw / (m * m))
    return np.concatenate(pts), np.concatenate(wts)


@lru_cache(maxsize=None)
def collapsed_gauss_rule(npts):
    """Conical-product Gauss rule on the triangle, exact to degree ``2*npts - 2``.

    Returns barycentric points and weights summing to 1."""
    s, ws = gauss_segment(npts)
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    l1 = u.ravel()
    l2 = (v * (1.0 - u)).ravel()
    w = (2.0 * wu * wv * (1.0 - u)).ravel()
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1), w
