import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad

from lieforms.errors import InvalidArgumentError, InvalidCoefficientError
from lieforms.mesh import SimplicialMesh, build_structured_mesh
from lieforms.whitney import (AnalyticForm, Cochain, assemble_mass, assemble_stiffness,
                              cochain_proxy, derham_interpolate, error_norm,
                              evaluate_whitney_basis)

U_EXP1 = AnalyticForm(
    1,
    lambda x, t=0.0: np.stack([np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                               (1 - x[:, 0] ** 2) * (1 - x[:, 1] ** 2)], axis=1),
    # rot u = d_x u2 - d_y u1
    lambda x, t=0.0: -2 * x[:, 0] * (1 - x[:, 1] ** 2)
    - np.pi * np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]),
)
SCALAR = AnalyticForm(
    0, lambda x, t=0.0: np.cos(x[:, 0]) * np.exp(x[:, 1]),
    lambda x, t=0.0: np.stack([-np.sin(x[:, 0]) * np.exp(x[:, 1]), np.cos(x[:, 0]) * np.exp(x[:, 1])], axis=1))


def _line_integral(u, a, b, segments=10):
    # 10-point composite Gauss-Legendre, independent of the package rules
    s, w = np.polynomial.legendre.leggauss(10)
    s, w = 0.5 * (s + 1), 0.5 * w
    total = 0.0
    for j in range(segments):
        ss = (j + s) / segments
        pts = a + ss[:, None] * (b - a)
        total += np.dot(w, u(pts) @ (b - a)) / segments
    return total


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_unisolvence(mesh4, degree):
    """DOF functionals applied to the basis give the identity."""
    m = mesh4
    for t in [0, 7, 19]:
        if degree == 0:
            vals = np.array([[evaluate_whitney_basis(m, 0, t, m.vertices[v])[k] for v in m.triangles[t]]
                             for k in range(3)])
            assert np.allclose(vals, np.eye(3), atol=1e-14)
        elif degree == 1:
            for k, e in enumerate(m.tri_edges[t]):
                a, b = m.vertices[m.edges[e]]
                for j in range(3):
                    val = _line_integral(lambda p: np.array([evaluate_whitney_basis(m, 1, t, q)[j] for q in p]), a, b, 1)
                    assert val == pytest.approx(float(j == k), abs=1e-13)
        else:
            assert evaluate_whitney_basis(m, 2, t, m.centroids()[t]) * m.areas[t] == pytest.approx(1.0)


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_interpolation_reproduces_whitney_forms(mesh4, degree):
    """DOFs of the proxy of a random cochain give back its coefficients."""
    m = mesh4
    c = np.random.default_rng(degree).standard_normal(m.n_simplices(degree))

    def proxy_on(t, pts):
        tri = np.full(len(pts), t)
        return cochain_proxy(m, degree, c, tri, m.bary(tri, pts)[:, None, :])[:, 0]

    if degree == 0:
        got = [proxy_on(m.vertex_triangles[v][0], m.vertices[v][None])[0] for v in range(m.n_vertices)]
    elif degree == 1:
        got = [_line_integral(lambda p, t=m.edge_to_triangles[e, 0]: proxy_on(t, p), *m.vertices[m.edges[e]], 1)
               for e in range(m.n_edges)]
    else:
        got = [proxy_on(t, m.centroids()[t][None])[0] * m.areas[t] for t in range(m.n_triangles)]
    assert np.allclose(got, c, atol=1e-12)


def test_interpolation_matches_composite_quadrature():
    m = build_structured_mesh(8)
    got = derham_interpolate(m, 1, U_EXP1, segments=1)
    ref = np.array([_line_integral(U_EXP1, *m.vertices[m.edges[e]]) for e in range(m.n_edges)])
    assert np.max(np.abs(got - ref)) <= 1e-10


def test_interpolation_simple_values():
    m = SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    c = derham_interpolate(m, 0, AnalyticForm(0, lambda x, t=0.0: np.full(len(x), 3.0)))
    assert np.allclose(c, 3.0)
    dx = derham_interpolate(m, 1, AnalyticForm(1, lambda x, t=0.0: np.tile([1.0, 0.0], (len(x), 1))))
    e = np.flatnonzero((m.edges == [0, 1]).all(axis=1))[0]
    assert dx[e] == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        derham_interpolate(m, 0, U_EXP1)


@pytest.mark.parametrize("degree,form", [(0, SCALAR), (1, U_EXP1)])
def test_commuting_interpolation(mesh8, degree, form):
    """d(Pi w) = Pi(d w) up to quadrature accuracy."""
    d = mesh8.d0 if degree == 0 else mesh8.d1
    lhs = d @ derham_interpolate(mesh8, degree, form, quad_order=8)
    dform = AnalyticForm(degree + 1, form.d_proxy)
    rhs = derham_interpolate(mesh8, degree + 1, dform, segments=4)
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_mass_single_triangle():
    m = SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    expected = (0.5 / 12) * (np.ones((3, 3)) + np.eye(3))
    assert np.allclose(assemble_mass(m, 0).toarray(), expected, atol=1e-15)


def test_mass_two_forms_diagonal(mesh4):
    m2 = assemble_mass(mesh4, 2).toarray()
    assert np.allclose(m2, np.diag(1 / mesh4.areas))


def test_mass_one_form_against_dblquad():
    m = SimplicialMesh([[0, 0], [1, 0], [0.3, 0.8]], [[0, 1, 2]])
    mass = assemble_mass(m, 1).toarray()
    p = m.vertices

    def basis(i, x, y):
        return evaluate_whitney_basis(m, 1, 0, np.array([x, y]))[i]

    for i in range(3):
        for j in range(i, 3):
            ref = dblquad(lambda s, r: np.dot(basis(i, *(p[0] + r * (p[1] - p[0]) + s * (p[2] - p[0]))),
                                             basis(j, *(p[0] + r * (p[1] - p[0]) + s * (p[2] - p[0])))),
                          0, 1, 0, lambda r: 1 - r)[0] * 2 * m.areas[0]
            gi, gj = m.tri_edges[0, i], m.tri_edges[0, j]
            assert mass[gi, gj] == pytest.approx(ref, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mass_spd(seed):
    m = build_structured_mesh(3)
    mass = assemble_mass(m, 1)
    x = np.random.default_rng(seed).standard_normal(m.n_edges)
    assert x @ (mass @ x) > 0
    assert abs(mass - mass.T).max() < 1e-14


def test_weighted_mass_and_invalid_coefficient(mesh4):
    assert np.allclose(assemble_mass(mesh4, 1, 2.0).toarray(), 2 * assemble_mass(mesh4, 1).toarray())
    with pytest.raises(InvalidCoefficientError):
        assemble_mass(mesh4, 1, lambda x: x[:, 0])
    with pytest.raises(InvalidCoefficientError):
        assemble_mass(mesh4, 0, -1.0)


def test_stiffness_laplacian_stencil(mesh4):
    k = assemble_stiffness(mesh4, 0).toarray()
    v = mesh4.vertices
    for i in mesh4.free_dofs(0):
        row = k[i]
        assert row[i] == pytest.approx(4.0)
        nbrs = np.flatnonzero(np.abs(row) > 1e-14)
        for j in nbrs:
            if j == i:
                continue
            d = v[j] - v[i]
            axis = np.isclose(np.abs(d), 0.5).sum() == 1 and np.isclose(np.abs(d), 0.0).sum() == 1
            assert axis and row[j] == pytest.approx(-1.0)


def test_stiffness_kernels(mesh4):
    assert np.allclose(assemble_stiffness(mesh4, 0) @ np.ones(mesh4.n_vertices), 0, atol=1e-13)
    y = np.random.default_rng(1).standard_normal(mesh4.n_vertices)
    assert np.allclose(assemble_stiffness(mesh4, 1) @ (mesh4.d0 @ y), 0, atol=1e-12)
    k1 = assemble_stiffness(mesh4, 1)
    ref = mesh4.d1.T @ assemble_mass(mesh4, 2) @ mesh4.d1
    assert abs(k1 - ref).max() < 1e-12
    with pytest.raises(InvalidArgumentError):
        assemble_stiffness(mesh4, 2)


def test_error_norm(mesh4):
    const = AnalyticForm(1, lambda x, t=0.0: np.tile([0.3, -0.7], (len(x), 1)), lambda x, t=0.0: np.zeros(len(x)))
    c = Cochain(mesh4, 1, derham_interpolate(mesh4, 1, const))
    assert error_norm(mesh4, c, const) < 1e-12
    assert error_norm(mesh4, c, const, kind="Hd") < 1e-12
    zero = Cochain(mesh4, 1, np.zeros(mesh4.n_edges))
    ref = np.sqrt(dblquad(lambda y, x: np.sum(U_EXP1(np.array([[x, y]])) ** 2), -1, 1, -1, 1)[0])
    assert error_norm(mesh4, zero, U_EXP1, subdivisions=4) == pytest.approx(ref, rel=1e-6)


def test_error_decreases_under_refinement():
    errs = []
    for n in (4, 8, 16):
        m = build_structured_mesh(n)
        errs.append(error_norm(m, Cochain(m, 1, derham_interpolate(m, 1, U_EXP1)), U_EXP1))
    assert errs[0] > errs[1] > errs[2]


def test_cochain_validation(mesh4):
    with pytest.raises(InvalidArgumentError):
        Cochain(mesh4, 1, np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        Cochain(mesh4, 3, np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        Cochain(mesh4, 0, np.full(mesh4.n_vertices, np.nan))
