import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from lieforms.errors import InvalidArgumentError, PropagationError
from lieforms.experiments import velocity_field
from lieforms.flow import (VelocityField, advect_vertices, build_discrete_flow, discrete_flow,
                           flow_jacobian, flow_map_and_jacobian, integrate_points, trace_segment)
from lieforms.mesh import build_structured_mesh

from conftest import psi_velocity

ZERO = VelocityField(lambda x, t=0.0: np.zeros_like(x))
CONST = VelocityField(lambda x, t=0.0: np.tile([0.3, -0.2], (len(x), 1)))


def test_zero_and_constant_jacobian():
    x = np.array([0.2, -0.1])
    assert np.allclose(flow_jacobian(ZERO, x, 0.0, 0.7), np.eye(2))
    assert np.allclose(flow_jacobian(CONST, x, 0.0, 0.7, substeps=3), np.eye(2), atol=1e-9)


def test_linear_field_matches_matrix_exponential():
    a = np.array([[0.2, -0.5], [0.4, -0.1]])
    beta = VelocityField(lambda x, t=0.0: x @ a.T, lambda x, t=0.0: np.broadcast_to(a, (len(x), 2, 2)))
    x0 = np.array([[0.3, 0.1]])
    y, jac = flow_map_and_jacobian(beta, x0, 0.0, 0.8, substeps=20)
    e = expm(0.8 * a)
    assert np.allclose(jac[0], e, atol=1e-8)
    assert np.allclose(y[0], e @ x0[0], atol=1e-8)


@pytest.mark.parametrize("integrator,order", [("euler", 1), ("rk2", 2), ("rk4", 4)])
def test_integrator_orders(integrator, order):
    beta = VelocityField(psi_velocity)
    x0 = np.array([[0.3, -0.2], [-0.5, 0.4]])
    ref = np.array([solve_ivp(lambda t, y: psi_velocity(y[None])[0], (0, 0.5), p, rtol=1e-12, atol=1e-13).y[:, -1]
                    for p in x0])
    errs = [np.abs(integrate_points(beta, x0, 0.0, 0.5, integrator, s) - ref).max() for s in (8, 16)]
    assert np.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.3)


def test_composition_returns_to_start(mesh8):
    beta = VelocityField(psi_velocity)
    fwd = integrate_points(beta, mesh8.vertices, 0.0, 0.3, "rk4", 50)
    back = integrate_points(beta, fwd, 0.3, 0.0, "rk4", 50)
    assert np.abs(back - mesh8.vertices).max() <= 1e-8


def test_non_finite_velocity_raises():
    bad = VelocityField(lambda x, t=0.0: np.full_like(x, np.nan))
    with pytest.raises(PropagationError):
        integrate_points(bad, np.zeros((1, 2)), 0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        integrate_points(CONST, np.zeros((1, 2)), 0.0, 1.0, substeps=0)


def test_fd_jacobian_fallback():
    beta = VelocityField(psi_velocity)
    exp1 = velocity_field("I")
    x = np.array([[0.2, 0.3]])
    assert np.allclose(VelocityField(exp1.func).jac(x), exp1.jac(x), atol=1e-8)
    assert beta.jac(x).shape == (1, 2, 2)


def test_identity_flow_hosts(mesh4):
    flow = build_discrete_flow(mesh4, mesh4.vertices.copy())
    for i in range(mesh4.n_vertices):
        assert flow.hosts[i] in mesh4.vertex_triangles[i]
        k = list(mesh4.triangles[flow.hosts[i]]).index(i)
        assert np.allclose(flow.bary[i], np.eye(3)[k])


def test_discrete_flow_hosts_match_exhaustive_location():
    mesh = build_structured_mesh(8)
    beta = velocity_field("I")
    dt = 0.1 * mesh.h / beta.max_norm(mesh)
    flow = discrete_flow(mesh, beta, 0.0, dt)
    exhaustive = mesh.locate_points(flow.images)
    assert np.array_equal(flow.hosts, exhaustive)
    for i in range(mesh.n_vertices):
        ring1 = set(mesh.vertex_triangles[i])
        ring2 = set(np.concatenate([mesh.vertex_triangles[v] for t in ring1 for v in mesh.triangles[t]]))
        assert flow.hosts[i] in ring2


def test_flow_is_affine_per_triangle(mesh4):
    flow = discrete_flow(mesh4, VelocityField(psi_velocity), 0.0, 0.1)
    lam = np.full(3, 1 / 3)
    assert np.allclose(flow.evaluate(mesh4, 3, lam), flow.images[mesh4.triangles[3]].mean(axis=0))


def test_advect_vertices_clamps(mesh4):
    images, dist = advect_vertices(mesh4, CONST, 0.0, 1.0)
    assert np.all(np.abs(images) <= 1.0 + 1e-15)
    assert dist.max() == pytest.approx(np.hypot(0.3, 0.2))  # corner vertex


def test_trace_single_triangle(mesh4):
    c = mesh4.centroids()[2]
    pieces = trace_segment(mesh4, 2, c, c + 1e-3)
    assert len(pieces) == 1 and pieces[0].triangle == 2


def test_trace_zero_length(mesh4):
    c = mesh4.centroids()[2]
    pieces = trace_segment(mesh4, 2, c, c)
    assert len(pieces) == 1 and pieces[0].length == 0.0


def test_trace_one_crossing(mesh4):
    # triangles 0 and 1 share the diagonal of the first cell
    a = mesh4.centroids()[0]
    b = mesh4.centroids()[1]
    pieces = trace_segment(mesh4, 0, a, b)
    assert [p.triangle for p in pieces] == [0, 1]
    assert np.array_equal(pieces[0].b, pieces[1].a)
    assert sum(p.length for p in pieces) == pytest.approx(np.linalg.norm(b - a), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99), st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
def test_trace_pieces_chain_and_cover(x0, y0, x1, y1):
    mesh = build_structured_mesh(5)
    a, b = np.array([x0, y0]), np.array([x1, y1])
    t0, _ = mesh.locate_point(a)
    pieces = trace_segment(mesh, t0, a, b)
    for p, q in zip(pieces, pieces[1:]):
        assert np.array_equal(p.b, q.a)
    for p in pieces:
        assert p.a_bary.min() >= -1e-9 and p.b_bary.min() >= -1e-9
    assert sum(p.length for p in pieces) == pytest.approx(np.linalg.norm(b - a), abs=1e-12)
