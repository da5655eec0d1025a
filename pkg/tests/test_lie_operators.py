import numpy as np
import pytest

from lieforms.errors import InvalidArgumentError
from lieforms.flow import VelocityField
from lieforms.lie_operators import (assemble_standard_lie, assemble_upwind_lie, edge_normals,
                                    probe_triangle)
from lieforms.mesh import SimplicialMesh, build_structured_mesh
from lieforms.oracles import (extrapolate_to_zero, oracle_lie_bilinear, oracle_lie_matrix,
                              oracle_upwind_cochain)
from lieforms.whitney import assemble_mass, derham_interpolate, AnalyticForm

from conftest import compressible_velocity, psi_velocity

DTAUS = (1e-3, 5e-4, 2.5e-4)
FIELDS = [psi_velocity, compressible_velocity]


@pytest.fixture(scope="module")
def two_triangles():
    return build_structured_mesh(1)


@pytest.mark.parametrize("func", FIELDS, ids=["div-free", "compressible"])
@pytest.mark.parametrize("degree", [0, 1, 2])
def test_standard_matches_exact_flow_oracle(two_triangles, func, degree):
    beta = VelocityField(func)
    oracle = extrapolate_to_zero(DTAUS, [oracle_lie_matrix(two_triangles, degree, beta, d) for d in DTAUS])
    # large elements: subdivide the volume rule so the assembly is exact enough
    mat = assemble_standard_lie(two_triangles, degree, beta, subdivisions=4).toarray()
    assert np.abs(oracle - mat).max() <= 1e-4


def test_oracle_bilinear_is_matrix_entry(two_triangles):
    beta = VelocityField(psi_velocity)
    mat = oracle_lie_matrix(two_triangles, 1, beta, 1e-3)
    i, j = 1, 3
    ei, ej = np.eye(two_triangles.n_edges)[i], np.eye(two_triangles.n_edges)[j]
    assert oracle_lie_bilinear(two_triangles, 1, beta, ej, ei, 1e-3) == pytest.approx(mat[i, j])


@pytest.mark.parametrize("func", FIELDS, ids=["div-free", "compressible"])
@pytest.mark.parametrize("degree", [0, 1, 2])
def test_upwind_matches_cochain_oracle(func, degree):
    mesh = build_structured_mesh(2)
    beta = VelocityField(func)
    rng = np.random.default_rng(degree)
    c = rng.standard_normal(mesh.n_simplices(degree))
    dofs = np.arange(mesh.n_simplices(degree))[: 6 if degree == 1 else None]
    oracle = extrapolate_to_zero(DTAUS, [oracle_upwind_cochain(mesh, degree, beta, c, d, dofs=dofs)
                                         for d in DTAUS])
    got = assemble_upwind_lie(mesh, degree, beta, "upwind") @ c
    assert np.nanmax(np.abs(oracle[dofs] - got[dofs])) <= 1e-4


def test_downwind_is_negated_upwind_of_reversed_field(mesh4):
    beta = VelocityField(compressible_velocity)
    rev = VelocityField(lambda x, t=0.0: -compressible_velocity(x, t))
    for degree in range(3):
        down = assemble_upwind_lie(mesh4, degree, beta, "downwind").matrix
        up = assemble_upwind_lie(mesh4, degree, rev, "upwind").matrix
        assert abs(down + up).max() <= 1e-14


@pytest.mark.parametrize("direction", ["upwind", "downwind"])
def test_upwind_commutes_with_d(mesh4, direction):
    beta = VelocityField(psi_velocity)
    l0, l1, l2 = (assemble_upwind_lie(mesh4, k, beta, direction).matrix for k in range(3))
    assert abs(mesh4.d0 @ l0 - l1 @ mesh4.d0).max() <= 1e-12
    assert abs(mesh4.d1 @ l1 - l2 @ mesh4.d1).max() <= 1e-12


def test_zero_field_gives_zero_operators(mesh4):
    zero = VelocityField(lambda x, t=0.0: np.zeros_like(x))
    for degree in range(3):
        assert abs(assemble_standard_lie(mesh4, degree, zero).matrix).max() == 0
        assert abs(assemble_upwind_lie(mesh4, degree, zero).matrix).max() == 0


def test_standard_zero_form_constant_field_single_triangle():
    m = SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    b = np.array([0.4, -0.7])
    beta = VelocityField(lambda x, t=0.0: np.tile(b, (len(x), 1)))
    mat = assemble_standard_lie(m, 0, beta).toarray()
    # B[i, j] = int (b . grad lambda_j) lambda_i = (b . grad lambda_j) * area / 3
    expected = np.tile(m.bary_grads[0] @ b, (3, 1)) * m.areas[0] / 3
    assert np.allclose(mat, expected, atol=1e-15)


def test_upwind_zero_form_is_directional_derivative(mesh4):
    """For linear functions the one-sided derivative is exact at every vertex."""
    beta = VelocityField(psi_velocity)
    f = AnalyticForm(0, lambda x, t=0.0: 0.3 * x[:, 0] - 1.2 * x[:, 1] + 0.5)
    got = assemble_upwind_lie(mesh4, 0, beta) @ derham_interpolate(mesh4, 0, f)
    assert np.allclose(got, psi_velocity(mesh4.vertices) @ [0.3, -1.2], atol=1e-13)


def test_standard_antisymmetric_for_divergence_free_zero_forms(mesh8):
    """int (b.grad u) v = -int (b.grad v) u when div b = 0 and b.n = 0."""
    b = assemble_standard_lie(mesh8, 0, VelocityField(psi_velocity), subdivisions=2).toarray()
    assert np.abs(b + b.T).max() <= 1e-4 * np.abs(b).max()


def test_probe_triangle_tie_break(mesh4):
    v = 2 * 5 + 2  # centre vertex (0, 0)
    # along the diagonal the probe sits on the edge shared by two triangles
    t = probe_triangle(mesh4, v, np.array([1.0, 1.0]), 1.0)
    cands = [s for s in mesh4.vertex_triangles[v] if mesh4.bary(s, mesh4.vertices[v] + 1e-9 * np.array([1, 1])).min() >= -1e-14]
    assert t == min(cands) and len(cands) == 2
    assert probe_triangle(mesh4, v, np.zeros(2), 1.0) == -1


def test_edge_normals_unit_and_orthogonal(mesh4):
    n = edge_normals(mesh4)
    tang = mesh4.vertices[mesh4.edges[:, 1]] - mesh4.vertices[mesh4.edges[:, 0]]
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
    assert np.allclose(np.einsum("ed,ed->e", n, tang), 0.0)


def test_invalid_arguments(mesh4):
    beta = VelocityField(psi_velocity)
    with pytest.raises(InvalidArgumentError):
        assemble_standard_lie(mesh4, 3, beta)
    with pytest.raises(InvalidArgumentError):
        assemble_upwind_lie(mesh4, 1, beta, "sideways")
    with pytest.raises(InvalidArgumentError):
        oracle_lie_matrix(mesh4, 1, beta, -1.0)
