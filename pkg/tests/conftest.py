import numpy as np
import pytest

from lieforms.flow import VelocityField
from lieforms.mesh import build_structured_mesh


def psi_velocity(x, t=0.0):
    """Divergence-free field from a stream function vanishing on the boundary."""
    X, Y = x[:, 0], x[:, 1]
    g = 1 + 0.3 * X + 0.2 * Y
    px = -2 * X * (1 - Y**2) * g + (1 - X**2) * (1 - Y**2) * 0.3
    py = -2 * Y * (1 - X**2) * g + (1 - X**2) * (1 - Y**2) * 0.2
    return np.stack([py, -px], axis=1)


def compressible_velocity(x, t=0.0):
    """Tangential on the boundary of [-1, 1]^2 with non-zero divergence."""
    X, Y = x[:, 0], x[:, 1]
    return np.stack([(1 - X**2) * (0.5 + 0.4 * Y + 0.3 * X), (1 - Y**2) * (-0.3 + 0.5 * X * Y)], axis=1)


@pytest.fixture(scope="session")
def mesh4():
    return build_structured_mesh(4)


@pytest.fixture(scope="session")
def mesh8():
    return build_structured_mesh(8)


@pytest.fixture(scope="session")
def psi_field():
    return VelocityField(psi_velocity)


@pytest.fixture(scope="session")
def compressible_field():
    return VelocityField(compressible_velocity)


def weakly_closed_cochain(mesh, seed=0):
    """Random interior 1-cochain made M-orthogonal to gradients of interior hat functions."""
    from scipy.sparse.linalg import spsolve
    from lieforms.whitney import assemble_mass

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mesh.n_edges)
    v[mesh.boundary_flags(1)] = 0.0
    m = assemble_mass(mesh, 1)
    g = mesh.d0[:, mesh.free_dofs(0)]
    x = spsolve((g.T @ m @ g).tocsc(), g.T @ (m @ v))
    return v - g @ x


# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
