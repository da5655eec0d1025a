"""Sparse linear solvers and Matrix Market exchange.

Matrices are ``scipy.sparse`` CSR matrices with sorted, unique column indices.
"""
import numpy as np
from scipy import io as spio
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, InvalidArgumentError, SingularMatrixError


def as_csr(a):
    """Canonical CSR form: duplicates summed, indices sorted."""
    m = sparse.csr_matrix(a, dtype=float, copy=True)
    m.sum_duplicates()
    m.sort_indices()
    return m


def _check_rhs(a, b):
    b = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise InvalidArgumentError("matrix must be square")
    if b.shape != (a.shape[0],):
        raise InvalidArgumentError("right-hand side does not match the matrix")
    if not np.all(np.isfinite(b)):
        raise InvalidArgumentError("right-hand side must be finite")
    return b


def is_symmetric(a, tol=1e-12, samples=2000, seed=0):
    """Check ``|a_ij - a_ji| <= tol * max|a|`` on sampled stored entries."""
    a = sparse.coo_matrix(a)
    if a.nnz == 0:
        return True
    rng = np.random.default_rng(seed)
    pick = rng.choice(a.nnz, size=min(samples, a.nnz), replace=False)
    csr = a.tocsr()
    scale = np.abs(a.data).max()
    diff = csr[a.row[pick], a.col[pick]] - csr[a.col[pick], a.row[pick]]
    return bool(np.max(np.abs(diff)) <= tol * scale)


def solve_spd(a, b, tol=1e-12, max_iter=None, x0=None, return_history=False):
    """Jacobi-preconditioned conjugate gradients.

    Parameters
    ----------
    a : sparse matrix
        Symmetric positive definite.
    b : ndarray
    tol : float
        Relative residual ``||Ax - b|| / ||b||`` at termination.
    max_iter : int, optional
        Defaults to ``10 * n``.
    return_history : bool
        Also return the relative residual after each iteration.

    Returns
    -------
    x : ndarray
    history : list of float, only if ``return_history``
    """
    a = as_csr(a)
    b = _check_rhs(a, b)
    if not is_symmetric(a):
        raise InvalidArgumentError("matrix is not symmetric")
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return (np.zeros(n), [0.0]) if return_history else np.zeros(n)
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise InvalidArgumentError("matrix has non-positive diagonal entries")
    inv_d = 1.0 / diag
    r = b - a @ x
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / nb]
    for _ in range(max_iter):
        if history[-1] <= tol:
            break
        ap = a @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        history.append(np.linalg.norm(r) / nb)
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if history[-1] <= tol:
        return (x, history) if return_history else x
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations", history)


def _factor(a):
    row_nnz = np.diff(as_csr(a).indptr)
    col_nnz = np.diff(a.indptr)
    zero = np.flatnonzero((row_nnz == 0) | (col_nnz == 0))
    if len(zero):
        raise SingularMatrixError(f"matrix has an empty row or column at {zero[0]}", int(zero[0]))
    try:
        lu = splu(a)
    except RuntimeError as exc:
        raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
    diag_u = np.abs(lu.U.diagonal())
    if np.any(diag_u == 0):
        k = int(np.argmin(diag_u))
        raise SingularMatrixError(f"zero pivot at {k}", k)
    return lu


def _checked_solve(a, lu, b, rtol):
    x = lu.solve(b)
    nb = np.linalg.norm(b)
    res = np.linalg.norm(a @ x - b)
    if not np.all(np.isfinite(x)) or res > rtol * max(nb, np.finfo(float).tiny):
        k = int(np.argmin(np.abs(lu.U.diagonal())))
        raise SingularMatrixError(
            f"matrix is numerically singular (relative residual {res / max(nb, 1e-300):.2e})", k)
    return x


def solve_general(a, b, rtol=1e-10):
    """Sparse LU solve (partial pivoting) with a relative residual check."""
    a = sparse.csc_matrix(as_csr(a))
    b = _check_rhs(a, b)
    return _checked_solve(a, _factor(a), b, rtol)


class Factorization:
    """Reusable sparse LU factorization of a fixed matrix."""

    def __init__(self, a, rtol=1e-10):
        self.matrix = sparse.csc_matrix(as_csr(a))
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise InvalidArgumentError("matrix must be square")
        self.rtol = rtol
        self._lu = _factor(self.matrix)

    def solve(self, b):
        b = _check_rhs(self.matrix, b)
        return _checked_solve(self.matrix, self._lu, b, self.rtol)


def write_matrix_market(path, a, symmetric=False, comment=""):
    """Write a sparse matrix in Matrix Market coordinate format."""
    spio.mmwrite(str(path), sparse.coo_matrix(a), comment=comment,
                 symmetry="symmetric" if symmetric else "general")


def read_matrix_market(path):
    """Read a Matrix Market coordinate file as CSR."""
    return as_csr(spio.mmread(str(path)))
