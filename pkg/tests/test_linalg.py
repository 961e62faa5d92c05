import numpy as np
import pytest
import scipy.sparse as sp

from cardioct.linalg import SolverError, cg_solve


def test_small_spd_system():
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    x = cg_solve(A, np.array([3.0, 3.0]), tol=1e-14)
    assert np.allclose(x, [1.0, 1.0], atol=1e-12)


def test_matches_dense_solve():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((12, 12))
    A = B @ B.T + 12 * np.eye(12)
    b = rng.standard_normal(12)
    x = cg_solve(sp.csr_matrix(A), b, tol=1e-13)
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-10)


def test_zero_rhs_short_circuits():
    A = sp.eye(5, format="csr")
    assert np.all(cg_solve(A, np.zeros(5)) == 0.0)


def test_matrix_free_needs_diag():
    with pytest.raises(ValueError):
        cg_solve(lambda v: 2.0 * v, np.ones(4))


def test_matrix_free_with_diag():
    x = cg_solve(lambda v: 3.0 * v, np.ones(4), diag=3.0 * np.ones(4), tol=1e-14)
    assert np.allclose(x, 1.0 / 3.0, atol=1e-13)


def test_nonpositive_diag_rejected():
    A = sp.csr_matrix(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        cg_solve(A, np.ones(2))


def test_deflated_singular_system():
    # graph Laplacian of a path: kernel = constants
    n = 9
    main = 2.0 * np.ones(n)
    main[0] = main[-1] = 1.0
    A = sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1], format="csr")
    b = np.zeros(n)
    b[0], b[-1] = 1.0, -1.0
    x = cg_solve(A, b, tol=1e-12, deflate=True)
    assert abs(x.mean()) < 1e-12
    r = b - A @ x
    assert np.linalg.norm(r - r.mean()) < 1e-10


def test_warm_start_helps_and_never_hurts():
    A = sp.csr_matrix(np.diag(np.linspace(1.0, 4.0, 20)))
    b = np.linspace(1.0, 2.0, 20)
    exact = b / np.linspace(1.0, 4.0, 20)
    x = cg_solve(A, b, tol=1e-13, x0=exact + 1e-8)
    assert np.allclose(x, exact, atol=1e-10)
    # a wildly off warm start must not poison a tiny right-hand side
    x = cg_solve(A, 1e-30 * b, tol=1e-10, x0=np.ones(20))
    assert np.linalg.norm(x) < 1e-29


def test_iteration_cap_raises():
    # [1, 0] excites both eigenvectors, so two iterations are needed
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(SolverError):
        cg_solve(A, np.array([1.0, 0.0]), tol=1e-14, maxiter=1)
