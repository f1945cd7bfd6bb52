import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wentzell_lab.assembly import assemble, shifted_form_matrix
from wentzell_lab.linalg import (BicgstabResult, CsrMatrix,
                                 SingularMatrixError, bicgstab, lu_factor,
                                 lu_solve, load_matrix_market,
                                 rcm_permutation, save_matrix_market, spmv)
from wentzell_lab.mesh import generate_rectangle


def random_sparse(rng, n, density=0.1, dominant=False):
    mask = rng.random((n, n)) < density
    a = np.where(mask, rng.standard_normal((n, n))
                 + 1j * rng.standard_normal((n, n)), 0.0)
    if dominant:
        a += np.diag(np.abs(a).sum(axis=1) + 1.0)
    return a


# -- storage invariants ---------------------------------------------------------


def test_csr_canonical_form():
    rows = np.array([0, 0, 1, 1, 2, 0])
    cols = np.array([2, 0, 1, 1, 2, 2])
    vals = np.array([1.0, 2.0, 3.0, -3.0, 5.0, 4.0])
    A = CsrMatrix.from_coo(rows, cols, vals, (3, 3))
    # duplicates summed, zero row-1 entry dropped, columns sorted
    assert np.all(np.diff(A.row_ptr) >= 0)
    for i in range(A.nrows):
        cols_i = A.col_idx[A.row_ptr[i]:A.row_ptr[i + 1]]
        assert np.all(np.diff(cols_i) > 0)
    assert not np.any(A.values == 0.0)
    assert A.nnz == 3
    np.testing.assert_allclose(A.to_dense(),
                               [[2, 0, 5], [0, 0, 0], [0, 0, 5]])


# -- spmv ------------------------------------------------------------------------


def test_spmv_identity():
    A = CsrMatrix.identity(3, dtype=complex)
    x = np.array([1.0, 1j, -2.0])
    np.testing.assert_array_equal(spmv(A, x), x)


def test_spmv_zero_matrix():
    A = CsrMatrix.zeros((4, 4), dtype=complex)
    np.testing.assert_array_equal(spmv(A, np.ones(4)), np.zeros(4))


def test_spmv_against_dense_oracle():
    rng = np.random.default_rng(0)
    dense = random_sparse(rng, 50, density=0.15)
    A = CsrMatrix.from_dense(dense)
    x = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    y = spmv(A, x)
    bound = 1e-13 * np.abs(dense).max() * np.linalg.norm(x)
    assert np.abs(y - dense @ x).max() <= bound


def test_spmv_dimension_mismatch():
    A = CsrMatrix.identity(3)
    with pytest.raises(ValueError):
        spmv(A, np.ones(4))


# -- LU ---------------------------------------------------------------------------


def test_lu_diagonal():
    A = CsrMatrix.from_dense(np.diag([2.0, 4.0]))
    x = lu_solve(lu_factor(A), np.array([2.0, 8.0]))
    np.testing.assert_allclose(x, [1.0, 2.0], rtol=1e-14)


def test_lu_shifted_form_constant_rhs():
    # S_1 = K + G is Hermitian positive definite; b = S_1 ones recovers ones
    mesh = generate_rectangle(1, 1, 3, 3)
    bundle = assemble(mesh, beta=0.0)
    S1 = shifted_form_matrix(bundle, 1.0)
    ones = np.ones(bundle.n_total, dtype=complex)
    b = S1 @ ones
    x = lu_solve(lu_factor(S1), b)
    assert np.abs(x - ones).max() <= 1e-10


def test_lu_singular_stiffness():
    # constants span the kernel of the stiffness matrix
    mesh = generate_rectangle(1, 1, 3, 3)
    K = assemble(mesh, beta=0.0).K
    with pytest.raises(SingularMatrixError):
        lu_factor(K)


def test_lu_permutation_identity():
    rng = np.random.default_rng(1)
    for trial in range(5):
        dense = random_sparse(rng, 30, density=0.2, dominant=True)
        A = CsrMatrix.from_dense(dense)
        F = lu_factor(A)
        residual = np.abs(F.L.to_dense() @ F.U.to_dense()
                          - dense[F.row_perm][:, F.col_perm]).max()
        assert residual <= 1e-10 * A.max_abs()
        assert F.pivot_growth >= 0.0


def test_lu_rcm_reduces_bandwidth():
    # path graph numbered randomly: RCM must recover a narrow band
    n = 40
    rng = np.random.default_rng(2)
    perm = rng.permutation(n)
    rows, cols, vals = [], [], []
    for i in range(n - 1):
        a, b = perm[i], perm[i + 1]
        rows += [a, b, a, b]
        cols += [b, a, a, b]
        vals += [-1.0, -1.0, 2.0, 2.0]
    A = CsrMatrix.from_coo(np.array(rows), np.array(cols), np.array(vals),
                           (n, n))
    p = rcm_permutation(A)
    reordered = A.to_dense()[p][:, p]
    r, c = np.nonzero(reordered)
    assert np.abs(r - c).max() <= 2


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=25), st.integers(0, 2 ** 31 - 1))
def test_lu_solve_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    dense = random_sparse(rng, n, density=0.3, dominant=True)
    A = CsrMatrix.from_dense(dense)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x = lu_solve(lu_factor(A), b)
    bound = 1e-9 * (np.abs(dense).max() * np.linalg.norm(x)
                    + np.linalg.norm(b))
    assert np.linalg.norm(dense @ x - b) <= bound


def test_lu_hermitian_conditioning_spot_check():
    mesh = generate_rectangle(1, 1, 8, 8)
    bundle = assemble(mesh, beta=0.0)
    S = shifted_form_matrix(bundle, 1.0)
    dense = S.to_dense()
    kappa = np.linalg.cond(dense)
    rng = np.random.default_rng(3)
    x_true = rng.standard_normal(bundle.n_total) \
        + 1j * rng.standard_normal(bundle.n_total)
    x = lu_solve(lu_factor(S), dense @ x_true)
    err = np.linalg.norm(x - x_true)
    # generous safety factor over kappa * eps * ||x||
    assert err <= 100.0 * kappa * np.finfo(float).eps * np.linalg.norm(x_true)


# -- BiCGStab ----------------------------------------------------------------------


def test_bicgstab_zero_rhs():
    A = CsrMatrix.identity(5, dtype=complex)
    res = bicgstab(A, np.zeros(5))
    assert res.converged
    assert res.iterations == 0
    np.testing.assert_array_equal(res.x, np.zeros(5))


def test_bicgstab_matches_direct_solver():
    mesh = generate_rectangle(1, 1, 6, 6)
    bundle = assemble(mesh, beta=0.0)
    S1 = shifted_form_matrix(bundle, 1.0)
    rng = np.random.default_rng(4)
    b = rng.standard_normal(bundle.n_total) + 0j
    direct = lu_solve(lu_factor(S1), b)
    res = bicgstab(S1, b, tol=1e-10, maxit=2000)
    assert res.converged
    assert np.abs(res.x - direct).max() <= 1e-8


def test_bicgstab_maxit_one_reports_history():
    # stiffness shifted by a tiny mass term is badly conditioned: one
    # iteration cannot converge
    mesh = generate_rectangle(1, 1, 8, 8)
    bundle = assemble(mesh, beta=0.0)
    A = shifted_form_matrix(bundle, 1e-12)
    rng = np.random.default_rng(5)
    b = rng.standard_normal(bundle.n_total) + 0j
    res = bicgstab(A, b, tol=1e-14, maxit=1)
    assert not res.converged
    assert len(res.residual_history) == 1
    assert res.x is not None
    assert isinstance(res, BicgstabResult)


def test_bicgstab_jacobi_preconditioner():
    mesh = generate_rectangle(1, 1, 6, 6)
    bundle = assemble(mesh, beta=1.0)
    A = shifted_form_matrix(bundle, 2.0)
    rng = np.random.default_rng(6)
    b = rng.standard_normal(bundle.n_total) + 0j
    res = bicgstab(A, b, tol=1e-10, maxit=2000, preconditioner="jacobi")
    assert res.converged
    assert np.linalg.norm((A @ res.x) - b) <= 1e-9 * np.linalg.norm(b)


# -- matrix market ------------------------------------------------------------------


def test_matrix_market_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    dense = random_sparse(rng, 12, density=0.3)
    A = CsrMatrix.from_dense(dense)
    path = tmp_path / "m.mtx"
    save_matrix_market(A, path)
    B = load_matrix_market(path)
    assert np.abs(A.to_dense() - B.to_dense()).max() <= 1e-14
