import numpy as np
import pytest
import scipy.io

from tidefem.assembly import PrecondKind, TideParams, build_preconditioner
from tidefem.fespace import FeFamily, build_dofmap
from tidefem.mesh import CellKind, build_structured
from tidefem.sparse import (
    CooBuilder,
    CsrMatrix,
    FactorKind,
    factorize,
    solve,
    spmv,
)


def random_sparse(rng, n=20, density=0.25):
    dense = rng.standard_normal((n, n))
    dense[rng.random((n, n)) > density] = 0.0
    return dense


def test_spmv_identity_and_diag():
    I = CsrMatrix.identity(5)
    x = np.arange(5.0)
    assert np.array_equal(spmv(I, x), x)
    D = CsrMatrix.diagonal(np.full(4, 2.0))
    assert np.array_equal(spmv(D, np.ones(4)), 2.0 * np.ones(4))


def test_spmv_against_dense_oracle():
    rng = np.random.default_rng(0)
    dense = random_sparse(rng)
    A = CsrMatrix.from_dense(dense)
    x = rng.standard_normal(20)
    assert np.allclose(A.matvec(x), dense @ x, atol=1e-14)


def test_spmv_dimension_mismatch():
    A = CsrMatrix.identity(4)
    with pytest.raises(ValueError):
        A.matvec(np.ones(5))


def test_spmv_linearity():
    rng = np.random.default_rng(1)
    A = CsrMatrix.from_dense(random_sparse(rng))
    x, y = rng.standard_normal(20), rng.standard_normal(20)
    lhs = A.matvec(2.5 * x + 0.3 * y)
    rhs = 2.5 * A.matvec(x) + 0.3 * A.matvec(y)
    assert np.allclose(lhs, rhs, atol=1e-13)


def test_csr_canonical_form_from_duplicates():
    rows = [0, 0, 1, 1, 0]
    cols = [1, 0, 1, 1, 1]
    vals = [2.0, 1.0, 5.0, -2.0, 3.0]
    A = CsrMatrix.from_coo(2, 2, rows, cols, vals)
    dense = A.to_dense()
    assert np.allclose(dense, [[1.0, 5.0], [0.0, 3.0]])
    for r in range(A.nrows):
        idx = A.indices[A.indptr[r] : A.indptr[r + 1]]
        assert np.all(np.diff(idx) > 0)


def test_factorize_identity_and_diag():
    for kind in FactorKind:
        F = factorize(CsrMatrix.identity(6), kind)
        b = np.arange(6.0)
        assert np.allclose(solve(F, b), b)
    F = factorize(CsrMatrix.diagonal(np.full(3, 4.0)), FactorKind.SPD_CHOLESKY)
    assert np.allclose(F.solve(np.ones(3)), 0.25 * np.ones(3))


def assembled_pv(N=4):
    mesh = build_structured(N, CellKind.TRIANGLE)
    V = build_dofmap(mesh, FeFamily.RT1_TRIANGLE)
    W = build_dofmap(mesh, FeFamily.DG0)
    params = TideParams(eps=0.01, k=0.1, beta=0.1, C=1.0, f=1.0)
    return build_preconditioner(params, V, W, PrecondKind.RIESZ).P_V


@pytest.mark.parametrize("kind", list(FactorKind))
def test_factorize_assembled_block_residual(kind):
    A = assembled_pv()
    F = factorize(A, kind)
    rng = np.random.default_rng(2)
    for _ in range(3):
        b = rng.standard_normal(A.nrows)
        x = F.solve(b)
        assert np.linalg.norm(A.matvec(x) - b) <= 1e-10 * np.linalg.norm(b)


def test_cholesky_solves_full_basis_to_backward_stable_accuracy():
    A = assembled_pv(N=3)
    F = factorize(A, FactorKind.SPD_CHOLESKY)
    dense = A.to_dense()
    n = A.nrows
    X = np.column_stack([F.solve(e) for e in np.eye(n)])
    resid = np.abs(dense @ X - np.eye(n)).max()
    assert resid <= 1e-12 * np.abs(dense).max() * n


def test_cholesky_rejects_indefinite():
    A = CsrMatrix.diagonal(np.array([1.0, -1.0, 2.0]))
    with pytest.raises(np.linalg.LinAlgError):
        factorize(A, FactorKind.SPD_CHOLESKY)


def test_lu_rejects_singular():
    A = CsrMatrix.from_dense(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        factorize(A, FactorKind.GENERAL_LU)


def test_factorize_rejects_rectangular():
    A = CsrMatrix.from_dense(np.ones((2, 3)))
    with pytest.raises(ValueError):
        factorize(A, FactorKind.GENERAL_LU)


def test_solve_dimension_mismatch():
    F = factorize(CsrMatrix.identity(4), FactorKind.GENERAL_LU)
    with pytest.raises(ValueError):
        F.solve(np.ones(5))


def test_empty_factorization():
    F = factorize(CsrMatrix.from_dense(np.zeros((0, 0))), FactorKind.SPD_CHOLESKY)
    assert F.solve(np.zeros(0)).shape == (0,)


def test_coo_builder_accumulates():
    b = CooBuilder(3, 3)
    b.add([0, 1], [0, 1], [1.0, 2.0])
    b.add([0], [0], [4.0])
    A = b.build()
    assert np.allclose(A.to_dense(), np.diag([5.0, 2.0, 0.0]))


def test_matrix_market_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    A = CsrMatrix.from_dense(random_sparse(rng, n=8))
    path = tmp_path / "mat.mtx"
    A.write_matrix_market(path)
    back = scipy.io.mmread(path).toarray()
    assert np.allclose(back, A.to_dense(), atol=1e-14)
