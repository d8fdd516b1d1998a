"""Compressed sparse row matrices and direct factorizations.

Thin, deterministic layer over scipy: CSR storage with canonical
(sorted, duplicate-free) structure, an SPD path via reverse
Cuthill-McKee reordering plus banded Cholesky, and a general path via
sparse LU.  Problem sizes here are desk scale, so a fill-reducing
ordering stronger than RCM is unnecessary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite
from scipy.sparse.csgraph import reverse_cuthill_mckee


@dataclass
class CsrMatrix:
    """CSR matrix with strictly increasing column indices per row."""

    nrows: int
    ncols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_scipy(cls, mat) -> "CsrMatrix":
        mat = sp.csr_matrix(mat)
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(mat.shape[0], mat.shape[1], mat.indptr, mat.indices, mat.data)

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals) -> "CsrMatrix":
        coo = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
        return cls.from_scipy(coo.tocsr())

    @classmethod
    def from_dense(cls, arr) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(arr, dtype=float)))

    @classmethod
    def identity(cls, n) -> "CsrMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @classmethod
    def diagonal(cls, values) -> "CsrMatrix":
        return cls.from_scipy(sp.diags(np.asarray(values, dtype=float), format="csr"))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data, self.indices, self.indptr), shape=(self.nrows, self.ncols)
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return len(self.data)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[0] != self.ncols:
            raise ValueError(f"dimension mismatch: {self.shape} @ {x.shape}")
        return self.to_scipy() @ x

    def transpose(self) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.to_scipy().T.tocsr())

    @property
    def T(self) -> "CsrMatrix":
        return self.transpose()

    def diag(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def submatrix(self, rows, cols) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.to_scipy()[np.ix_(rows, cols)])

    def __add__(self, other: "CsrMatrix") -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.to_scipy() + other.to_scipy())

    def __sub__(self, other: "CsrMatrix") -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.to_scipy() - other.to_scipy())

    def scaled(self, alpha: float) -> "CsrMatrix":
        return CsrMatrix(
            self.nrows, self.ncols, self.indptr, self.indices, alpha * self.data
        )

    def write_matrix_market(self, path) -> None:
        """Export in Matrix Market coordinate format."""
        mmwrite(str(path), self.to_scipy())


class CooBuilder:
    """Accumulates (row, col, value) triplets before CSR conversion."""

    def __init__(self, nrows: int, ncols: int):
        self.nrows = nrows
        self.ncols = ncols
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, vals) -> None:
        self._rows.append(np.asarray(rows).ravel())
        self._cols.append(np.asarray(cols).ravel())
        self._vals.append(np.asarray(vals, dtype=float).ravel())

    def build(self) -> CsrMatrix:
        if not self._rows:
            return CsrMatrix.from_scipy(sp.csr_matrix((self.nrows, self.ncols)))
        return CsrMatrix.from_coo(
            self.nrows,
            self.ncols,
            np.concatenate(self._rows),
            np.concatenate(self._cols),
            np.concatenate(self._vals),
        )


def spmv(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product y = A x."""
    return A.matvec(x)


class FactorKind(Enum):
    SPD_CHOLESKY = "spd_cholesky"
    GENERAL_LU = "general_lu"


@dataclass
class Factorization:
    """Reusable direct factorization; solve() applies the inverse."""

    kind: FactorKind
    n: int
    _solve: object = field(repr=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: factor of size {self.n}, rhs {b.shape}")
        return self._solve(b)


def factorize(A: CsrMatrix, kind: FactorKind = FactorKind.GENERAL_LU) -> Factorization:
    """Factor a square CsrMatrix for repeated solves.

    SPD_CHOLESKY permutes with reverse Cuthill-McKee and runs a banded
    Cholesky; a nonpositive pivot raises ``numpy.linalg.LinAlgError``.
    GENERAL_LU uses sparse LU and raises on exactly singular input.
    """
    kind = FactorKind(kind)
    if A.nrows != A.ncols:
        raise ValueError("only square matrices can be factorized")
    n = A.nrows
    if n == 0:
        return Factorization(kind, 0, lambda b: np.zeros_like(b, dtype=float))

    if kind is FactorKind.GENERAL_LU:
        try:
            lu = spla.splu(A.to_scipy().tocsc())
        except RuntimeError as err:
            raise np.linalg.LinAlgError(f"sparse LU failed: {err}") from err
        return Factorization(kind, n, lu.solve)

    mat = A.to_scipy()
    perm = reverse_cuthill_mckee(mat, symmetric_mode=True)
    pmat = mat[perm][:, perm].tocoo()
    rows, cols, vals = pmat.row, pmat.col, pmat.data
    lower = rows >= cols
    rows, cols, vals = rows[lower], cols[lower], vals[lower]
    bandwidth = int((rows - cols).max()) if len(rows) else 0
    ab = np.zeros((bandwidth + 1, n))
    ab[rows - cols, cols] = vals
    try:
        cb = sla.cholesky_banded(ab, lower=True)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(
            f"matrix is not symmetric positive definite: {err}"
        ) from err

    def solve_spd(b: np.ndarray) -> np.ndarray:
        y = sla.cho_solve_banded((cb, True), b[perm])
        x = np.empty_like(y)
        x[perm] = y
        return x

    return Factorization(kind, n, solve_spd)


def solve(F: Factorization, b: np.ndarray) -> np.ndarray:
    """Apply a factorization: x = A^{-1} b."""
    return F.solve(b)
