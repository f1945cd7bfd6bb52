"""Complex sparse kernels: CSR storage, matvec, direct LU, BiCGStab.

CSR canonicalization and the solver kernels are delegated to scipy/SuperLU;
this module pins down the contracts the rest of the package relies on
(canonical storage, permutation bookkeeping with reverse Cuthill-McKee
pre-ordering, explicit singularity detection, residual histories).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

__all__ = [
    "CsrMatrix",
    "LuFactorization",
    "SingularMatrixError",
    "BicgstabResult",
    "spmv",
    "lu_factor",
    "lu_solve",
    "bicgstab",
    "rcm_permutation",
    "save_matrix_market",
    "load_matrix_market",
]


class SingularMatrixError(RuntimeError):
    """LU factorization hit an (effectively) zero pivot."""


class CsrMatrix:
    """Sparse matrix in canonical CSR form.

    Canonical means: monotone row pointer, column indices sorted and unique
    within each row, no explicitly stored zeros. Instances are immutable;
    arithmetic returns new matrices.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, copy=True)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        m.data.flags.writeable = False
        m.indices.flags.writeable = False
        m.indptr.flags.writeable = False
        self._m = m

    @classmethod
    def from_coo(cls, rows, cols, values, shape):
        return cls(sp.coo_matrix((values, (rows, cols)), shape=shape))

    @classmethod
    def from_dense(cls, array):
        return cls(sp.csr_matrix(np.asarray(array)))

    @classmethod
    def identity(cls, n, dtype=float):
        return cls(sp.identity(n, dtype=dtype, format="csr"))

    @classmethod
    def zeros(cls, shape, dtype=float):
        return cls(sp.csr_matrix(shape, dtype=dtype))

    # -- storage ------------------------------------------------------------

    @property
    def row_ptr(self):
        return self._m.indptr

    @property
    def col_idx(self):
        return self._m.indices

    @property
    def values(self):
        return self._m.data

    @property
    def nrows(self):
        return self._m.shape[0]

    @property
    def ncols(self):
        return self._m.shape[1]

    @property
    def shape(self):
        return self._m.shape

    @property
    def nnz(self):
        return self._m.nnz

    @property
    def dtype(self):
        return self._m.dtype

    # -- arithmetic ---------------------------------------------------------

    def __matmul__(self, x):
        return spmv(self, x)

    def __add__(self, other):
        return CsrMatrix(self._m + other._m)

    def __sub__(self, other):
        return CsrMatrix(self._m - other._m)

    def __mul__(self, scalar):
        return CsrMatrix(self._m * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return CsrMatrix(-self._m)

    @property
    def H(self):
        """Conjugate transpose."""
        return CsrMatrix(self._m.conjugate().transpose())

    def real(self):
        return CsrMatrix(self._m.real)

    def astype(self, dtype):
        return CsrMatrix(self._m.astype(dtype))

    def diagonal(self):
        return self._m.diagonal()

    def submatrix(self, rows, cols):
        return CsrMatrix(self._m[np.asarray(rows)][:, np.asarray(cols)])

    def to_dense(self):
        return self._m.toarray()

    def max_abs(self):
        return float(np.abs(self._m.data).max()) if self._m.nnz else 0.0

    def hermitian_defect(self):
        """max |A - A*| entry; 0 for Hermitian matrices."""
        d = self._m - self._m.conjugate().transpose()
        return float(np.abs(d.data).max()) if d.nnz else 0.0

    def __repr__(self):
        return (f"CsrMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}, "
                f"dtype={self.dtype})")


def spmv(A, x):
    """Sparse matrix-vector product y = A x (single CSR pass)."""
    x = np.asarray(x)
    if x.shape[0] != A.ncols:
        raise ValueError(f"dimension mismatch: matrix is {A.nrows}x{A.ncols}, "
                         f"vector has length {x.shape[0]}")
    return A._m @ x


def rcm_permutation(A):
    """Reverse Cuthill-McKee ordering on the symmetrized sparsity pattern."""
    pattern = abs(A._m) + abs(A._m).T
    return np.asarray(reverse_cuthill_mckee(sp.csr_matrix(pattern),
                                            symmetric_mode=True), dtype=np.int64)


@dataclass
class LuFactorization:
    """Sparse LU with partial pivoting: A[row_perm][:, col_perm] = L U."""

    row_perm: np.ndarray
    col_perm: np.ndarray
    L: CsrMatrix
    U: CsrMatrix
    pivot_growth: float
    _superlu: object = field(repr=False)
    _pre_perm: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.L.nrows, self.U.ncols

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.shape[0]:
            raise ValueError("right-hand side length does not match factorization")
        r = self._pre_perm
        y = self._superlu.solve(np.ascontiguousarray(b[r]))
        x = np.empty_like(y)
        x[r] = y
        return x


def lu_factor(A, use_rcm=True, singular_rtol=1e-12):
    """Factor a square sparse matrix as P A Q = L U.

    A reverse Cuthill-McKee symmetric pre-ordering bounds fill for the banded
    systems produced by structured meshes; SuperLU then pivots rows within
    that ordering. Raises SingularMatrixError on an exact or near-exact zero
    pivot (threshold relative to max |A|).
    """
    if A.nrows != A.ncols:
        raise ValueError("matrix must be square")
    r = rcm_permutation(A) if use_rcm else np.arange(A.nrows, dtype=np.int64)
    permuted = A._m[r][:, r].tocsc()
    try:
        slu = spla.splu(permuted, permc_spec="NATURAL", diag_pivot_thresh=1.0,
                        options={"Equil": False})
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    max_a = A.max_abs()
    u_diag = np.abs(slu.U.diagonal())
    if max_a == 0.0 or u_diag.min() <= singular_rtol * max_a:
        raise SingularMatrixError(
            f"zero pivot beyond threshold: min |U_ii| = {u_diag.min():.3e}, "
            f"max |A| = {max_a:.3e}"
        )
    # SuperLU exposes perm_r with L U = A_permuted[argsort(perm_r)][:, perm_c].
    row_perm = r[np.argsort(slu.perm_r)]
    col_perm = r[np.argsort(slu.perm_c)]
    growth = float(np.abs(slu.U.data).max() / max_a) if slu.U.nnz else 0.0
    return LuFactorization(row_perm=row_perm, col_perm=col_perm,
                           L=CsrMatrix(slu.L), U=CsrMatrix(slu.U),
                           pivot_growth=growth, _superlu=slu, _pre_perm=r)


def lu_solve(factorization, b):
    """Solve A x = b given lu_factor(A)."""
    return factorization.solve(b)


@dataclass
class BicgstabResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual_history: list
    message: str = ""


def _as_preconditioner(preconditioner, n, dtype, A):
    if preconditioner is None:
        return None
    if preconditioner == "jacobi":
        d = A.diagonal()
        if np.any(d == 0):
            raise ValueError("jacobi preconditioner needs a nonzero diagonal")
        inv = 1.0 / d
        return spla.LinearOperator((n, n), matvec=lambda v: inv * v, dtype=dtype)
    if callable(preconditioner):
        return spla.LinearOperator((n, n), matvec=preconditioner, dtype=dtype)
    raise ValueError("preconditioner must be None, 'jacobi', or a callable")


def bicgstab(A, b, tol=1e-10, maxit=1000, preconditioner=None):
    """BiCGStab iteration; never raises on non-convergence.

    Returns a BicgstabResult carrying the best iterate seen and the residual
    norm after every iteration, so stalls and breakdowns stay diagnosable.
    """
    b = np.asarray(b)
    if A.nrows != A.ncols or b.shape[0] != A.nrows:
        raise ValueError("matrix must be square and match the right-hand side")
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return BicgstabResult(x=np.zeros_like(b, dtype=A.dtype), converged=True,
                              iterations=0, residual_history=[],
                              message="zero right-hand side")

    M = _as_preconditioner(preconditioner, A.nrows, A.dtype, A)
    history = []
    best = {"res": np.inf, "x": None}

    def callback(xk):
        res = float(np.linalg.norm(b - A._m @ xk))
        history.append(res)
        if res < best["res"]:
            best["res"] = res
            best["x"] = xk.copy()

    x, info = spla.bicgstab(A._m, b, rtol=tol, atol=0.0, maxiter=maxit,
                            M=M, callback=callback)
    final_res = float(np.linalg.norm(b - A._m @ x))
    if final_res < best["res"]:
        best["res"], best["x"] = final_res, x

    if info == 0:
        return BicgstabResult(x=x, converged=True, iterations=len(history),
                              residual_history=history)
    message = ("breakdown" if info < 0
               else f"no convergence within {maxit} iterations")
    return BicgstabResult(x=best["x"], converged=False,
                          iterations=len(history),
                          residual_history=history, message=message)


def save_matrix_market(A, path):
    scipy.io.mmwrite(str(path), A._m.tocoo())


def load_matrix_market(path):
    return CsrMatrix(sp.csr_matrix(scipy.io.mmread(str(path))))
