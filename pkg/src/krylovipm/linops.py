"""Linear operators used by the solver.

Every matrix the solver touches is reached through ``apply`` (and ``apply_transpose``
for rectangular CSR) plus ``diagonal``. Nothing here assembles a dense matrix except
``to_dense``, which exists for verification oracles.
"""
from __future__ import annotations

import threading
from abc import ABC, abstractmethod

import numpy as np

from . import kernels


class DimensionError(ValueError):
    """An operand does not have the shape an operator requires."""


def _as_vector(x, n, what="x"):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n:
        raise DimensionError(f"{what} has shape {x.shape}, expected ({n},)")
    return x


def _out_buffer(out, n):
    if out is None:
        return np.empty(n)
    if out.shape != (n,) or out.dtype != np.float64 or not out.flags.c_contiguous:
        raise DimensionError(f"output buffer must be a contiguous float64 vector of length {n}")
    return out


class SymmetricOperator(ABC):
    """An n x n symmetric operator known only through products and its diagonal."""

    dim: int

    @abstractmethod
    def apply(self, x, out=None):
        """Return ``op @ x``, writing into ``out`` when given."""

    @abstractmethod
    def diagonal(self):
        """Return the n diagonal entries."""

    def to_dense(self):
        eye = np.eye(self.dim)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.dim)])

    def __matmul__(self, x):
        return self.apply(x)


class CsrMatrix:
    """Compressed sparse row matrix with an explicit transpose built at construction.

    Column indices must be strictly increasing within each row (no duplicates).
    ``apply_transpose`` multiplies by the stored transpose, so both products are
    row-wise gathers with a fixed accumulation order.
    """

    def __init__(self, nrows, ncols, indptr, indices, data):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        if self.nrows < 0 or self.ncols < 0:
            raise DimensionError("matrix dimensions must be nonnegative")
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self._validate()
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self.data.setflags(write=False)
        self._build_transpose()

    def _validate(self):
        indptr, indices = self.indptr, self.indices
        if indptr.shape != (self.nrows + 1,):
            raise DimensionError(f"row offsets must have length {self.nrows + 1}, got {indptr.shape[0]}")
        nnz = indices.shape[0]
        if self.data.shape != (nnz,):
            raise DimensionError("column indices and values differ in length")
        if indptr[0] != 0 or indptr[-1] != nnz:
            raise DimensionError(f"row offsets must start at 0 and end at nnz={nnz}")
        if np.any(np.diff(indptr) < 0):
            raise DimensionError("row offsets must be nondecreasing")
        if nnz:
            if indices.min() < 0 or indices.max() >= self.ncols:
                raise DimensionError(f"column index out of range [0, {self.ncols})")
            step = np.diff(indices)
            row_start = np.zeros(nnz, dtype=bool)
            row_start[indptr[1:-1][indptr[1:-1] < nnz]] = True
            bad = (step <= 0) & ~row_start[1:]
            if np.any(bad):
                pos = int(np.flatnonzero(bad)[0]) + 1
                row = int(np.searchsorted(indptr, pos, side="right") - 1)
                raise DimensionError(f"row {row}: column indices must be strictly increasing")
        if not np.all(np.isfinite(self.data)):
            raise DimensionError("matrix values must be finite")

    def _build_transpose(self):
        rows = np.repeat(np.arange(self.nrows, dtype=np.int64), np.diff(self.indptr))
        order = np.lexsort((rows, self.indices))
        counts = np.bincount(self.indices, minlength=self.ncols)
        t_indptr = np.zeros(self.ncols + 1, dtype=np.int64)
        np.cumsum(counts, out=t_indptr[1:])
        self.t_indptr = t_indptr
        self.t_indices = np.ascontiguousarray(rows[order])
        self.t_data = np.ascontiguousarray(self.data[order])
        for arr in (self.t_indptr, self.t_indices, self.t_data):
            arr.setflags(write=False)

    @classmethod
    def from_dense(cls, dense):
        dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
        nrows, ncols = dense.shape
        mask = dense != 0.0
        indptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(mask.sum(axis=1), out=indptr[1:])
        rows, cols = np.nonzero(mask)
        return cls(nrows, ncols, indptr, cols, dense[rows, cols])

    @classmethod
    def from_triplets(cls, nrows, ncols, rows, cols, vals):
        """Build from coordinate triplets; duplicate coordinates are rejected."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup):
                i = int(np.flatnonzero(dup)[0])
                raise DimensionError(f"duplicate entry at ({rows[i]}, {cols[i]})")
        if rows.size and (rows.min() < 0 or rows.max() >= nrows):
            raise DimensionError(f"row index out of range [0, {nrows})")
        indptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=nrows), out=indptr[1:])
        return cls(nrows, ncols, indptr, cols, vals)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return int(self.indices.shape[0])

    def apply(self, x, out=None):
        x = _as_vector(x, self.ncols)
        out = _out_buffer(out, self.nrows)
        kernels.csr_matvec(self.indptr, self.indices, self.data, x, out)
        return out

    def apply_transpose(self, y, out=None):
        y = _as_vector(y, self.nrows, "y")
        out = _out_buffer(out, self.ncols)
        kernels.csr_matvec(self.t_indptr, self.t_indices, self.t_data, y, out)
        return out

    def weighted_colsq(self, w, out=None):
        """Return ``sum_i w[i] * A[i, j]**2`` for every column j."""
        w = _as_vector(w, self.nrows, "w")
        out = _out_buffer(out, self.ncols)
        kernels.csr_weighted_colsq(self.t_indptr, self.t_indices, self.t_data, w, out)
        return out

    def diagonal(self):
        n = min(self.nrows, self.ncols)
        diag = np.zeros(n)
        rows = np.repeat(np.arange(self.nrows), np.diff(self.indptr))
        on_diag = rows == self.indices
        diag[rows[on_diag]] = self.data[on_diag]
        return diag

    def transpose(self):
        return CsrMatrix(self.ncols, self.nrows, self.t_indptr, self.t_indices, self.t_data)

    def is_symmetric(self):
        """Exact (bitwise) symmetry: the stored transpose equals the matrix."""
        return (
            self.nrows == self.ncols
            and np.array_equal(self.indptr, self.t_indptr)
            and np.array_equal(self.indices, self.t_indices)
            and np.array_equal(self.data, self.t_data)
        )

    def to_dense(self):
        dense = np.zeros((self.nrows, self.ncols))
        rows = np.repeat(np.arange(self.nrows), np.diff(self.indptr))
        dense[rows, self.indices] = self.data
        return dense

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None

    def __repr__(self):
        return f"CsrMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"


class SymmetricCsrOperator(SymmetricOperator):
    """A square CSR matrix that is exactly symmetric, used as a Hessian."""

    def __init__(self, matrix: CsrMatrix):
        if not matrix.is_symmetric():
            raise ValueError("CSR Hessian must be square and exactly symmetric")
        self.matrix = matrix
        self.dim = matrix.nrows
        self._diag = matrix.diagonal()
        self._diag.setflags(write=False)

    def apply(self, x, out=None):
        return self.matrix.apply(x, out)

    def diagonal(self):
        return self._diag

    def to_dense(self):
        return self.matrix.to_dense()


class DiagonalOperator(SymmetricOperator):
    def __init__(self, entries):
        entries = np.array(entries, dtype=np.float64).ravel()
        if not np.all(np.isfinite(entries)):
            raise ValueError("diagonal entries must be finite")
        entries.setflags(write=False)
        self.entries = entries
        self.dim = entries.shape[0]

    def apply(self, x, out=None):
        x = _as_vector(x, self.dim)
        out = _out_buffer(out, self.dim)
        np.multiply(self.entries, x, out=out)
        return out

    def diagonal(self):
        return self.entries

    def to_dense(self):
        return np.diag(self.entries)


class BfgsOperator(SymmetricOperator):
    """Compact quasi-Newton Hessian ``H0 + U diag(W) U^T`` with diagonal H0.

    ``update_matrix`` is n x c. A BFGS update contributes two columns, so after k
    updates c = 2k; any column count is accepted. The product is evaluated as
    ``H0 x + U (W (U^T x))``.
    """

    def __init__(self, h0_diag, update_matrix=None, weights=None):
        h0 = np.array(h0_diag, dtype=np.float64).ravel()
        n = h0.shape[0]
        if n == 0:
            raise DimensionError("BFGS operator needs at least one variable")
        if not np.all(np.isfinite(h0)) or np.any(h0 <= 0):
            raise ValueError("initial Hessian diagonal must be positive and finite")
        if update_matrix is None:
            update_matrix = np.zeros((n, 0))
            weights = np.zeros(0)
        u = np.asarray(update_matrix, dtype=np.float64)
        w = np.array(weights, dtype=np.float64).ravel()
        if u.ndim != 2 or u.shape[0] != n:
            raise DimensionError(f"update matrix must be {n} x 2k, got {u.shape}")
        if u.shape[1] != w.shape[0]:
            raise DimensionError("update matrix column count must equal the number of weights")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(w))) or np.any(w == 0):
            raise ValueError("update vectors must be finite and weights finite and nonzero")
        self.h0_diag = h0
        self.dim = n
        # column store: row c of _ut is column c of U
        self._ut = np.ascontiguousarray(u.T)
        self.weights = w
        for arr in (self.h0_diag, self._ut, self.weights):
            arr.setflags(write=False)
        self._scratch = threading.local()
        self._scratch.buf = np.empty(w.shape[0])
        self._diag = None
        self._diag_lock = threading.Lock()

    @property
    def column_count(self):
        return self.weights.shape[0]

    @property
    def pair_count(self):
        """Complete update pairs (column_count // 2)."""
        return self.weights.shape[0] // 2

    @property
    def update_matrix(self):
        return self._ut.T

    def _tmp(self):
        buf = getattr(self._scratch, "buf", None)
        if buf is None:
            buf = self._scratch.buf = np.empty(self.weights.shape[0])
        return buf

    def apply(self, x, out=None):
        x = _as_vector(x, self.dim)
        out = _out_buffer(out, self.dim)
        kernels.bfgs_matvec(self.h0_diag, self._ut, self.weights, x, self._tmp(), out)
        return out

    def diagonal(self):
        if self._diag is None:
            with self._diag_lock:
                if self._diag is None:
                    diag = self.h0_diag.copy()
                    for col, wc in zip(self._ut, self.weights):
                        diag += wc * (col * col)
                    diag.setflags(write=False)
                    self._diag = diag
        return self._diag

    def with_columns(self, columns, weights):
        """Return a new operator with extra update columns appended (``columns`` is n x j)."""
        columns = np.asarray(columns, dtype=np.float64).reshape(self.dim, -1)
        return BfgsOperator(
            self.h0_diag,
            np.hstack([self.update_matrix, columns]),
            np.concatenate([self.weights, np.asarray(weights, dtype=np.float64).ravel()]),
        )

    def to_dense(self):
        u = self.update_matrix
        return np.diag(self.h0_diag) + (u * self.weights) @ u.T


def quadratic_form(op: SymmetricOperator, x):
    return kernels.dot(np.ascontiguousarray(x, dtype=np.float64), op.apply(x))
