# Compiled hot loops. Every reduction runs left to right in index order so
# repeated calls are bit-identical.
from libc.stdint cimport int64_t


def csr_matvec(const int64_t[::1] indptr, const int64_t[::1] indices,
               const double[::1] data, const double[::1] x, double[::1] out):
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t i
    cdef int64_t jj
    cdef double acc
    with nogil:
        for i in range(nrows):
            acc = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                acc = acc + data[jj] * x[indices[jj]]
            out[i] = acc


def csr_weighted_colsq(const int64_t[::1] t_indptr, const int64_t[::1] t_indices,
                       const double[::1] t_data, const double[::1] w, double[::1] out):
    """out[j] = sum_i w[i] * A[i, j]**2, walking the rows of the stored transpose."""
    cdef Py_ssize_t ncols = t_indptr.shape[0] - 1
    cdef Py_ssize_t j
    cdef int64_t ii
    cdef double acc, a
    with nogil:
        for j in range(ncols):
            acc = 0.0
            for ii in range(t_indptr[j], t_indptr[j + 1]):
                a = t_data[ii]
                acc = acc + (a * a) * w[t_indices[ii]]
            out[j] = acc


def dot(const double[::1] x, const double[::1] y):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double acc = 0.0
    with nogil:
        for i in range(n):
            acc = acc + x[i] * y[i]
    return acc


def bfgs_matvec(const double[::1] h0, const double[:, ::1] ut, const double[::1] w,
                const double[::1] x, double[::1] tmp, double[::1] out):
    """out = h0*x + U (w * (U^T x)) with U stored column-major as the rows of ``ut``."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t ncol = ut.shape[0]
    cdef Py_ssize_t i, c
    cdef double acc, t
    with nogil:
        for c in range(ncol):
            acc = 0.0
            for i in range(n):
                acc = acc + ut[c, i] * x[i]
            tmp[c] = w[c] * acc
        for i in range(n):
            out[i] = h0[i] * x[i]
        for c in range(ncol):
            t = tmp[c]
            for i in range(n):
                out[i] = out[i] + ut[c, i] * t
