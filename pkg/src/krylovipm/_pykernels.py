"""numpy implementations of the hot loops, used when the compiled module is unavailable.

Signatures mirror ``_ckernels``. SpMV and the weighted column sums accumulate each
row sequentially (``np.bincount`` adds in index order), matching the compiled loops.
"""
import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(indptr.shape[0] - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x, out):
    nrows = indptr.shape[0] - 1
    if data.shape[0] == 0:
        out[:] = 0.0
        return
    out[:] = np.bincount(_row_ids(indptr), weights=data * x[indices], minlength=nrows)


def csr_weighted_colsq(t_indptr, t_indices, t_data, w, out):
    ncols = t_indptr.shape[0] - 1
    if t_data.shape[0] == 0:
        out[:] = 0.0
        return
    terms = (t_data * t_data) * w[t_indices]
    out[:] = np.bincount(_row_ids(t_indptr), weights=terms, minlength=ncols)


def dot(x, y):
    return float(np.dot(x, y))


def bfgs_matvec(h0, ut, w, x, tmp, out):
    np.dot(ut, x, out=tmp)
    tmp *= w
    np.multiply(h0, x, out=out)
    out += ut.T @ tmp
