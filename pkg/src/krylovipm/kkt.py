"""The doubly augmented KKT operator and the reductions feeding it.

With ``B = [A_L; -A_U]`` (rows of A carrying a finite lower / upper bound) and
``D = diag(S_la/L_la, S_ua/L_ua)`` the reduced Newton system is::

    [ Q  -B^T ] [dx  ]   [r1]
    [ B   D   ] [dlam] = [r2],    Q = H + S_lx^-1 L_lx + S_ux^-1 L_ux

and the symmetric positive definite system actually solved is::

    [ Q + 2 B^T D^-1 B   B^T ] [dx  ]   [r1 + 2 B^T D^-1 r2]
    [ B                  D   ] [dlam] = [r2                ]

B is never stored: one CSR copy of A (with its transpose) serves both blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import CsrMatrix, DimensionError, SymmetricOperator
from .problem import IterateState, QpProblem, ResidualSet


class InteriorError(ArithmeticError):
    """A slack, multiplier or diagonal that must be strictly positive is not."""


@dataclass
class ReducedRhs:
    r1: np.ndarray
    r2: np.ndarray


def _positive(name, v):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise InteriorError(f"{name} must be strictly positive and finite")
    return v


class KktOperator(SymmetricOperator):
    def __init__(self, hessian: SymmetricOperator, A: CsrMatrix, lower_rows, upper_rows,
                 q_extra_diag, d_lower, d_upper):
        self.hessian = hessian
        self.A = A
        self.n = hessian.dim
        if A.ncols != self.n:
            raise DimensionError("constraint matrix and Hessian disagree on n")
        self.lower_rows = np.asarray(lower_rows, dtype=np.int64)
        self.upper_rows = np.asarray(upper_rows, dtype=np.int64)
        self.m_l = self.lower_rows.shape[0]
        self.m_u = self.upper_rows.shape[0]
        self.dim = self.n + self.m_l + self.m_u
        # scratch for the product chain, reused on every apply
        self._av = np.empty(A.nrows)
        self._w = np.empty(A.nrows)
        self._atw = np.empty(self.n)
        self._wdiag = np.empty(A.nrows)
        self._colsq = np.empty(self.n)
        self.q_extra_diag = None
        self.update_iterate_diagonals(q_extra_diag, d_lower, d_upper)

    @classmethod
    def from_iterate(cls, prob: QpProblem, it: IterateState):
        q, dl, du = iterate_diagonals(prob, it)
        return cls(prob.hessian, prob.A, prob.idx["la"], prob.idx["ua"], q, dl, du)

    def update_iterate_diagonals(self, q_extra_diag, d_lower, d_upper):
        q = np.ascontiguousarray(q_extra_diag, dtype=np.float64)
        if q.shape != (self.n,) or not np.all(np.isfinite(q)) or np.any(q < 0):
            raise InteriorError("Hessian-block diagonal term must be nonnegative, finite, length n")
        dl = _positive("d_lower", d_lower)
        du = _positive("d_upper", d_upper)
        if dl.shape != (self.m_l,) or du.shape != (self.m_u,):
            raise DimensionError("D blocks do not match the bounded row counts")
        self.q_extra_diag = q
        self.d_lower = dl
        self.d_upper = du
        self._two_dl_inv = 2.0 / dl
        self._two_du_inv = 2.0 / du

    def split(self, v):
        n, ml = self.n, self.m_l
        return v[:n], v[n:n + ml], v[n + ml:]

    def apply(self, v, out=None):
        v = np.ascontiguousarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise DimensionError(f"KKT operand has shape {v.shape}, expected ({self.dim},)")
        if out is None:
            out = np.empty(self.dim)
        vx, vl, vu = self.split(v)
        top, midl, midu = self.split(out)
        L, U = self.lower_rows, self.upper_rows

        av = self.A.apply(vx, self._av)
        # w = 2 D^-1 B vx + vlam, scattered back to rows of A with the signs of B^T
        w = self._w
        w[:] = 0.0
        avl = av[L]
        avu = av[U]
        w[L] = self._two_dl_inv * avl + vl
        w[U] -= vu - self._two_du_inv * avu
        self.A.apply_transpose(w, self._atw)

        self.hessian.apply(vx, top)
        top += self.q_extra_diag * vx
        top += self._atw
        np.multiply(self.d_lower, vl, out=midl)
        midl += avl
        np.multiply(self.d_upper, vu, out=midu)
        midu -= avu
        return out

    def jacobi_diagonal(self):
        wd = self._wdiag
        wd[:] = 0.0
        wd[self.lower_rows] = self._two_dl_inv
        wd[self.upper_rows] += self._two_du_inv
        colsq = self.A.weighted_colsq(wd, self._colsq)
        top = self.hessian.diagonal() + self.q_extra_diag + colsq
        diag = np.concatenate([top, self.d_lower, self.d_upper])
        if not np.all(diag > 0) or not np.all(np.isfinite(diag)):
            j = int(np.flatnonzero(~(diag > 0) | ~np.isfinite(diag))[0])
            raise InteriorError(f"KKT diagonal entry {j} is {diag[j]!r}; interior violated")
        return diag

    def diagonal(self):
        return self.jacobi_diagonal()

    def aug_rhs(self, rhs: ReducedRhs):
        r2 = np.ascontiguousarray(rhs.r2, dtype=np.float64)
        r1 = np.ascontiguousarray(rhs.r1, dtype=np.float64)
        if r1.shape != (self.n,) or r2.shape != (self.m_l + self.m_u,):
            raise DimensionError("reduced right-hand side does not match the operator")
        r2l, r2u = r2[:self.m_l], r2[self.m_l:]
        w = np.zeros(self.A.nrows)
        w[self.lower_rows] = self._two_dl_inv * r2l
        w[self.upper_rows] -= self._two_du_inv * r2u
        top = r1 + self.A.apply_transpose(w)
        return np.concatenate([top, r2])

    def to_dense(self):
        """Assembled matrix, for verification only."""
        ad = self.A.to_dense()
        bmat = np.vstack([ad[self.lower_rows], -ad[self.upper_rows]])
        dvec = np.concatenate([self.d_lower, self.d_upper])
        q = self.hessian.to_dense() + np.diag(self.q_extra_diag)
        top_left = q + 2.0 * bmat.T @ (bmat / dvec[:, None])
        return np.block([[top_left, bmat.T], [bmat, np.diag(dvec)]])


def iterate_diagonals(prob: QpProblem, it: IterateState):
    """Return (q_extra_diag, d_lower, d_upper) for the current iterate."""
    q = np.zeros(prob.n)
    np.add.at(q, prob.idx["lx"], _ratio(it.lam_lx, it.s_lx, "lx"))
    np.add.at(q, prob.idx["ux"], _ratio(it.lam_ux, it.s_ux, "ux"))
    return q, _ratio(it.s_la, it.lam_la, "la"), _ratio(it.s_ua, it.lam_ua, "ua")


def _ratio(num, den, fam):
    if np.any(den <= 0) or np.any(num <= 0):
        raise InteriorError(f"nonpositive slack or multiplier in family {fam}")
    return num / den


def reduce_residuals(res: ResidualSet, it: IterateState, prob: QpProblem) -> ReducedRhs:
    """Eliminate slacks and bound multipliers from the Newton system."""
    for fam in ("la", "ua", "lx", "ux"):
        if np.any(it.slack(fam) <= 0) or np.any(it.lam(fam) <= 0):
            raise InteriorError(f"zero or negative slack/multiplier in family {fam}")
    r1 = -res.r_h.copy()
    np.subtract.at(r1, prob.idx["lx"], (it.lam_lx * res.r_lx + res.rc_lx) / it.s_lx)
    np.add.at(r1, prob.idx["ux"], (it.lam_ux * res.r_ux + res.rc_ux) / it.s_ux)
    r2 = np.concatenate([
        -res.r_la - res.rc_la / it.lam_la,
        -res.r_ua - res.rc_ua / it.lam_ua,
    ])
    return ReducedRhs(r1, r2)
