"""QP instances and the primal-dual iterate.

A problem is::

    min  1/2 x^T H x + p^T x
    s.t. l <= A x <= u,   a <= x <= b

Infinite bounds are allowed and generate no slack or multiplier. The four bound
families are indexed over finite entries only:

    la: rows with finite l      ua: rows with finite u
    lx: vars with finite a      ux: vars with finite b
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np

from .linops import CsrMatrix, SymmetricOperator

FAMILIES = ("la", "ua", "lx", "ux")


class ProblemError(ValueError):
    """A QP instance violates its invariants."""


@dataclass(frozen=True, eq=False)
class QpProblem:
    hessian: SymmetricOperator
    p: np.ndarray
    A: CsrMatrix
    l: np.ndarray
    u: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("p", "l", "u", "a", "b"):
            arr = np.array(getattr(self, name), dtype=np.float64).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    @property
    def n(self):
        return self.hessian.dim

    @property
    def m(self):
        return self.A.nrows

    def validate(self):
        n, m = self.n, self.m
        if self.A.ncols != n:
            raise ProblemError(f"constraint matrix has {self.A.ncols} columns, expected n={n}")
        for name, size in (("p", n), ("l", m), ("u", m), ("a", n), ("b", n)):
            arr = getattr(self, name)
            if arr.shape != (size,):
                raise ProblemError(f"{name} has length {arr.shape[0]}, expected {size}")
            if np.any(np.isnan(arr)):
                raise ProblemError(f"{name} contains NaN at index {int(np.flatnonzero(np.isnan(arr))[0])}")
        if not np.all(np.isfinite(self.p)):
            raise ProblemError("linear term must be finite")
        _check_bounds("l", "u", "row", self.l, self.u)
        _check_bounds("a", "b", "variable", self.a, self.b)
        if self.bound_count == 0:
            raise ProblemError("problem has no finite bound; at least one is required")

    def check_convexity(self, max_dense=500, tol=1e-10):
        """Dense eigenvalue check of H >= 0 for small problems; returns True when skipped."""
        if self.n > max_dense:
            return True
        evals = np.linalg.eigvalsh(self.hessian.to_dense())
        scale = max(1.0, float(np.abs(evals).max(initial=0.0)))
        if evals.size and evals.min() < -tol * scale:
            raise ProblemError(f"Hessian is not positive semidefinite (min eigenvalue {evals.min():.3e})")
        return True

    @cached_property
    def idx(self):
        """Finite-bound index arrays per family."""
        out = {
            "la": np.flatnonzero(np.isfinite(self.l)),
            "ua": np.flatnonzero(np.isfinite(self.u)),
            "lx": np.flatnonzero(np.isfinite(self.a)),
            "ux": np.flatnonzero(np.isfinite(self.b)),
        }
        for arr in out.values():
            arr.setflags(write=False)
        return out

    @cached_property
    def sizes(self):
        return {f: int(self.idx[f].shape[0]) for f in FAMILIES}

    @property
    def bound_count(self):
        return sum(int(np.isfinite(v).sum()) for v in (self.l, self.u, self.a, self.b))

    @property
    def bounded_variable_count(self):
        """Variables with at least one finite bound (the 'bound constraints' column of a summary)."""
        return int(np.count_nonzero(np.isfinite(self.a) | np.isfinite(self.b)))

    def objective(self, x):
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * float(x @ self.hessian.apply(x)) + float(self.p @ x)

    def summary(self):
        return {
            "variables": self.n,
            "linear_constraints": self.m,
            "bound_constraints": self.bounded_variable_count,
            "nnz": self.A.nnz,
            "finite_bounds": self.bound_count,
        }


def _check_bounds(lo_name, hi_name, what, lo, hi):
    if np.any(lo == np.inf):
        i = int(np.flatnonzero(lo == np.inf)[0])
        raise ProblemError(f"{what} {i}: lower bound {lo_name} is +inf")
    if np.any(hi == -np.inf):
        i = int(np.flatnonzero(hi == -np.inf)[0])
        raise ProblemError(f"{what} {i}: upper bound {hi_name} is -inf")
    bad = lo > hi
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ProblemError(f"{what} {i}: {lo_name}[{i}]={float(lo[i])!r} exceeds {hi_name}[{i}]={float(hi[i])!r}")
    eq = (lo == hi) & np.isfinite(lo)
    if np.any(eq):
        i = int(np.flatnonzero(eq)[0])
        raise ProblemError(f"{what} {i}: equal bounds {lo_name}={hi_name}={float(lo[i])!r} are not supported")


@dataclass
class IterateState:
    x: np.ndarray
    s_la: np.ndarray
    s_ua: np.ndarray
    s_lx: np.ndarray
    s_ux: np.ndarray
    lam_la: np.ndarray
    lam_ua: np.ndarray
    lam_lx: np.ndarray
    lam_ux: np.ndarray
    mu: float

    def slack(self, fam):
        return getattr(self, "s_" + fam)

    def lam(self, fam):
        return getattr(self, "lam_" + fam)

    def copy(self):
        return replace(self, **{f.name: getattr(self, f.name).copy() for f in fields(self) if f.name != "mu"})

    def min_interior(self):
        """Smallest slack or multiplier over all families (inf when there are none)."""
        vals = [v.min() for f in FAMILIES for v in (self.slack(f), self.lam(f)) if v.size]
        return float(min(vals)) if vals else np.inf

    def complementarity(self):
        total = sum(float(self.slack(f) @ self.lam(f)) for f in FAMILIES)
        count = sum(self.slack(f).size for f in FAMILIES)
        return total, count


@dataclass
class ResidualSet:
    r_h: np.ndarray
    r_la: np.ndarray
    r_ua: np.ndarray
    r_lx: np.ndarray
    r_ux: np.ndarray
    rc_la: np.ndarray
    rc_ua: np.ndarray
    rc_lx: np.ndarray
    rc_ux: np.ndarray

    def primal(self, fam):
        return getattr(self, "r_" + fam)

    def comp(self, fam):
        return getattr(self, "rc_" + fam)

    def arrays(self):
        return [getattr(self, f.name) for f in fields(self)]

    def norm_inf(self):
        return max((float(np.abs(v).max()) for v in self.arrays() if v.size), default=0.0)

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.arrays())


@dataclass
class StepDirection:
    dx: np.ndarray
    dlam_la: np.ndarray
    dlam_ua: np.ndarray
    dlam_lx: np.ndarray
    dlam_ux: np.ndarray
    ds_la: np.ndarray
    ds_ua: np.ndarray
    ds_lx: np.ndarray
    ds_ux: np.ndarray
    meta: dict = field(default_factory=dict)

    def dslack(self, fam):
        return getattr(self, "ds_" + fam)

    def dlam(self, fam):
        return getattr(self, "dlam_" + fam)
