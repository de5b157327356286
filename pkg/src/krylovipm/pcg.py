"""Jacobi-preconditioned conjugate gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


class PcgBreakdown(ArithmeticError):
    """p^T A p <= 0: the operator is not positive definite along a search direction."""

    def __init__(self, iteration, curvature):
        super().__init__(f"PCG breakdown at iteration {iteration}: p^T A p = {curvature!r}")
        self.iteration = iteration
        self.curvature = curvature


@dataclass(frozen=True)
class PcgConfig:
    rel_tolerance: float = 1e-8
    abs_tolerance: float = 0.0
    max_iterations: int | None = None  # None: 10 * dimension

    def __post_init__(self):
        if not 0 < self.rel_tolerance < 1:
            raise ValueError("rel_tolerance must lie in (0, 1)")
        if self.abs_tolerance < 0:
            raise ValueError("abs_tolerance must be nonnegative")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class PcgReport:
    iterations: int
    final_relative_residual: float
    converged: bool


def _norm(v):
    return math.sqrt(kernels.dot(v, v))


def pcg_solve(op, precond_diag, b, x0=None, cfg=PcgConfig()):
    """Solve ``op x = b`` for symmetric positive definite ``op``.

    ``precond_diag`` holds the diagonal M; the preconditioner applied is M^-1.
    Returns ``(x, PcgReport)``. Raises :class:`PcgBreakdown` on nonpositive curvature.
    """
    b = np.ascontiguousarray(b, dtype=np.float64)
    n = b.shape[0]
    diag = np.ascontiguousarray(precond_diag, dtype=np.float64)
    if diag.shape != (n,) or not np.all(diag > 0) or not np.all(np.isfinite(diag)):
        raise ValueError("preconditioner diagonal must be positive, finite and match b")
    minv = 1.0 / diag
    max_iter = cfg.max_iterations or 10 * n

    bnorm = _norm(b)
    tol = max(cfg.rel_tolerance * bnorm, cfg.abs_tolerance)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - op.apply(x) if x0 is not None else b.copy()
    rnorm = _norm(r)

    def report(it, res, ok):
        return PcgReport(it, res / bnorm if bnorm > 0 else res, ok)

    if rnorm <= tol:
        return x, report(0, rnorm, True)

    z = minv * r
    p = z.copy()
    rz = kernels.dot(r, z)
    ap = np.empty(n)
    it = 0
    while it < max_iter:
        op.apply(p, ap)
        curv = kernels.dot(p, ap)
        if not curv > 0:
            raise PcgBreakdown(it + 1, curv)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * ap
        it += 1
        rnorm = _norm(r)
        if rnorm <= tol:
            # confirm with the true residual before claiming convergence
            r = b - op.apply(x)
            rnorm = _norm(r)
            if rnorm <= tol:
                return x, report(it, rnorm, True)
            z = minv * r
            p = z.copy()
            rz = kernels.dot(r, z)
            continue
        z = minv * r
        rz_new = kernels.dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        p *= beta
        p += z
    true_norm = _norm(b - op.apply(x))
    return x, report(it, true_norm, true_norm <= tol)
