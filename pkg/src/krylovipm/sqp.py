"""SQP driver producing compact-BFGS QP subproblems solved by the interior point method.

Problems are ``min f(x)  s.t.  g(x) <= 0,  a <= x <= b``. Multipliers ``lam >= 0``
belong to ``g <= 0``, so the Lagrangian gradient is ``grad f + J^T lam``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ipm import IpmConfig, ipm_solve
from .linops import BfgsOperator, CsrMatrix
from .problem import QpProblem

log = logging.getLogger(__name__)


@dataclass
class NlpProblem:
    """``objective(x) -> (f, grad)``; ``constraints(x) -> (g, jac)`` with jac of shape m x n."""

    objective: Callable
    a: np.ndarray
    b: np.ndarray
    constraints: Callable | None = None
    m: int = 0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.a.shape != self.b.shape:
            raise ValueError("variable bounds differ in length")
        if np.any(self.a > self.b):
            raise ValueError("variable lower bound exceeds upper bound")

    @property
    def n(self):
        return self.a.shape[0]

    def evaluate(self, x):
        f, grad = self.objective(x)
        grad = np.asarray(grad, dtype=np.float64)
        if self.m:
            g, jac = self.constraints(x)
            g = np.asarray(g, dtype=np.float64).reshape(self.m)
            jac = jac if isinstance(jac, CsrMatrix) else np.asarray(jac, dtype=np.float64).reshape(self.m, -1)
        else:
            g, jac = np.zeros(0), np.zeros((0, self.n))
        if not (np.isfinite(f) and np.all(np.isfinite(grad)) and np.all(np.isfinite(g))):
            raise FloatingPointError("callback returned non-finite values")
        return float(f), grad, g, jac


@dataclass
class SqpState:
    x: np.ndarray
    lam: np.ndarray
    bfgs: BfgsOperator
    k: int = 0
    accepted_updates: int = 0


@dataclass(frozen=True)
class SqpConfig:
    max_iterations: int = 200
    step_tol: float = 1e-7
    kkt_tol: float = 1e-6
    ipm: IpmConfig = IpmConfig()
    h0_scale: float | None = None  # None: max(1, |f(x0)|)
    h0_diag: tuple | None = None  # explicit initial Hessian diagonal
    damping: float = 0.2
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_alpha: float = 1e-10
    penalty_margin: float = 0.1


@dataclass
class SqpResult:
    x: np.ndarray
    lam: np.ndarray
    status: str  # "converged" | "iteration-limit" | "failed"
    iterations: int
    stats: list = field(default_factory=list)
    message: str = ""
    state: SqpState | None = None

    @property
    def converged(self):
        return self.status == "converged"


def build_subproblem(state: SqpState, prob: NlpProblem, evaluation=None) -> QpProblem:
    """QP in the step d: Hessian = current BFGS operator, linearized constraints, shifted box."""
    _, grad, g, jac = evaluation if evaluation is not None else prob.evaluate(state.x)
    A = jac if isinstance(jac, CsrMatrix) else CsrMatrix.from_dense(np.atleast_2d(jac).reshape(prob.m, prob.n))
    return QpProblem(
        hessian=state.bfgs,
        p=grad,
        A=A,
        l=np.full(prob.m, -np.inf),
        u=-g,
        a=prob.a - state.x,
        b=prob.b - state.x,
    )


def bfgs_update(bfgs: BfgsOperator, s, y, damping=0.2) -> BfgsOperator:
    """Powell-damped BFGS update appended as two columns of the compact form.

    Returns the input operator unchanged when ``s^T H s <= 0``.
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    hs = bfgs.apply(s)
    shs = float(s @ hs)
    if not shs > 0 or not np.isfinite(shs):
        log.warning("BFGS update skipped: s^T H s = %r", shs)
        return bfgs
    sy = float(s @ y)
    if sy >= damping * shs:
        ytil = y
    else:
        theta = (1.0 - damping) * shs / (shs - sy)
        ytil = theta * y + (1.0 - theta) * hs
    yts = float(ytil @ s)
    return bfgs.with_columns(np.column_stack([hs, ytil]), [-1.0 / shs, 1.0 / yts])


def _merit(f, g, rho):
    return f + rho * float(np.maximum(g, 0.0).sum())


def _jac_t(jac, v):
    if isinstance(jac, CsrMatrix):
        return jac.apply_transpose(v)
    return jac.T @ v


def sqp_solve(prob: NlpProblem, x0, cfg: SqpConfig = SqpConfig(), trace=None, inspect=None) -> SqpResult:
    """Line-search SQP. ``trace`` gets one record per iteration, ``inspect(k, state, subproblem)``
    sees every QP before it is solved."""
    x = np.clip(np.asarray(x0, dtype=np.float64), prob.a, prob.b)
    f, grad, g, jac = prob.evaluate(x)
    if cfg.h0_diag is not None:
        h0 = np.asarray(cfg.h0_diag, dtype=np.float64)
    else:
        scale = cfg.h0_scale if cfg.h0_scale is not None else max(1.0, abs(f))
        h0 = np.full(prob.n, scale)
    state = SqpState(x=x, lam=np.zeros(prob.m), bfgs=BfgsOperator(h0))
    rho = 0.0
    stats = []

    def finish(status, message=""):
        return SqpResult(state.x, state.lam, status, state.k, stats, message, state)

    for k in range(cfg.max_iterations):
        state.k = k
        evaluation = (f, grad, g, jac)
        sub = build_subproblem(state, prob, evaluation)
        if inspect is not None:
            inspect(k, state, sub)
        t0 = time.perf_counter()
        qp = ipm_solve(sub, cfg.ipm)
        qp_time = time.perf_counter() - t0
        record = {
            "sqp_iteration": k,
            "qp_time": qp_time,
            "ipm_iterations": qp.iterations,
            "cg_iterations": qp.cg_iterations,
            "qp_status": qp.status,
            "update_columns": state.bfgs.column_count,
        }
        if qp.status == "error":
            stats.append(record)
            return finish("failed", f"subproblem {k} failed: {qp.message}")
        d = qp.x
        lam_qp = qp.state.lam_ua.copy()
        z = np.zeros(prob.n)
        z[sub.idx["lx"]] -= qp.state.lam_lx
        z[sub.idx["ux"]] += qp.state.lam_ux
        stationarity = grad + _jac_t(jac, lam_qp) + z
        kkt = max(
            float(np.abs(stationarity).max(initial=0.0)),
            float(np.maximum(g, 0.0).max(initial=0.0)),
            float(np.abs(lam_qp * g).max(initial=0.0)),
        )
        dnorm = float(np.abs(d).max(initial=0.0))
        record.update(step_inf=dnorm, kkt=kkt, objective=f)
        if dnorm <= cfg.step_tol and kkt <= cfg.kkt_tol:
            state.lam = lam_qp
            record.update(alpha=0.0, merit=_merit(f, g, rho), penalty=rho)
            stats.append(record)
            if trace:
                trace(record)
            state.k = k + 1
            return finish("converged")

        rho = max(rho, float(np.abs(lam_qp).max(initial=0.0)) + cfg.penalty_margin)
        phi0 = _merit(f, g, rho)
        slope = float(grad @ d) - rho * float(np.maximum(g, 0.0).sum())
        alpha = 1.0
        while True:
            x_new = np.clip(state.x + alpha * d, prob.a, prob.b)
            try:
                f_new, grad_new, g_new, jac_new = prob.evaluate(x_new)
                phi = _merit(f_new, g_new, rho)
                ok = phi <= phi0 + cfg.armijo * alpha * slope if slope < 0 else phi <= phi0
            except FloatingPointError:
                ok = False
            if ok:
                break
            alpha *= cfg.backtrack
            if alpha < cfg.min_alpha:
                record.update(alpha=0.0, merit=phi0, penalty=rho)
                stats.append(record)
                return finish("failed", f"line search failed at iteration {k}")

        lam_new = state.lam + alpha * (lam_qp - state.lam)
        s = x_new - state.x
        y = (grad_new + _jac_t(jac_new, lam_new)) - (grad + _jac_t(jac, lam_new))
        if np.any(s != 0):
            before = state.bfgs
            state.bfgs = bfgs_update(state.bfgs, s, y, cfg.damping)
            if state.bfgs is not before:
                state.accepted_updates += 1
        state.x, state.lam = x_new, lam_new
        f, grad, g, jac = f_new, grad_new, g_new, jac_new
        record.update(alpha=alpha, merit=phi, merit_before=phi0, penalty=rho)
        stats.append(record)
        if trace:
            trace(record)
    state.k = cfg.max_iterations
    return finish("iteration-limit", f"no convergence within {cfg.max_iterations} iterations")
