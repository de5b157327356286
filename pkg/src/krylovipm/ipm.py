"""Primal-dual interior point method for convex QPs.

Each iteration solves the doubly augmented KKT system with Jacobi-PCG, expands
the reduced solution to a full Newton direction (refined against the full
Newton residual when the reduction lost accuracy), takes fraction-to-boundary
steps (one length for x and slacks, one for multipliers), refreshes the KKT
diagonals and recomputes residuals. When ``||r||_inf < mu`` the barrier
parameter is divided by ``mu_divisor``, or the solve returns if already
``mu <= mu_tol``.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .kkt import InteriorError, KktOperator, iterate_diagonals, reduce_residuals
from .pcg import PcgBreakdown, PcgConfig, pcg_solve
from .problem import FAMILIES, IterateState, QpProblem, ResidualSet, StepDirection

__all__ = [
    "IpmConfig", "SolveResult", "compute_residuals", "initial_point", "recover_step",
    "step_lengths", "ipm_solve", "QpProblem", "IterateState", "ResidualSet", "StepDirection",
]


@dataclass(frozen=True)
class IpmConfig:
    mu0_scale: float = 0.1
    mu_tol: float = 1e-8
    mu_divisor: float = 10.0
    tau: float = 0.995
    max_iterations: int = 100
    pcg_rtol: float | None = None  # None: min(cap, 0.1 mu), floored below
    pcg_rtol_cap: float = 1e-4  # looser early solves can derail the outer iteration
    pcg_rtol_floor: float = 1e-10
    pcg_atol: float = 1e-12
    pcg_max_iterations: int | None = None  # None: 10 * KKT dimension
    pcg_warm_start: bool = False
    refinement_steps: int = 2  # full-system correction solves per iteration, applied only when needed

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not self.mu_divisor > 1:
            raise ValueError("mu_divisor must exceed 1")
        if self.mu_tol <= 0 or self.mu0_scale <= 0:
            raise ValueError("mu_tol and mu0_scale must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.refinement_steps < 0:
            raise ValueError("refinement_steps must be nonnegative")
        if self.pcg_rtol is not None and not 0 < self.pcg_rtol < 1:
            raise ValueError("pcg_rtol must lie in (0, 1)")

    def pcg_config(self, mu):
        if self.pcg_rtol is not None:
            rtol = self.pcg_rtol
        else:
            rtol = max(self.pcg_rtol_floor, min(self.pcg_rtol_cap, 0.1 * mu))
        return PcgConfig(rtol, self.pcg_atol, self.pcg_max_iterations)

    def as_dict(self):
        return asdict(self)


@dataclass
class SolveResult:
    x: np.ndarray
    state: IterateState
    status: str  # "converged" | "iteration-limit" | "error"
    iterations: int
    cg_iterations: int
    residual_norm: float
    mu: float
    objective: float
    timings: dict = field(default_factory=dict)
    cg_per_iteration: list = field(default_factory=list)
    message: str = ""

    @property
    def converged(self):
        return self.status == "converged"


def compute_residuals(prob: QpProblem, it: IterateState) -> ResidualSet:
    idx = prob.idx
    ax = prob.A.apply(it.x)
    y = np.zeros(prob.m)
    y[idx["la"]] = it.lam_la
    y[idx["ua"]] -= it.lam_ua
    r_h = prob.hessian.apply(it.x) + prob.p - prob.A.apply_transpose(y)
    r_h[idx["lx"]] -= it.lam_lx
    r_h[idx["ux"]] += it.lam_ux
    x = it.x
    return ResidualSet(
        r_h=r_h,
        r_la=ax[idx["la"]] - it.s_la - prob.l[idx["la"]],
        r_ua=prob.u[idx["ua"]] - ax[idx["ua"]] - it.s_ua,
        r_lx=x[idx["lx"]] - it.s_lx - prob.a[idx["lx"]],
        r_ux=prob.b[idx["ux"]] - x[idx["ux"]] - it.s_ux,
        rc_la=it.lam_la * it.s_la - it.mu,
        rc_ua=it.lam_ua * it.s_ua - it.mu,
        rc_lx=it.lam_lx * it.s_lx - it.mu,
        rc_ux=it.lam_ux * it.s_ux - it.mu,
    )


def initial_point(prob: QpProblem, cfg: IpmConfig = IpmConfig()) -> IterateState:
    a, b = prob.a, prob.b
    lo = np.full(prob.n, -np.inf)
    hi = np.full(prob.n, np.inf)
    both = np.isfinite(a) & np.isfinite(b)
    delta = np.minimum(1.0, (b[both] - a[both]) / 4.0)
    lo[both] = a[both] + delta
    hi[both] = b[both] - delta
    only_a = np.isfinite(a) & ~both
    only_b = np.isfinite(b) & ~both
    lo[only_a] = a[only_a] + 1.0
    hi[only_b] = b[only_b] - 1.0
    x = np.clip(np.zeros(prob.n), lo, hi)

    idx = prob.idx
    ax = prob.A.apply(x)
    gaps = {
        "la": ax[idx["la"]] - prob.l[idx["la"]],
        "ua": prob.u[idx["ua"]] - ax[idx["ua"]],
        "lx": x[idx["lx"]] - a[idx["lx"]],
        "ux": b[idx["ux"]] - x[idx["ux"]],
    }
    slacks = {f: np.maximum(gaps[f], 1.0) for f in FAMILIES}
    lams = {f: np.ones(prob.sizes[f]) for f in FAMILIES}
    total = sum(float(slacks[f] @ lams[f]) for f in FAMILIES)
    mu0 = cfg.mu0_scale * total / prob.bound_count
    return IterateState(
        x=x, mu=mu0,
        **{"s_" + f: slacks[f] for f in FAMILIES},
        **{"lam_" + f: lams[f] for f in FAMILIES},
    )


def recover_step(prob: QpProblem, dx, dlam_a, res: ResidualSet, it: IterateState) -> StepDirection:
    """Expand the reduced solution ``(dx, dlam_A)`` to a full Newton direction."""
    idx = prob.idx
    m_l = prob.sizes["la"]
    adx = prob.A.apply(dx)
    ds_lx = dx[idx["lx"]] + res.r_lx
    ds_ux = res.r_ux - dx[idx["ux"]]
    for fam in ("lx", "ux"):
        if np.any(it.slack(fam) <= 0):
            raise InteriorError(f"zero slack in family {fam}")
    return StepDirection(
        dx=dx,
        dlam_la=dlam_a[:m_l],
        dlam_ua=dlam_a[m_l:],
        dlam_lx=-(it.lam_lx * ds_lx + res.rc_lx) / it.s_lx,
        dlam_ux=-(it.lam_ux * ds_ux + res.rc_ux) / it.s_ux,
        ds_la=adx[idx["la"]] + res.r_la,
        ds_ua=res.r_ua - adx[idx["ua"]],
        ds_lx=ds_lx,
        ds_ux=ds_ux,
    )


def newton_residual(prob: QpProblem, it: IterateState, res: ResidualSet, d: StepDirection) -> ResidualSet:
    """Residual of the full Newton equations at step ``d`` (zero for an exact step)."""
    idx = prob.idx
    y = np.zeros(prob.m)
    y[idx["la"]] = d.dlam_la
    y[idx["ua"]] -= d.dlam_ua
    e_h = prob.hessian.apply(d.dx) - prob.A.apply_transpose(y) + res.r_h
    e_h[idx["lx"]] -= d.dlam_lx
    e_h[idx["ux"]] += d.dlam_ux
    adx = prob.A.apply(d.dx)
    dx = d.dx
    return ResidualSet(
        r_h=e_h,
        r_la=adx[idx["la"]] - d.ds_la + res.r_la,
        r_ua=-adx[idx["ua"]] - d.ds_ua + res.r_ua,
        r_lx=dx[idx["lx"]] - d.ds_lx + res.r_lx,
        r_ux=-dx[idx["ux"]] - d.ds_ux + res.r_ux,
        **{"rc_" + f: it.lam(f) * d.dslack(f) + it.slack(f) * d.dlam(f) + res.comp(f) for f in FAMILIES},
    )


def _norm2(res: ResidualSet):
    return float(np.sqrt(sum(float(v @ v) for v in res.arrays())))


def _add_steps(a: StepDirection, b: StepDirection) -> StepDirection:
    return StepDirection(*(getattr(a, k) + getattr(b, k) for k in _STEP_FIELDS))


_STEP_FIELDS = ("dx", *("dlam_" + f for f in FAMILIES), *("ds_" + f for f in FAMILIES))


def _solve_step(prob, kkt, precond, res, it, pcg_cfg, warm=None):
    """One reduced solve expanded to a full direction; returns (step, pcg report, reduced solution)."""
    rhs = kkt.aug_rhs(reduce_residuals(res, it, prob))
    sol, report = pcg_solve(kkt, precond, rhs, warm, pcg_cfg)
    return recover_step(prob, sol[:prob.n], sol[prob.n:], res, it), report, sol, rhs


def refine_step(prob, kkt, precond, res, it, step, pcg_cfg, max_steps):
    """Iterative refinement on the full Newton system.

    Eliminating D^-1 amplifies reduced-solve errors once slacks or multipliers
    approach zero. The Newton residual of ``step`` is fed back through the same
    reduced solve until it falls below the PCG tolerance relative to the
    right-hand side. Returns ``(step, cg_iterations, rounds)``.
    """
    target = pcg_cfg.rel_tolerance * _norm2(res)
    cg = rounds = 0
    for _ in range(max_steps):
        err = newton_residual(prob, it, res, step)
        if _norm2(err) <= target:
            break
        corr, report, _, _ = _solve_step(prob, kkt, precond, err, it, pcg_cfg)
        step = _add_steps(step, corr)
        cg += report.iterations
        rounds += 1
    return step, cg, rounds


def _max_step(v, dv, tau):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return tau * float(np.min(-v[neg] / dv[neg]))


def step_lengths(it: IterateState, d: StepDirection, tau: float):
    alpha_x = min([1.0] + [_max_step(it.slack(f), d.dslack(f), tau) for f in FAMILIES])
    alpha_l = min([1.0] + [_max_step(it.lam(f), d.dlam(f), tau) for f in FAMILIES])
    return alpha_x, alpha_l


def _take_step(it: IterateState, d: StepDirection, alpha_x, alpha_l):
    new = it.copy()
    new.x += alpha_x * d.dx
    for f in FAMILIES:
        new.slack(f)[...] += alpha_x * d.dslack(f)
        new.lam(f)[...] += alpha_l * d.dlam(f)
    return new


def ipm_solve(prob: QpProblem, cfg: IpmConfig = IpmConfig(), trace=None, inspect=None) -> SolveResult:
    """Run the interior point method.

    ``trace`` receives one dict per iteration. ``inspect`` (verification hook) is
    called as ``inspect(iteration, state, residuals, rhs, dx, dlam_a, step, report)``
    before the step is taken; ``step`` is the refined direction and ``report`` the
    first PCG solve of the iteration.
    """
    timings = dict.fromkeys(("setup", "precond", "solve", "step", "update", "residuals"), 0.0)
    clock = time.perf_counter

    t0 = clock()
    it = initial_point(prob, cfg)
    kkt = KktOperator.from_iterate(prob, it)
    res = compute_residuals(prob, it)
    timings["setup"] += clock() - t0

    best, best_norm = it, res.norm_inf()
    cg_total = 0
    cg_hist = []
    warm = None
    status, message = "iteration-limit", ""
    iteration = 0

    for iteration in range(1, cfg.max_iterations + 1):
        try:
            t0 = clock()
            precond = kkt.jacobi_diagonal()
            pcg_cfg = cfg.pcg_config(it.mu)
            t1 = clock()
            step, report, sol, rhs = _solve_step(prob, kkt, precond, res, it, pcg_cfg,
                                                 warm if cfg.pcg_warm_start else None)
            step, cg_refine, rounds = refine_step(prob, kkt, precond, res, it, step, pcg_cfg,
                                                  cfg.refinement_steps)
            t2 = clock()
        except (PcgBreakdown, InteriorError) as exc:
            status, message = "error", str(exc)
            break
        warm = sol
        cg_iter = report.iterations + cg_refine
        cg_total += cg_iter
        cg_hist.append(cg_iter)
        if inspect is not None:
            inspect(iteration, it, res, rhs, step.dx, sol[prob.n:], step, report)

        alpha_x, alpha_l = step_lengths(it, step, cfg.tau)
        it = _take_step(it, step, alpha_x, alpha_l)
        t4 = clock()
        try:
            kkt.update_iterate_diagonals(*iterate_diagonals(prob, it))
        except InteriorError as exc:
            status, message = "error", str(exc)
            break
        t5 = clock()
        res = compute_residuals(prob, it)
        rnorm = res.norm_inf()
        t6 = clock()
        for key, dt in zip(("precond", "solve", "step", "update", "residuals"),
                           (t1 - t0, t2 - t1, t4 - t2, t5 - t4, t6 - t5)):
            timings[key] += dt

        if not res.is_finite():
            status, message = "error", "non-finite residual"
            break
        if rnorm <= best_norm:
            best, best_norm = it, rnorm

        mu_before = it.mu
        done = False
        if rnorm < it.mu:
            if it.mu <= cfg.mu_tol:
                done = True
            else:
                it = replace(it, mu=it.mu / cfg.mu_divisor)
                # residuals carry mu in the complementarity rows
                res = compute_residuals(prob, it)
        if trace is not None:
            trace({
                "iteration": iteration,
                "mu": mu_before,
                "mu_next": it.mu,
                "residual_inf": rnorm,
                "cg_iterations": cg_iter,
                "refinements": rounds,
                "cg_relative_residual": report.final_relative_residual,
                "cg_converged": report.converged,
                "alpha_x": alpha_x,
                "alpha_lambda": alpha_l,
                "min_interior": it.min_interior(),
            })
        if done:
            status = "converged"
            best, best_norm = it, rnorm
            break
    else:
        message = f"no convergence within {cfg.max_iterations} iterations"

    final = best if status != "converged" else it
    return SolveResult(
        x=final.x.copy(),
        state=final,
        status=status,
        iterations=iteration,
        cg_iterations=cg_total,
        residual_norm=best_norm,
        mu=final.mu,
        objective=prob.objective(final.x),
        timings=timings,
        cg_per_iteration=cg_hist,
        message=message,
    )
