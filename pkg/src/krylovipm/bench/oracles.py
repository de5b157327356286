"""Dense reference computations, independent of the matrix-free solver path.

Everything here assembles explicit matrices from the problem data and the
iterate, then uses LAPACK through numpy. Small instances only.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..problem import FAMILIES, IterateState, QpProblem


class OracleError(RuntimeError):
    pass


def _dense_parts(prob: QpProblem):
    A = prob.A.to_dense()
    idx = prob.idx
    eye = np.eye(prob.n)
    return {
        "H": prob.hessian.to_dense(),
        # constraint rows in ">= 0" orientation of each slack definition
        "J": {"la": A[idx["la"]], "ua": -A[idx["ua"]], "lx": eye[idx["lx"]], "ux": -eye[idx["ux"]]},
    }


def dense_residuals(prob: QpProblem, it: IterateState):
    """Residuals of the perturbed optimality conditions, from dense data."""
    parts = _dense_parts(prob)
    J, x, idx = parts["J"], it.x, prob.idx
    r_h = parts["H"] @ x + prob.p - sum(J[f].T @ it.lam(f) for f in FAMILIES)
    base = {"la": prob.l[idx["la"]], "ua": -prob.u[idx["ua"]], "lx": prob.a[idx["lx"]], "ux": -prob.b[idx["ux"]]}
    prim = {f: J[f] @ x - it.slack(f) - base[f] for f in FAMILIES}
    comp = {f: it.lam(f) * it.slack(f) - it.mu for f in FAMILIES}
    return r_h, prim, comp


def assemble_newton(prob: QpProblem, it: IterateState, residuals=None):
    """Full Newton matrix and right-hand side over (dx, dlam[4 families], ds[4 families]).

    The right-hand side comes from ``dense_residuals`` unless a ``ResidualSet`` is
    given. Near convergence the residuals are tiny differences of O(1) terms, so
    two evaluations disagree at the 1e-8 relative level; passing the solver's own
    residuals isolates the linear algebra being checked.
    """
    parts = _dense_parts(prob)
    J = parts["J"]
    n = prob.n
    sizes = [prob.sizes[f] for f in FAMILIES]
    nb = sum(sizes)
    dim = n + 2 * nb
    K = np.zeros((dim, dim))
    off = np.cumsum([0] + sizes)
    lam0, s0 = n, n + nb
    K[:n, :n] = parts["H"]
    for k, f in enumerate(FAMILIES):
        lam_cols = slice(lam0 + off[k], lam0 + off[k + 1])
        s_cols = slice(s0 + off[k], s0 + off[k + 1])
        K[:n, lam_cols] = -J[f].T
        # primal rows: J dx - ds = -r
        K[n + off[k]: n + off[k + 1], :n] = J[f]
        K[n + off[k]: n + off[k + 1], s_cols] = -np.eye(sizes[k])
        # complementarity rows: S dlam + Lam ds = -rc
        K[s0 + off[k]: s0 + off[k + 1], lam_cols] = np.diag(it.slack(f))
        K[s0 + off[k]: s0 + off[k + 1], s_cols] = np.diag(it.lam(f))
    if residuals is None:
        r_h, prim, comp = dense_residuals(prob, it)
    else:
        r_h = residuals.r_h
        prim = {f: residuals.primal(f) for f in FAMILIES}
        comp = {f: residuals.comp(f) for f in FAMILIES}
    rhs = -np.concatenate([r_h] + [prim[f] for f in FAMILIES] + [comp[f] for f in FAMILIES])
    return K, rhs


def _unpack_newton(prob, z):
    n = prob.n
    sizes = [prob.sizes[f] for f in FAMILIES]
    nb = sum(sizes)
    off = np.cumsum([0] + sizes)
    out = {"dx": z[:n]}
    for k, f in enumerate(FAMILIES):
        out["dlam_" + f] = z[n + off[k]: n + off[k + 1]]
        out["ds_" + f] = z[n + nb + off[k]: n + nb + off[k + 1]]
    return out


def dense_newton_oracle(prob: QpProblem, it: IterateState):
    """Solve the assembled full Newton system by LU with partial pivoting."""
    K, rhs = assemble_newton(prob, it)
    if K.shape[0] > 2000:
        raise OracleError("dense Newton assembly limited to small instances")
    try:
        z = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"assembled Newton matrix is singular: {exc}") from None
    return _unpack_newton(prob, z)


def newton_relative_residual(prob: QpProblem, it: IterateState, step, residuals=None) -> float:
    """``||K z - rhs|| / ||rhs||`` for a step given as a StepDirection or dict."""
    K, rhs = assemble_newton(prob, it, residuals)
    get = (lambda k: step[k]) if isinstance(step, dict) else (lambda k: getattr(step, k))
    z = np.concatenate([get("dx")] + [get("dlam_" + f) for f in FAMILIES] + [get("ds_" + f) for f in FAMILIES])
    denom = np.linalg.norm(rhs)
    return float(np.linalg.norm(K @ z - rhs) / (denom if denom > 0 else 1.0))


def dense_reduced_blocks(prob: QpProblem, it: IterateState):
    """(Q, B, D) of the reduced 2x2 system, built from dense data."""
    A = prob.A.to_dense()
    idx = prob.idx
    Q = prob.hessian.to_dense().copy()
    Q[idx["lx"], idx["lx"]] += it.lam_lx / it.s_lx
    Q[idx["ux"], idx["ux"]] += it.lam_ux / it.s_ux
    B = np.vstack([A[idx["la"]], -A[idx["ua"]]])
    D = np.concatenate([it.s_la / it.lam_la, it.s_ua / it.lam_ua])
    return Q, B, D


def dense_reduced_system(prob, it):
    """Unsymmetric reduced matrix ``[[Q, -B^T], [B, D]]``."""
    Q, B, D = dense_reduced_blocks(prob, it)
    return np.block([[Q, -B.T], [B, np.diag(D)]])


def dense_doubly_augmented(prob, it):
    """Symmetric matrix ``[[Q + 2 B^T D^-1 B, B^T], [B, D]]``."""
    Q, B, D = dense_reduced_blocks(prob, it)
    return np.block([[Q + 2.0 * B.T @ (B / D[:, None]), B.T], [B, np.diag(D)]])


def dense_augmented_rhs(prob, it, r1, r2):
    _, B, D = dense_reduced_blocks(prob, it)
    return np.concatenate([r1 + 2.0 * B.T @ (r2 / D), r2])


# --------------------------------------------------------------------------- active sets


@dataclass
class OracleSolution:
    x: np.ndarray
    active: list  # (family, index) pairs
    multipliers: dict  # family -> multiplier vector over that family's finite bounds
    objective: float
    kkt_error: float
    mode: str = ""
    info: dict = field(default_factory=dict)


def _inequalities(prob: QpProblem):
    """All finite bounds as rows of ``C x >= d`` with their (family, position) labels."""
    parts = _dense_parts(prob)
    idx = prob.idx
    rhs = {"la": prob.l[idx["la"]], "ua": -prob.u[idx["ua"]], "lx": prob.a[idx["lx"]], "ux": -prob.b[idx["ux"]]}
    C = np.vstack([parts["J"][f] for f in FAMILIES]) if prob.bound_count else np.zeros((0, prob.n))
    d = np.concatenate([rhs[f] for f in FAMILIES])
    labels = [(f, i) for f in FAMILIES for i in range(prob.sizes[f])]
    return parts["H"], C, d, labels


def _solve_eq(H, p, C, d, W):
    """Equality-constrained QP on working set W; returns (x, u) or None if singular."""
    n = H.shape[0]
    k = len(W)
    CW = C[W]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = -CW.T
    K[n:, :n] = CW
    rhs = np.concatenate([-p, d[W]])
    try:
        z = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(z)):
        return None
    return z[:n], z[n:]


def _kkt_error(H, p, C, d, x, u_full):
    scale = max(1.0, float(np.abs(p).max(initial=0.0)), float(np.abs(H).max(initial=0.0)) * float(np.abs(x).max(initial=1.0)))
    stat = H @ x + p - C.T @ u_full
    slack = C @ x - d
    errs = [
        float(np.abs(stat).max(initial=0.0)) / scale,
        float(np.maximum(-slack, 0.0).max(initial=0.0)) / max(1.0, float(np.abs(d).max(initial=0.0))),
        float(np.maximum(-u_full, 0.0).max(initial=0.0)) / scale,
        float(np.abs(u_full * slack).max(initial=0.0)) / scale,
    ]
    return max(errs)


def _package(prob, H, p, C, d, labels, W, x, u, mode, info):
    u_full = np.zeros(C.shape[0])
    u_full[W] = u
    mult = {}
    pos = 0
    for f in FAMILIES:
        mult[f] = u_full[pos:pos + prob.sizes[f]].copy()
        pos += prob.sizes[f]
    return OracleSolution(
        x=x,
        active=[labels[i] for i in sorted(W)],
        multipliers=mult,
        objective=0.5 * float(x @ H @ x) + float(p @ x),
        kkt_error=_kkt_error(H, p, C, d, x, u_full),
        mode=mode,
        info=info,
    )


def candidate_count(prob: QpProblem):
    """Number of working sets the exhaustive mode would visit."""
    lo = np.isfinite(np.concatenate([prob.l, prob.a]))
    hi = np.isfinite(np.concatenate([prob.u, prob.b]))
    count = 1
    for k in (1 + lo.astype(int) + hi.astype(int)).tolist():
        count *= k  # exact integer; 3**(m+n) overflows int64 quickly
    return count


def _enumerate(prob, H, p, C, d, labels, tol):
    """Visit every working set (each constraint inactive / at lower / at upper)."""
    idx = prob.idx
    m, n = prob.m, prob.n
    # map each constraint (row or variable) to its lower / upper inequality positions
    off = np.cumsum([0] + [prob.sizes[f] for f in FAMILIES])
    lower_pos = {}
    upper_pos = {}
    for k, (fl, fu, count) in enumerate((("la", "ua", m), ("lx", "ux", n))):
        lo_map = {int(j): off[FAMILIES.index(fl)] + t for t, j in enumerate(idx[fl])}
        hi_map = {int(j): off[FAMILIES.index(fu)] + t for t, j in enumerate(idx[fu])}
        for j in range(count):
            lower_pos[(k, j)] = lo_map.get(j)
            upper_pos[(k, j)] = hi_map.get(j)
    choices = []
    for key in lower_pos:
        opts = [None] + [pos for pos in (lower_pos[key], upper_pos[key]) if pos is not None]
        choices.append(opts)
    best = None
    visited = 0
    for combo in itertools.product(*choices):
        W = [int(c) for c in combo if c is not None]
        visited += 1
        if len(W) > n:
            continue
        sol = _solve_eq(H, p, C, d, W)
        if sol is None:
            continue
        x, u = sol
        if np.any(C @ x - d < -tol * max(1.0, float(np.abs(d).max(initial=0.0)))):
            continue
        if np.any(u < -tol):
            continue
        obj = 0.5 * float(x @ H @ x) + float(p @ x)
        if best is None or obj < best[0] - 1e-14 * max(1.0, abs(obj)):
            best = (obj, W, x, u)
    if best is None:
        raise OracleError("no feasible working set: problem infeasible")
    return best[1], best[2], best[3], {"visited": visited}


def _dual_active_set(H, p, C, d, tol, max_iter=10000):
    """Goldfarb-Idnani dual active-set method with dense re-solves (H positive definite)."""
    n = H.shape[0]
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise OracleError("active-set oracle requires a positive definite Hessian") from None

    def hinv(v):
        return np.linalg.solve(L.T, np.linalg.solve(L, v))

    x = -hinv(p)
    W: list[int] = []
    u = np.zeros(0)
    scale = max(1.0, float(np.abs(d).max(initial=0.0)))
    steps = 0
    while True:
        slack = C @ x - d
        viol = np.where(np.isin(np.arange(C.shape[0]), W), np.inf, slack)
        q = int(np.argmin(viol)) if viol.size else -1
        if q < 0 or viol[q] >= -tol * scale:
            return W, x, u, {"steps": steps}
        nplus = C[q]
        uq = 0.0
        while True:
            steps += 1
            if steps > max_iter:
                raise OracleError("dual active-set iteration limit reached")
            hn = hinv(nplus)
            if W:
                N = C[W].T
                HN = hinv(N)
                r = np.linalg.solve(N.T @ HN, N.T @ hn)
                z = hn - HN @ r
            else:
                r = np.zeros(0)
                z = hn
            pos = r > 1e-14
            if np.any(pos):
                ratios = np.where(pos, u / np.where(pos, r, 1.0), np.inf)
                drop = int(np.argmin(ratios))
                t1 = float(ratios[drop])
            else:
                drop, t1 = -1, np.inf
            zn = float(z @ nplus)
            t2 = -float(C[q] @ x - d[q]) / zn if np.linalg.norm(z) > 1e-12 * max(1.0, np.linalg.norm(hn)) and zn > 0 else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise OracleError("problem infeasible (dual unbounded)")
            if np.isfinite(t2):
                x = x + t * z
            u = u - t * r
            uq += t
            if t2 <= t1:
                W.append(q)
                u = np.append(u, uq)
                break
            del W[drop]
            u = np.delete(u, drop)


def active_set_oracle(prob: QpProblem, mode="auto", enumerate_limit=4096, tol=1e-9) -> OracleSolution:
    """Reference solution by active-set search, certified by exact KKT checks.

    ``mode="enumerate"`` visits every working set; ``"dual"`` runs a dual
    active-set method; ``"auto"`` enumerates when there are at most
    ``enumerate_limit`` working sets. The final working set is re-solved as an
    equality-constrained QP and its KKT error is reported.
    """
    H, C, d, labels = _inequalities(prob)
    p = prob.p.copy()
    if mode == "auto":
        mode = "enumerate" if candidate_count(prob) <= enumerate_limit else "dual"
    if mode == "enumerate":
        W, x, u, info = _enumerate(prob, H, p, C, d, labels, tol)
    elif mode == "dual":
        W, x, u, info = _dual_active_set(H, p, C, d, tol)
        sol = _solve_eq(H, p, C, d, W)
        if sol is not None:
            x, u = sol
    else:
        raise ValueError(f"unknown oracle mode {mode!r}")
    return _package(prob, H, p, C, d, labels, list(W), x, u, mode, info)
