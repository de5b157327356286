"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

The lines are printed inline (visible with ``-s``) and repeated in the terminal
summary of every pytest run.
"""
import contextlib
import subprocess
import sys
import time

import numpy as np
import pytest

from krylovipm.bench.generator import GeneratorSpec, badly_scaled_operator, generate, preset
from krylovipm.bench.oracles import (active_set_oracle, dense_augmented_rhs, dense_doubly_augmented,
                                     dense_reduced_system, newton_relative_residual)
from krylovipm.bench.suite import SuiteConfig, run_suite
from krylovipm.bench.workloads import dose_nlp
from krylovipm.ipm import IpmConfig, compute_residuals, ipm_solve
from krylovipm.kkt import KktOperator, reduce_residuals
from krylovipm.linops import BfgsOperator, CsrMatrix, DiagonalOperator
from krylovipm.pcg import pcg_solve
from krylovipm.probio import save_problem
from krylovipm.problem import QpProblem
from krylovipm.sqp import NlpProblem, SqpConfig, sqp_solve

from .conftest import random_interior

RESULTS = []
KINDS = ("diag", "csr", "bfgs")
PATTERNS = ("two-sided", "lower", "mixed", "nonneg")


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        RESULTS.append(("FAIL", name))
        print(f"FAIL  {name}")
        raise
    RESULTS.append(("PASS", name))
    print(f"PASS  {name}")


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def instrumented(prob, cfg, limit=None):
    """Run a solve and keep (iterate, residuals, step, pcg report) per iteration."""
    seen = []

    def inspect(i, it, res, rhs, dx, dlam, step, report):
        if limit is None or len(seen) < limit:
            seen.append((it.copy(), res, step, report))

    result = ipm_solve(prob, cfg, inspect=inspect)
    return result, seen


def test_oracle_equivalence():
    with criterion("oracle equivalence: 100 QPs, |dx|inf <= 1e-5, rel obj <= 1e-8, < 30 s"):
        t0 = time.perf_counter()
        worst_x = worst_obj = 0.0
        for seed in range(100):
            prob = generate(GeneratorSpec(seed=seed, n=2 + seed % 11, m=seed % 9, density=0.5,
                                          hessian=KINDS[seed % 3], k=1 + seed % 3,
                                          bounds=PATTERNS[(seed // 3) % 4]))
            res = ipm_solve(prob)
            ref = active_set_oracle(prob)
            assert res.converged, seed
            worst_x = max(worst_x, float(np.abs(res.x - ref.x).max()))
            worst_obj = max(worst_obj, abs(res.objective - ref.objective) / max(1.0, abs(ref.objective)))
        elapsed = time.perf_counter() - t0
        print(f"      max |x - x*| = {worst_x:.2e}, max rel obj = {worst_obj:.2e}, {elapsed:.1f} s")
        assert worst_x <= 1e-5 and worst_obj <= 1e-8 and elapsed < 30


def test_newton_back_substitution():
    with criterion("back-substitution: 50 iterations over 10 seeds, Newton residual <= 1e-8"):
        cfg = IpmConfig(pcg_rtol=1e-12, pcg_atol=0.0)
        worst, count = 0.0, 0
        for seed in range(10):
            prob = generate(GeneratorSpec(seed=seed, n=40, m=30, density=0.2, hessian=KINDS[seed % 3], k=3,
                                          bounds=PATTERNS[seed % 4]))
            assert prob.n + prob.sizes["la"] + prob.sizes["ua"] <= 200
            _, seen = instrumented(prob, cfg, limit=5)
            for it, res, step, _ in seen:
                worst = max(worst, newton_relative_residual(prob, it, step, res))
                count += 1
        print(f"      {count} iterations, worst relative residual {worst:.2e}")
        assert count == 50 and worst <= 1e-8


def test_reduced_and_doubly_augmented_agree():
    with criterion("reduced vs doubly augmented: 20 interior iterates agree to 1e-10"):
        worst = 0.0
        for seed in range(20):
            prob = generate(GeneratorSpec(seed=seed, n=25, m=15, density=0.3, hessian=KINDS[seed % 3], k=3,
                                          bounds=PATTERNS[seed % 4]))
            it = random_interior(prob, np.random.default_rng(seed))
            K = KktOperator.from_iterate(prob, it)
            rhs = reduce_residuals(compute_residuals(prob, it), it, prob)
            assert rel(K.aug_rhs(rhs), dense_augmented_rhs(prob, it, rhs.r1, rhs.r2)) <= 1e-13
            z6 = np.linalg.solve(dense_reduced_system(prob, it), np.concatenate([rhs.r1, rhs.r2]))
            z7 = np.linalg.solve(dense_doubly_augmented(prob, it), K.aug_rhs(rhs))
            worst = max(worst, rel(z7, z6))
        print(f"      worst relative difference {worst:.2e}")
        assert worst <= 1e-10


def test_spd_certificate():
    with criterion("SPD certificate: Cholesky at every iterate, symmetry <= 1e-11 on 1000 pairs"):
        iterates = 0
        worst = 0.0
        for seed in range(6):
            prob = generate(GeneratorSpec(seed=seed, n=30, m=20, density=0.3, hessian=KINDS[seed % 3], k=3,
                                          bounds=PATTERNS[seed % 4]))
            _, seen = instrumented(prob, IpmConfig())
            for it, *_ in seen:
                np.linalg.cholesky(dense_doubly_augmented(prob, it))
                iterates += 1
            K = KktOperator.from_iterate(prob, seen[len(seen) // 2][0])
            rng = np.random.default_rng(seed)
            for _ in range(1000):
                u, v = rng.standard_normal(K.dim), rng.standard_normal(K.dim)
                Ku, Kv = K.apply(u), K.apply(v)
                worst = max(worst, abs(u @ Kv - v @ Ku) / (np.linalg.norm(u) * np.linalg.norm(Kv)))
        print(f"      {iterates} factorizations, worst asymmetry {worst:.2e}")
        assert worst <= 1e-11


def test_matrix_free_fidelity():
    with criterion("matrix-free fidelity: BFGS 1e-12/1e-13, Jacobi diagonal 1e-12"):
        rng = np.random.default_rng(5)
        worst_apply = worst_diag = worst_jac = 0.0
        for n, k in [(1, 1), (10, 0), (50, 5), (120, 12), (200, 20)]:
            H = BfgsOperator(rng.random(n) + 0.5, rng.standard_normal((n, 2 * k)), rng.standard_normal(2 * k))
            dense = np.diag(H.h0_diag) + H.update_matrix @ np.diag(H.weights) @ H.update_matrix.T
            for _ in range(5):
                x = rng.standard_normal(n)
                worst_apply = max(worst_apply, rel(H.apply(x), dense @ x))
            worst_diag = max(worst_diag, rel(H.diagonal(), np.diag(dense)))
        for seed in range(10):
            prob = generate(GeneratorSpec(seed=seed, n=40, m=25, density=0.3, hessian=KINDS[seed % 3], k=4,
                                          bounds=PATTERNS[seed % 4]))
            it = random_interior(prob, np.random.default_rng(seed))
            K = KktOperator.from_iterate(prob, it)
            worst_jac = max(worst_jac, rel(K.jacobi_diagonal(), np.diag(dense_doubly_augmented(prob, it))))
        print(f"      apply {worst_apply:.1e}, diagonal {worst_diag:.1e}, jacobi {worst_jac:.1e}")
        assert worst_apply <= 1e-12 and worst_diag <= 1e-13 and worst_jac <= 1e-12


def test_preconditioner_value():
    with criterion("preconditioner value: Jacobi median below plain CG median, 20 seeds"):
        pre, plain = [], []
        for seed in range(20):
            op = badly_scaled_operator(seed, 150)
            d = op.diagonal()
            assert d.max() / d.min() >= 1e6
            b = np.ones(op.dim)
            pre.append(pcg_solve(op, d, b)[1].iterations)
            plain.append(pcg_solve(op, np.ones(op.dim), b)[1].iterations)
        print(f"      median Jacobi {np.median(pre)}, median plain {np.median(plain)}")
        assert np.median(pre) < np.median(plain)


def test_interior_and_mu_schedule():
    with criterion("interior preservation, mu/10 schedule, termination certificate"):
        cfg = IpmConfig()
        for seed in range(60):
            prob = generate(GeneratorSpec(seed=seed, n=3 + seed % 25, m=seed % 17, density=0.4,
                                          hessian=KINDS[seed % 3], k=2, bounds=PATTERNS[seed % 4]))
            trace, mins = [], []
            res = ipm_solve(prob, cfg, trace=trace.append,
                            inspect=lambda i, it, *rest: mins.append(it.min_interior()))
            assert res.converged, seed
            assert min(mins) > 0 and res.state.min_interior() > 0
            mus = [r["mu"] for r in trace] + [trace[-1]["mu_next"]]
            assert all(b == a or b == a / cfg.mu_divisor for a, b in zip(mus, mus[1:]))
            last = trace[-1]
            assert last["residual_inf"] < last["mu"] <= cfg.mu_tol


def _rosenbrock(x):
    f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400.0 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200.0 * (x[1] - x[0] ** 2)])
    return f, g


def test_sqp_end_to_end():
    with criterion("SQP: Rosenbrock 1e-5, QP-as-NLP <= 3 iterations, convex subproblems"):
        rng = np.random.default_rng(0)
        probes = [0]

        def inspect(k, state, sub):
            for v in rng.standard_normal((100, sub.n)):
                assert v @ sub.hessian.apply(v) > 0
            probes[0] += 100

        res = sqp_solve(NlpProblem(_rosenbrock, [-5, -5], [5, 5]), np.array([-1.2, 1.0]), inspect=inspect)
        assert res.converged and np.abs(res.x - 1.0).max() <= 1e-5

        q_rng = np.random.default_rng(12)
        n, m = 8, 4
        q = q_rng.random(n) + 0.5
        c = q_rng.standard_normal(n)
        C = q_rng.standard_normal((m, n))
        e = q_rng.random(m)
        nlp = NlpProblem(lambda x: (0.5 * x @ (q * x) + c @ x, q * x + c), np.full(n, -1.0), np.full(n, 1.0),
                         lambda x: (C @ x - e, C), m)
        qres = sqp_solve(nlp, np.zeros(n), SqpConfig(h0_diag=tuple(q)), inspect=inspect)
        qp = QpProblem(DiagonalOperator(q), c, CsrMatrix.from_dense(C), np.full(m, -np.inf), e, nlp.a, nlp.b)
        ref = active_set_oracle(qp)
        assert qres.converged and qres.iterations <= 3
        assert np.abs(qres.x - ref.x).max() <= 1e-6

        sqp_solve(dose_nlp(3, 40), np.full(40, 0.1), SqpConfig(max_iterations=15), inspect=inspect)
        print(f"      Rosenbrock x = {res.x.tolist()}, QP-as-NLP iterations {qres.iterations}, "
              f"{probes[0]} convexity probes")


def _ranks(v):
    order = np.argsort(v, kind="stable")
    r = np.empty(len(v))
    r[order] = np.arange(len(v))
    return r


@pytest.mark.slow
def test_workload_shape():
    with criterion("workload shape: preset dimensions and growth trend over 5 seeds, < 10 min"):
        t0 = time.perf_counter()
        dims = {}
        for name in ("proton-hn", "proton-hn-post", "vmat-hn"):
            s = generate(preset(name)).summary()
            dims[name] = (s["variables"], s["linear_constraints"])
        assert dims == {"proton-hn": (77373, 0), "proton-hn-post": (33531, 0), "vmat-hn": (13425, 68618)}

        report = run_suite(SuiteConfig.named("growth"))
        growth = report["sqp_growth"][1]
        iters = np.array([g[0] for g in growth], dtype=float)
        times = np.array([g[2] for g in growth])
        rho = float(np.corrcoef(_ranks(iters), _ranks(times))[0, 1])
        d = max(1, len(times) // 10)
        first, last = float(np.median(times[:d])), float(np.median(times[-d:]))
        elapsed = time.perf_counter() - t0
        print(f"      {len(growth)} iterations, Spearman {rho:.2f}, first decile {first:.1f} ms, "
              f"last decile {last:.1f} ms, {elapsed:.0f} s")
        assert len(growth) == 50 and all(g[4] == 5 for g in growth)
        assert rho >= 0.5 and last > first and elapsed < 600


def test_cli_determinism(tmp_path):
    with criterion("determinism: two CLI solves give byte-identical solution files"):
        path = tmp_path / "p.qp"
        save_problem(generate(GeneratorSpec(seed=7, n=60, m=40, density=0.1, hessian="bfgs", k=4,
                                            bounds="mixed")), path)
        outs = []
        for i in range(2):
            out = tmp_path / f"sol{i}.json"
            subprocess.run([sys.executable, "-m", "krylovipm.cli", "solve", str(path), "--out", str(out)],
                           check=True, capture_output=True)
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] and b'"converged"' in outs[0]
