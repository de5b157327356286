import numpy as np
import pytest

from krylovipm.bench.generator import badly_scaled_operator
from krylovipm.linops import DiagonalOperator, SymmetricCsrOperator, CsrMatrix
from krylovipm.pcg import PcgBreakdown, PcgConfig, pcg_solve


def dense_op(mat):
    return SymmetricCsrOperator(CsrMatrix.from_dense(mat))


def spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    m = (q * np.geomspace(1.0, cond, n)) @ q.T
    return 0.5 * (m + m.T)


def test_identity_one_iteration(rng):
    b = rng.standard_normal(7)
    x, rep = pcg_solve(DiagonalOperator(np.ones(7)), np.ones(7), b)
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_array_equal(x, b)


def test_exact_jacobi_one_iteration():
    d = np.arange(1.0, 11.0)
    x, rep = pcg_solve(DiagonalOperator(d), d, np.ones(10))
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_allclose(x, 1.0 / d, rtol=1e-15)


def test_dense_spd_against_direct_solve(rng):
    mat = spd(rng, 30, 100.0)
    mat = np.where(np.abs(mat) > 0, mat, 0.0)
    op = dense_op(np.triu(mat) + np.triu(mat, 1).T)
    b = rng.standard_normal(30)
    x, rep = pcg_solve(op, op.diagonal(), b, cfg=PcgConfig(rel_tolerance=1e-10))
    ref = np.linalg.solve(op.to_dense(), b)
    assert rep.converged and rep.final_relative_residual <= 1e-10
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) <= 1e-8


def test_already_converged_returns_zero_iterations():
    x, rep = pcg_solve(DiagonalOperator([2.0]), [1.0], np.zeros(1))
    assert rep.iterations == 0 and rep.converged and x.tolist() == [0.0]


def test_warm_start_exact_solution(rng):
    d = rng.random(5) + 1
    b = rng.standard_normal(5)
    x, rep = pcg_solve(DiagonalOperator(d), np.ones(5), b, x0=b / d)
    assert rep.iterations == 0


@pytest.mark.parametrize("seed", range(5))
def test_finite_termination(seed):
    rng = np.random.default_rng(seed)
    n = 25
    mat = spd(rng, n, 5.0)
    op = dense_op(np.triu(mat) + np.triu(mat, 1).T)
    _, rep = pcg_solve(op, np.ones(n), rng.standard_normal(n), cfg=PcgConfig(rel_tolerance=1e-13))
    assert rep.converged and rep.iterations <= n + 5


def test_error_energy_norm_decreases(rng):
    n = 20
    mat = spd(rng, n, 1e3)
    mat = np.triu(mat) + np.triu(mat, 1).T
    op = dense_op(mat)
    b = rng.standard_normal(n)
    xs = np.linalg.solve(mat, b)
    errs = []
    for k in range(1, 15):
        x, _ = pcg_solve(op, np.diag(mat), b, cfg=PcgConfig(rel_tolerance=1e-15, max_iterations=k))
        e = x - xs
        errs.append(e @ mat @ e)
    assert all(b_ <= a_ * (1 + 1e-10) for a_, b_ in zip(errs, errs[1:]))


def test_jacobi_beats_plain_cg():
    pre, plain = [], []
    for seed in range(20):
        op = badly_scaled_operator(seed, 150)
        d = op.diagonal()
        assert d.max() / d.min() >= 1e6
        b = np.ones(150)
        pre.append(pcg_solve(op, d, b)[1].iterations)
        plain.append(pcg_solve(op, np.ones(150), b)[1].iterations)
    assert np.median(pre) < np.median(plain)


def test_breakdown_on_indefinite():
    with pytest.raises(PcgBreakdown) as exc:
        pcg_solve(DiagonalOperator([1.0, -1.0]), np.ones(2), np.array([1.0, 2.0]))
    assert exc.value.iteration == 1 and exc.value.curvature <= 0


def test_bad_preconditioner_rejected():
    with pytest.raises(ValueError):
        pcg_solve(DiagonalOperator([1.0]), [0.0], np.ones(1))


@pytest.mark.parametrize("kwargs", [dict(rel_tolerance=0.0), dict(rel_tolerance=1.0), dict(abs_tolerance=-1.0),
                                    dict(max_iterations=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        PcgConfig(**kwargs)


def test_deterministic():
    op = badly_scaled_operator(3, 120)
    b = np.linspace(-1, 1, 120)
    x1, r1 = pcg_solve(op, op.diagonal(), b, cfg=PcgConfig(1e-10))
    x2, r2 = pcg_solve(op, op.diagonal(), b, cfg=PcgConfig(1e-10))
    assert np.array_equal(x1, x2) and r1 == r2


def test_iteration_cap_reports_not_converged():
    op = badly_scaled_operator(1, 100)
    _, rep = pcg_solve(op, np.ones(100), np.ones(100), cfg=PcgConfig(1e-12, max_iterations=3))
    assert rep.iterations == 3 and not rep.converged
