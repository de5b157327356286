import sys
import numpy as np
import pytest

from krylovipm.bench.generator import GeneratorSpec, generate
from krylovipm.ipm import initial_point
from krylovipm.linops import CsrMatrix, DiagonalOperator
from krylovipm.problem import FAMILIES, QpProblem


def random_csr(rng, nrows, ncols, density=0.3):
    dense = rng.standard_normal((nrows, ncols)) * (rng.random((nrows, ncols)) < density)
    return CsrMatrix.from_dense(dense), dense


def random_interior(prob, rng, spread=1.0):
    """Initial point with slacks and multipliers replaced by random positive values."""
    it = initial_point(prob)
    it.x = rng.standard_normal(prob.n)
    for f in FAMILIES:
        size = prob.sizes[f]
        setattr(it, "s_" + f, 10.0 ** rng.uniform(-spread, spread, size))
        setattr(it, "lam_" + f, 10.0 ** rng.uniform(-spread, spread, size))
    it.mu = float(10.0 ** rng.uniform(-3, 0))
    return it


def one_dim(h, p, a=-np.inf, b=np.inf):
    return QpProblem(DiagonalOperator([h]), [p], CsrMatrix(0, 1, [0], [], []), [], [], [a], [b])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def mixed_problem():
    return generate(GeneratorSpec(seed=11, n=20, m=16, density=0.3, hessian="bfgs", k=3, bounds="mixed"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for verdict, name in mod.RESULTS:
        terminalreporter.write_line(f"{verdict}  {name}")
