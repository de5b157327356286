import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krylovipm.linops import (BfgsOperator, CsrMatrix, DiagonalOperator, DimensionError,
                              SymmetricCsrOperator, quadratic_form)

from .conftest import random_csr


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def random_bfgs(rng, n, k):
    u = rng.standard_normal((n, 2 * k))
    w = rng.standard_normal(2 * k)
    return BfgsOperator(rng.random(n) + 0.5, u, w)


class TestCsr:
    def test_identity(self):
        A = CsrMatrix.from_dense(np.eye(2))
        assert A.apply(np.array([3.0, 4.0])).tolist() == [3.0, 4.0]
        assert A.apply_transpose(np.array([5.0, 6.0])).tolist() == [5.0, 6.0]

    def test_two_by_two(self):
        A = CsrMatrix.from_dense([[1.0, 2.0], [0.0, 3.0]])
        assert A.apply(np.ones(2)).tolist() == [3.0, 3.0]
        assert A.apply_transpose(np.ones(2)).tolist() == [1.0, 5.0]

    def test_against_dense(self, rng):
        A, dense = random_csr(rng, 50, 30)
        x, y = rng.standard_normal(30), rng.standard_normal(50)
        assert rel_err(A.apply(x), dense @ x) <= 1e-14
        assert rel_err(A.apply_transpose(y), dense.T @ y) <= 1e-14

    def test_transpose_bit_identical(self, rng):
        A, dense = random_csr(rng, 17, 23)
        assert np.array_equal(A.transpose().to_dense(), dense.T)
        assert np.array_equal(A.to_dense(), dense)

    def test_structure_invariants(self, rng):
        A, _ = random_csr(rng, 40, 25)
        assert A.indptr[0] == 0 and A.indptr[-1] == A.nnz
        for i in range(A.nrows):
            cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
            assert np.all(np.diff(cols) > 0)
            assert np.all((cols >= 0) & (cols < A.ncols))

    def test_repeat_apply_bit_identical(self, rng):
        A, _ = random_csr(rng, 80, 60)
        x = rng.standard_normal(60)
        assert np.array_equal(A.apply(x), A.apply(x))
        y = rng.standard_normal(80)
        assert np.array_equal(A.apply_transpose(y), A.apply_transpose(y))

    def test_dimension_mismatch(self):
        A = CsrMatrix.from_dense(np.eye(3))
        with pytest.raises(DimensionError):
            A.apply(np.ones(2))
        with pytest.raises(DimensionError):
            A.apply_transpose(np.ones(4))

    @pytest.mark.parametrize("indptr,indices,msg", [
        ([1, 2, 2], [0, 1], "offsets"),
        ([0, 2, 2], [1, 0], "row 0"),
        ([0, 2, 2], [0, 0], "row 0"),
        ([0, 1, 2], [0, 5], None),
    ])
    def test_invalid_structure_rejected(self, indptr, indices, msg):
        with pytest.raises(ValueError) as exc:
            CsrMatrix(2, 3, indptr, indices, np.ones(len(indices)))
        if msg:
            assert msg in str(exc.value)

    def test_duplicate_triplets_rejected(self):
        with pytest.raises(ValueError):
            CsrMatrix.from_triplets(2, 2, [0, 0], [1, 1], [1.0, 2.0])

    def test_triplets_match_dense(self):
        A = CsrMatrix.from_triplets(3, 3, [2, 0, 1], [1, 2, 0], [4.0, 5.0, 6.0])
        expected = np.zeros((3, 3))
        expected[2, 1], expected[0, 2], expected[1, 0] = 4.0, 5.0, 6.0
        assert np.array_equal(A.to_dense(), expected)

    def test_empty_matrix(self):
        A = CsrMatrix(0, 4, [0], [], [])
        assert A.apply(np.ones(4)).shape == (0,)
        assert A.apply_transpose(np.zeros(0)).tolist() == [0.0] * 4

    def test_weighted_colsq(self, rng):
        A, dense = random_csr(rng, 30, 20)
        w = rng.random(30)
        np.testing.assert_allclose(A.weighted_colsq(w), (w[:, None] * dense**2).sum(axis=0), rtol=1e-13)


class TestBfgs:
    def test_no_updates(self):
        H = BfgsOperator([2.0, 3.0])
        assert H.pair_count == 0
        assert H.apply(np.array([1.0, 1.0])).tolist() == [2.0, 3.0]
        assert H.diagonal().tolist() == [2.0, 3.0]

    def test_rank_one_hand(self):
        H = BfgsOperator(np.ones(2), np.array([[1.0], [0.0]]), np.array([2.0]))
        assert H.apply(np.ones(2)).tolist() == [3.0, 1.0]
        assert H.diagonal().tolist() == [3.0, 1.0]

    def test_against_dense(self, rng):
        H = random_bfgs(rng, 40, 5)
        dense = np.diag(H.h0_diag) + H.update_matrix @ np.diag(H.weights) @ H.update_matrix.T
        x = rng.standard_normal(40)
        assert rel_err(H.apply(x), dense @ x) <= 1e-12
        assert rel_err(H.diagonal(), np.diag(dense)) <= 1e-13
        assert pytest.approx(quadratic_form(H, x), rel=1e-12) == x @ dense @ x

    def test_with_columns_appends(self, rng):
        H = random_bfgs(rng, 10, 1)
        H2 = H.with_columns(rng.standard_normal((10, 2)), [1.0, -0.5])
        assert H2.pair_count == 2 and H2.update_matrix.shape == (10, 4)
        assert H.pair_count == 1

    def test_diagonal_cached(self, rng):
        H = random_bfgs(rng, 15, 2)
        assert H.diagonal() is H.diagonal()

    def test_concurrent_diagonal_and_apply(self, rng):
        H = random_bfgs(rng, 200, 10)
        x = rng.standard_normal(200)
        ref = H.to_dense() @ x
        diags, errs = [], []
        barrier = threading.Barrier(8)

        def work():
            barrier.wait()
            diags.append(H.diagonal())
            out = np.empty(200)
            for _ in range(20):
                H.apply(x, out)
                errs.append(rel_err(out, ref))

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(d is diags[0] for d in diags)
        assert max(errs) <= 1e-12

    def test_bad_weights_rejected(self):
        with pytest.raises(ValueError):
            BfgsOperator(np.ones(2), np.ones((2, 2)), [1.0, 0.0])
        with pytest.raises(ValueError):
            BfgsOperator(np.ones(2), np.ones((2, 1)), [1.0, 2.0])
        with pytest.raises(ValueError):
            BfgsOperator([1.0, -1.0])


def _operators(rng, n):
    A, dense = random_csr(rng, n, n, 0.3)
    sym = CsrMatrix.from_dense(dense + dense.T + np.diag(rng.random(n)))
    return [DiagonalOperator(rng.standard_normal(n)), SymmetricCsrOperator(sym), random_bfgs(rng, n, 3)]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60))
def test_diagonal_matches_unit_probes(seed, n):
    rng = np.random.default_rng(seed)
    eye = np.eye(n)
    for op in _operators(rng, n):
        d = op.diagonal()
        probes = np.array([op.apply(eye[j])[j] for j in range(n)])
        np.testing.assert_allclose(d, probes, rtol=1e-13, atol=1e-13 * np.abs(probes).max())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40), alpha=st.floats(-10, 10))
def test_apply_is_linear_and_symmetric(seed, n, alpha):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    for op in _operators(rng, n):
        lhs = op.apply(alpha * x + y)
        rhs = alpha * op.apply(x) + op.apply(y)
        scale = np.abs(op.to_dense()).max() * (abs(alpha) + 1) * n
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale
        assert abs(y @ op.apply(x) - x @ op.apply(y)) <= 1e-12 * scale * n


def test_symmetric_csr_requires_symmetry():
    with pytest.raises(ValueError):
        SymmetricCsrOperator(CsrMatrix.from_dense([[1.0, 2.0], [0.0, 1.0]]))


def test_matmul_operator():
    assert (DiagonalOperator([2.0, 3.0]) @ np.ones(2)).tolist() == [2.0, 3.0]
