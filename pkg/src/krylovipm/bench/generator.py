"""Seeded synthetic QPs shaped like treatment-planning subproblems.

Draw order from ``Stream(seed)`` (documented in docs/format.md so other
implementations reproduce the same problems):

1. ``x_ref``: n uniforms in [-1, 1) (``nonneg`` bounds: [0.5, 1.5)).
2. Hessian (see ``_hessian``).
3. Constraint matrix: ``m * c`` column draws then ``m * c`` value draws,
   ``c = max(1, round(density * n))``; duplicate columns in a row are dropped.
4. Bound widths: m lower, m upper, n lower, n upper uniforms in [0.5, 2).
5. ``mixed`` pattern only: 2m + 2n uniforms; a bound is infinite where u < inf_fraction.
6. Linear term: n standard normals.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..linops import BfgsOperator, CsrMatrix, DiagonalOperator, SymmetricCsrOperator
from ..problem import QpProblem
from .rng import Stream

HESSIAN_KINDS = ("diag", "csr", "bfgs")
BOUND_PATTERNS = ("two-sided", "lower", "mixed", "nonneg")


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int
    n: int
    m: int = 0
    density: float = 0.3
    hessian: str = "diag"
    k: int = 0
    bounds: str = "two-sided"
    inf_fraction: float = 0.3
    nonneg: bool = False

    def validate(self):
        if self.n < 1 or self.m < 0:
            raise ValueError("need n >= 1 and m >= 0")
        if not 0 < self.density <= 1:
            raise ValueError("density must lie in (0, 1]")
        if self.hessian not in HESSIAN_KINDS:
            raise ValueError(f"hessian kind must be one of {HESSIAN_KINDS}")
        if self.bounds not in BOUND_PATTERNS:
            raise ValueError(f"bound pattern must be one of {BOUND_PATTERNS}")
        if self.k < 0:
            raise ValueError("pair count k must be nonnegative")
        if not 0 <= self.inf_fraction < 1:
            raise ValueError("inf_fraction must lie in [0, 1)")


# Published head-and-neck workload shapes. Proton cases: spot weights >= 0, no linear constraints.
PRESETS = {
    "proton-hn": GeneratorSpec(seed=1, n=77373, m=0, hessian="bfgs", k=5, bounds="nonneg"),
    "proton-hn-post": GeneratorSpec(seed=2, n=33531, m=0, hessian="bfgs", k=5, bounds="nonneg"),
    "vmat-hn": GeneratorSpec(seed=3, n=13425, m=68618, density=8 / 13425, hessian="bfgs", k=5,
                             bounds="two-sided", nonneg=True),
    "smoke": GeneratorSpec(seed=7, n=40, m=30, density=0.2, hessian="bfgs", k=3, bounds="mixed"),
}


def preset(name, seed=None):
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return spec if seed is None else replace(spec, seed=seed)


def generate(spec: GeneratorSpec) -> QpProblem:
    spec.validate()
    rng = Stream(spec.seed)
    n, m = spec.n, spec.m
    if spec.bounds == "nonneg":
        x_ref = rng.uniform(n, 0.5, 1.5)
    else:
        x_ref = rng.uniform(n, -1.0, 1.0)
    hessian = _hessian(spec, rng)
    A = _constraint_matrix(spec, rng)

    w = rng.uniform(2 * m + 2 * n, 0.5, 2.0)
    ax = A.apply(x_ref)
    l, u = ax - w[:m], ax + w[m:2 * m]
    a, b = x_ref - w[2 * m:2 * m + n], x_ref + w[2 * m + n:]
    if spec.bounds == "lower":
        u[:] = np.inf
        b[:] = np.inf
    elif spec.bounds == "nonneg":
        a[:] = 0.0
        b[:] = np.inf
    elif spec.bounds == "mixed":
        drop = rng.uniform(2 * m + 2 * n) < spec.inf_fraction
        l[drop[:m]] = -np.inf
        u[drop[m:2 * m]] = np.inf
        a[drop[2 * m:2 * m + n]] = -np.inf
        b[drop[2 * m + n:]] = np.inf
        if not (np.isfinite(l).any() or np.isfinite(u).any() or np.isfinite(a).any() or np.isfinite(b).any()):
            a[0] = x_ref[0] - w[2 * m]
    p = rng.normal(n)
    return QpProblem(hessian, p, A, l, u, a, b)


def _hessian(spec, rng):
    n = spec.n
    if spec.hessian == "diag":
        return DiagonalOperator(rng.uniform(n, 0.5, 2.0))
    if spec.hessian == "csr":
        # symmetric off-diagonal pattern made diagonally dominant (positive definite)
        c = max(1, round(min(spec.density, 0.5) * n / 2))
        rows = np.repeat(np.arange(n), c)
        cols = rng.integers(n * c, n)
        vals = rng.normal(n * c)
        shift = rng.uniform(n, 0.5, 2.0)
        keep = rows < cols
        r, cc, v = rows[keep], cols[keep], vals[keep]
        key = r * n + cc
        _, first = np.unique(key, return_index=True)
        r, cc, v = r[first], cc[first], v[first]
        diag = shift.copy()
        np.add.at(diag, r, np.abs(v))
        np.add.at(diag, cc, np.abs(v))
        all_r = np.concatenate([r, cc, np.arange(n)])
        all_c = np.concatenate([cc, r, np.arange(n)])
        all_v = np.concatenate([v, v, diag])
        return SymmetricCsrOperator(CsrMatrix.from_triplets(n, n, all_r, all_c, all_v))
    # bfgs: k damped updates from random secant pairs
    from ..sqp import bfgs_update

    op = BfgsOperator(rng.uniform(n, 0.5, 2.0))
    for _ in range(spec.k):
        s = rng.normal(n)
        y = s * rng.uniform(n, 0.5, 3.0) + 0.1 * rng.normal(n)
        op = bfgs_update(op, s, y)
    return op


def _constraint_matrix(spec, rng):
    n, m = spec.n, spec.m
    if m == 0:
        return CsrMatrix(0, n, np.zeros(1, dtype=np.int64), [], [])
    c = max(1, int(round(spec.density * n)))
    cols = rng.integers(m * c, n).reshape(m, c)
    vals = rng.uniform(m * c, 0.05, 1.0) if spec.nonneg else rng.normal(m * c)
    vals = vals.reshape(m, c)
    order = np.argsort(cols, axis=1, kind="stable")
    cols = np.take_along_axis(cols, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)
    keep = np.ones((m, c), dtype=bool)
    keep[:, 1:] = cols[:, 1:] != cols[:, :-1]
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(keep.sum(axis=1), out=indptr[1:])
    return CsrMatrix(m, n, indptr, cols[keep], vals[keep])


def badly_scaled_operator(seed, n, spread=1e7, density=0.1):
    """SPD ``S C S`` with C sparse, well conditioned and unit diagonal; diag(S)^2 spans ``spread``.

    Draws: the sparse C of the ``csr`` Hessian kind, then n uniforms for the log-scales.
    Jacobi scaling undoes S exactly, so this family separates preconditioned from plain CG.
    """
    rng = Stream(seed)
    c = _hessian(GeneratorSpec(seed=seed, n=n, density=density, hessian="csr"), rng).matrix
    d = c.diagonal()
    t = rng.uniform(n)
    t[0], t[-1] = 0.0, 1.0  # pin both ends so the spread is exact
    scale = spread ** (0.5 * t) / np.sqrt(d)
    rows = np.repeat(np.arange(n), np.diff(c.indptr))
    vals = c.data * (scale[rows] * scale[c.indices])  # commutative product keeps exact symmetry
    return SymmetricCsrOperator(CsrMatrix(n, n, c.indptr, c.indices, vals))
