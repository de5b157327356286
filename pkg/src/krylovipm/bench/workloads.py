"""Smooth dose-shaping NLPs for end-to-end SQP runs.

Spot weights ``x >= 0`` deposit dose ``D x`` (nonnegative sparse D). The objective
penalizes target under/over-dose quadratically and organ-at-risk dose above a
threshold with a one-sided quadratic; one nonlinear constraint caps the mean
squared organ dose.
"""
from __future__ import annotations

import numpy as np

from ..linops import CsrMatrix
from ..sqp import NlpProblem
from .rng import Stream


def dose_matrix(seed, n, voxels, per_voxel=8):
    rng = Stream(seed)
    c = min(per_voxel, n)
    cols = rng.integers(voxels * c, n).reshape(voxels, c)
    vals = rng.uniform(voxels * c, 0.05, 1.0).reshape(voxels, c) * (2.0 / c)
    order = np.argsort(cols, axis=1, kind="stable")
    cols = np.take_along_axis(cols, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)
    keep = np.ones_like(cols, dtype=bool)
    keep[:, 1:] = cols[:, 1:] != cols[:, :-1]
    indptr = np.zeros(voxels + 1, dtype=np.int64)
    np.cumsum(keep.sum(axis=1), out=indptr[1:])
    return CsrMatrix(voxels, n, indptr, cols[keep], vals[keep])


def dose_nlp(seed, n, voxels=None, oar_fraction=0.4, prescription=1.0, oar_threshold=0.3,
             oar_weight=2.0, mean_sq_cap=0.12):
    voxels = voxels or int(1.5 * n)
    D = dose_matrix(seed, n, voxels)
    n_oar = int(oar_fraction * voxels)
    target = np.arange(voxels) >= n_oar
    oar = ~target

    def objective(x):
        dose = D.apply(x)
        r = np.where(target, dose - prescription, oar_weight * np.maximum(dose - oar_threshold, 0.0))
        w = np.where(target, 1.0, oar_weight)
        f = 0.5 * float(r @ r) / voxels
        return f, D.apply_transpose(w * r) / voxels

    def constraints(x):
        dose = D.apply(x)
        od = np.where(oar, dose, 0.0)
        g = float(od @ od) / n_oar - mean_sq_cap
        grad = D.apply_transpose(2.0 * od / n_oar)
        return np.array([g]), grad.reshape(1, -1)

    return NlpProblem(objective, np.zeros(n), np.full(n, np.inf), constraints, 1)
