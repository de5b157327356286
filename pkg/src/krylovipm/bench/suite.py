"""Benchmark suite: seeded QP sets and end-to-end SQP runs, written as TSV tables.

QP timings are the median of ``repeats`` runs after one warm-up. SQP runs time
each subproblem once; per-iteration growth is summarized as the median over seeds.
"""
from __future__ import annotations

import csv
import json
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..ipm import IpmConfig, ipm_solve
from ..sqp import SqpConfig, sqp_solve
from .generator import GeneratorSpec, generate
from .workloads import dose_nlp

QP_COLUMNS = ["problem_id", "n", "m", "nnz", "ipm_iters", "cg_iters_total", "time_ms", "status"]
CG_COLUMNS = ["problem_id", "ipm_iter", "cg_iters"]
SQP_COLUMNS = ["seed", "sqp_iter", "update_columns", "time_ms", "ipm_iters", "cg_iters", "status"]
GROWTH_COLUMNS = ["sqp_iter", "update_columns", "median_time_ms", "median_cg_iters", "runs"]
TIMING_FIELDS = {"time_ms", "median_time_ms"}


@dataclass
class SuiteConfig:
    qp_seeds: list = field(default_factory=lambda: list(range(10)))
    qp_sizes: list = field(default_factory=lambda: [(10, 8), (30, 20), (50, 40)])
    repeats: int = 5
    sqp_seeds: list = field(default_factory=lambda: [1, 2])
    sqp_n: int = 200
    sqp_iterations: int = 10
    workers: int = 1
    ipm: IpmConfig = IpmConfig()

    @classmethod
    def named(cls, name):
        if name == "smoke":
            return cls()
        if name == "growth":
            return cls(qp_seeds=[], sqp_seeds=[1, 2, 3, 4, 5], sqp_n=2000, sqp_iterations=50)
        if name == "full":
            return cls(qp_seeds=list(range(20)), qp_sizes=[(50, 40), (200, 150), (1000, 600)],
                       sqp_seeds=[1, 2, 3, 4, 5], sqp_n=2000, sqp_iterations=50)
        raise ValueError(f"unknown suite {name!r}; choose smoke, growth or full")


def _qp_spec(seed, n, m):
    kinds = ("diag", "csr", "bfgs")
    patterns = ("two-sided", "lower", "mixed")
    return GeneratorSpec(seed=seed, n=n, m=m, density=min(1.0, 5.0 / n), hessian=kinds[seed % 3],
                         k=3, bounds=patterns[(seed // 3) % 3], nonneg=bool(seed % 2))


def _run_qp(args):
    seed, n, m, repeats, ipm_cfg = args
    pid = f"qp-n{n}-m{m}-s{seed}"
    try:
        prob = generate(_qp_spec(seed, n, m))
        res = ipm_solve(prob, ipm_cfg)  # warm-up, also the reported iterate
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            ipm_solve(prob, ipm_cfg)
            times.append(time.perf_counter() - t0)
        row = [pid, n, m, prob.A.nnz, res.iterations, res.cg_iterations,
               round(1e3 * statistics.median(times), 3), res.status]
        cg = [[pid, i + 1, c] for i, c in enumerate(res.cg_per_iteration)]
    except Exception as exc:  # recorded, suite continues
        row = [pid, n, m, "", "", "", "", f"exception: {exc}"]
        cg = []
    return row, cg


def _run_sqp(args):
    seed, n, iterations, ipm_cfg = args
    rows = []
    try:
        prob = dose_nlp(seed, n)
        cfg = SqpConfig(max_iterations=iterations, step_tol=0.0, kkt_tol=0.0, ipm=ipm_cfg)
        res = sqp_solve(prob, np.full(n, 0.1), cfg)
        for st in res.stats:
            rows.append([seed, st["sqp_iteration"], st["update_columns"], round(1e3 * st["qp_time"], 3),
                         st["ipm_iterations"], st["cg_iterations"], st["qp_status"]])
    except Exception as exc:
        rows.append([seed, "", "", "", "", "", f"exception: {exc}"])
    return rows


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))  # map keeps submission order
    return [fn(j) for j in jobs]


def growth_medians(sqp_rows):
    by_iter: dict = {}
    for seed, it, cols, t, _ipm, cg, status in sqp_rows:
        if it == "" or not str(status).startswith(("converged", "iteration-limit")):
            continue
        by_iter.setdefault(it, []).append((cols, t, cg))
    out = []
    for it in sorted(by_iter):
        vals = by_iter[it]
        out.append([it, int(statistics.median(v[0] for v in vals)),
                    round(statistics.median(v[1] for v in vals), 3),
                    statistics.median(v[2] for v in vals), len(vals)])
    return out


def run_suite(config: SuiteConfig, out_dir=None):
    """Run the configured problem sets; returns the tables and writes them when ``out_dir`` is set."""
    t_start = time.perf_counter()
    qp_jobs = [(s, n, m, config.repeats, config.ipm) for (n, m) in config.qp_sizes for s in config.qp_seeds]
    qp_out = _map(_run_qp, qp_jobs, config.workers)
    qp_rows = [r for r, _ in qp_out]
    cg_rows = [c for _, cg in qp_out for c in cg]
    sqp_jobs = [(s, config.sqp_n, config.sqp_iterations, config.ipm) for s in config.sqp_seeds]
    sqp_rows = [r for rows in _map(_run_sqp, sqp_jobs, config.workers) for r in rows]
    growth = growth_medians(sqp_rows)
    total = time.perf_counter() - t_start
    report = {
        "qp": (QP_COLUMNS, qp_rows),
        "cg_per_ipm": (CG_COLUMNS, cg_rows),
        "sqp": (SQP_COLUMNS, sqp_rows),
        "sqp_growth": (GROWTH_COLUMNS, growth),
        "summary": {
            "total_time_s": round(total, 3),
            "qp_problems": len(qp_rows),
            "qp_failures": sum(1 for r in qp_rows if r[-1] != "converged"),
            "sqp_subproblems": len(sqp_rows),
            "sqp_total_qp_time_ms": round(sum(r[3] for r in sqp_rows if r[3] != ""), 3),
            "config": {k: v for k, v in asdict(config).items() if k != "ipm"} | {"ipm": config.ipm.as_dict()},
        },
    }
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name in ("qp", "cg_per_ipm", "sqp", "sqp_growth"):
        columns, rows = report[name]
        with open(os.path.join(out_dir, f"{name}.tsv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(columns)
            w.writerows(rows)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(report["summary"], fh, indent=1, default=list)
        fh.write("\n")


def strip_timings(report):
    """Copy of the table part of a report with timing columns removed (for determinism checks)."""
    out = {}
    for name in ("qp", "cg_per_ipm", "sqp", "sqp_growth"):
        columns, rows = report[name]
        keep = [i for i, c in enumerate(columns) if c not in TIMING_FIELDS]
        out[name] = [[row[i] for i in keep] for row in rows]
    return out
