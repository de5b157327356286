"""Compiled kernels against the numpy fallback.

Times each operation under both backends on the same seeded inputs and prints a
table of median wall-clock times. Usage::

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeats 20]
"""
import argparse
import statistics
import time

import numpy as np

from krylovipm import kernels
from krylovipm.bench.generator import GeneratorSpec, generate
from krylovipm.ipm import initial_point
from krylovipm.kkt import KktOperator
from krylovipm.pcg import PcgConfig, pcg_solve


def median_time(fn, repeats):
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(n):
    prob = generate(GeneratorSpec(seed=1, n=n, m=n // 2, density=min(1.0, 10.0 / n), hessian="bfgs", k=10,
                                  bounds="mixed"))
    K = KktOperator.from_iterate(prob, initial_point(prob))
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    v = rng.standard_normal(K.dim)
    diag = K.jacobi_diagonal()
    cfg = PcgConfig(rel_tolerance=1e-8, max_iterations=200)
    return {
        "csr_matvec": lambda: prob.A.apply(x),
        "bfgs_apply": lambda: prob.hessian.apply(x),
        "kkt_apply": lambda: K.apply(v),
        "pcg_solve": lambda: pcg_solve(K, diag, v, cfg=cfg),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args(argv)
    try:
        kernels.load("compiled")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1
    table = {}
    for backend in ("compiled", "python"):
        with kernels.use(backend):
            for name, fn in cases(args.n).items():
                table.setdefault(name, {})[backend] = median_time(fn, args.repeats)
    print(f"n={args.n}, median of {args.repeats} runs")
    print(f"{'operation':<12} {'compiled ms':>12} {'python ms':>12} {'speedup':>8}")
    for name, row in table.items():
        c, p = row["compiled"], row["python"]
        print(f"{name:<12} {1e3 * c:12.3f} {1e3 * p:12.3f} {p / c:8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
