"""Command line interface: ``krylovipm {solve,check,gen,bench,oracle}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .ipm import IpmConfig, ipm_solve
from .probio import ParseError, load_problem, save_problem, write_solution

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_SOLVER = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser():
    ap = _Parser(prog="krylovipm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem")
    s.add_argument("--mu-tol", type=float, default=IpmConfig.mu_tol)
    s.add_argument("--tau", type=float, default=IpmConfig.tau)
    s.add_argument("--max-iter", type=int, default=IpmConfig.max_iterations)
    s.add_argument("--pcg-rtol", type=float, default=None, help="fixed PCG tolerance (default: mu schedule)")
    s.add_argument("--trace", nargs="?", const="-", default=None, metavar="PATH",
                   help="write per-iteration JSON lines (stderr when no path)")
    s.add_argument("--out", default=None, help="solution file (default: stdout)")
    s.add_argument("--timings", action="store_true", help="include wall-clock timings (output no longer reproducible)")

    c = sub.add_parser("check", help="validate a problem file and print its dimensions")
    c.add_argument("problem")

    g = sub.add_parser("gen", help="generate a synthetic problem")
    _add_gen_args(g)
    g.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="emit a preset workload or run a benchmark suite")
    b.add_argument("--preset", default=None, help="write the named preset problem and print its summary")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", default=None, help="preset problem path (default: <preset>.qp)")
    b.add_argument("--suite", default="smoke", choices=["smoke", "growth", "full"])
    b.add_argument("--out-dir", default="bench-results")
    b.add_argument("--workers", type=int, default=1)

    o = sub.add_parser("oracle", help="dense active-set reference solve (small problems)")
    o.add_argument("problem")
    o.add_argument("--mode", default="auto", choices=["auto", "enumerate", "dual"])
    o.add_argument("--max-n", type=int, default=200)
    return ap


def _add_gen_args(g):
    from .bench.generator import BOUND_PATTERNS, HESSIAN_KINDS

    g.add_argument("--preset", default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--m", type=int, default=0)
    g.add_argument("--density", type=float, default=0.3)
    g.add_argument("--hessian", default="diag", choices=HESSIAN_KINDS)
    g.add_argument("--k", type=int, default=0)
    g.add_argument("--bounds", default="two-sided", choices=BOUND_PATTERNS)
    g.add_argument("--inf-fraction", type=float, default=0.3)
    g.add_argument("--nonneg", action="store_true")


def _summary_lines(prob):
    s = prob.summary()
    return [
        f"n={s['variables']}",
        f"m={s['linear_constraints']}",
        f"bound constraints={s['bound_constraints']}",
        f"nnz={s['nnz']}",
        f"hessian={type(prob.hessian).__name__}",
    ]


def _cmd_solve(args):
    prob = load_problem(args.problem)
    cfg = replace(IpmConfig(), mu_tol=args.mu_tol, tau=args.tau, max_iterations=args.max_iter,
                  pcg_rtol=args.pcg_rtol)
    trace = None
    fh = None
    if args.trace is not None:
        fh = sys.stderr if args.trace == "-" else open(args.trace, "w", encoding="utf-8")

        def trace(rec):
            fh.write(json.dumps(rec, sort_keys=False) + "\n")

    try:
        res = ipm_solve(prob, cfg, trace=trace)
    finally:
        if fh is not None and fh is not sys.stderr:
            fh.close()
    payload = write_solution(res, prob, cfg.as_dict(), include_timings=args.timings)
    if args.out:
        with open(args.out, "wb") as out:
            out.write(payload)
    else:
        sys.stdout.buffer.write(payload)
    print(f"status={res.status} iterations={res.iterations} cg={res.cg_iterations} "
          f"objective={res.objective!r}", file=sys.stderr)
    return EXIT_OK if res.converged else EXIT_SOLVER


def _cmd_check(args):
    prob = load_problem(args.problem)
    print("\n".join(_summary_lines(prob)))
    return EXIT_OK


def _spec_from_args(args):
    from .bench.generator import GeneratorSpec, preset

    if args.preset:
        return preset(args.preset, args.seed if args.seed else None)
    return GeneratorSpec(seed=args.seed, n=args.n, m=args.m, density=args.density, hessian=args.hessian,
                         k=args.k, bounds=args.bounds, inf_fraction=args.inf_fraction, nonneg=args.nonneg)


def _cmd_gen(args):
    from .bench.generator import generate

    prob = generate(_spec_from_args(args))
    save_problem(prob, args.out)
    print("\n".join(_summary_lines(prob)))
    return EXIT_OK


def _cmd_bench(args):
    from .bench.generator import generate, preset
    from .bench.suite import SuiteConfig, run_suite

    if args.preset:
        prob = generate(preset(args.preset, args.seed))
        out = args.out or f"{args.preset}.qp"
        save_problem(prob, out)
        print(f"preset={args.preset} file={out}")
        print("\n".join(_summary_lines(prob)))
        return EXIT_OK
    cfg = SuiteConfig.named(args.suite)
    cfg.workers = args.workers
    report = run_suite(cfg, args.out_dir)
    print(json.dumps(report["summary"], indent=1, default=list))
    return EXIT_OK if report["summary"]["qp_failures"] == 0 else EXIT_SOLVER


def _cmd_oracle(args):
    from .bench.oracles import OracleError, active_set_oracle

    prob = load_problem(args.problem)
    if prob.n > args.max_n:
        print(f"oracle limited to n <= {args.max_n}", file=sys.stderr)
        return EXIT_INVALID
    try:
        sol = active_set_oracle(prob, args.mode)
    except OracleError as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    doc = {
        "mode": sol.mode,
        "objective": sol.objective,
        "kkt_error": sol.kkt_error,
        "active": [list(a) for a in sol.active],
        "x": sol.x.tolist(),
        "multipliers": {f: v.tolist() for f, v in sol.multipliers.items()},
    }
    print(json.dumps(doc, indent=1))
    return EXIT_OK


COMMANDS = {"solve": _cmd_solve, "check": _cmd_check, "gen": _cmd_gen, "bench": _cmd_bench, "oracle": _cmd_oracle}


def cli_main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    try:
        code = cli_main()
    except SystemExit as exc:
        code = exc.code
    sys.exit(code)


if __name__ == "__main__":
    main()
