"""Command-line front end: ``lrep solve``, ``lrep biorth-bench``, ``lrep verify``."""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import os
import sys
import time

import numpy as np

from .bench import DEFAULT_SIZES, LAUCHLI_MU, biorth_bench
from .errors import ContractViolation, IngestionError, LrepError, NotEnoughSamples
from .problems import build_problem
from .solver import BospConfig, EigenResult, regression_coefficients, solve

__all__ = ["main", "build_parser", "build_report", "dumps_report", "write_history_csv",
           "EXIT_OK", "EXIT_PARSE", "EXIT_INGEST", "EXIT_NOT_CONVERGED", "EXIT_NUMERICAL"]

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_INGEST = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so ``main`` controls the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lrep", description=(
        "Smallest positive eigenpairs of the linear response eigenproblem "
        "[[0, K], [M, 0]] by biorthogonal structure-preserving subspace iteration."))
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a registered or Matrix Market problem")
    src = s.add_argument_group("problem source (use --problem or --k-file/--m-file)")
    src.add_argument("--problem", choices=["t0", "tm1", "fd-laplace", "random-spd"])
    src.add_argument("--n", type=int, help="order for t0, tm1 and random-spd")
    src.add_argument("--m", type=int, help="grid points per axis for fd-laplace")
    src.add_argument("--cond", type=float, help="condition number target for random-spd")
    src.add_argument("--problem-seed", type=int, help="seed for random-spd")
    src.add_argument("--k-file")
    src.add_argument("--m-file")
    src.add_argument("--b-file", help="optional SPD weight B for K x = lambda B y, M y = lambda B x")
    s.add_argument("--nev", type=int, required=True)
    s.add_argument("--nb", type=int, help="batch size (default ceil(min(nev/5, 150)), nev if nev < 5)")
    s.add_argument("--tol", type=_positive_float, default=1e-8)
    s.add_argument("--ngs", type=int, default=1, help="Gauss-Seidel sweeps per iteration")
    s.add_argument("--s", type=int, default=3, help="window size in batches")
    mv = s.add_mutually_exclusive_group()
    mv.add_argument("--moving", dest="moving", action="store_true", default=None)
    mv.add_argument("--no-moving", dest="moving", action="store_false")
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--seed", type=int, default=0, help="seed of the random start")
    s.add_argument("--rank-hint", type=int, help="expected nullspace dimension of K")
    s.add_argument("--out", help="write the JSON report here")
    s.add_argument("--history", help="write the residual history CSV here")

    b = sub.add_parser("biorth-bench", help=(
        "CGS vs MGS biorthogonalization of Hilbert/Lauchli columns"), description=(
        "For each n, X is the first m = n/2 columns of the n x n Hilbert matrix and Y the "
        "first m columns of the n x (n-1) Lauchli matrix [ones(1, n-1); mu I]."))
    b.add_argument("--sizes", type=_int_list, default=list(DEFAULT_SIZES))
    b.add_argument("--mu", type=_positive_float, default=LAUCHLI_MU)
    b.add_argument("--format", choices=["markdown", "csv"], default="markdown")

    from .verify import SUITES
    v = sub.add_parser("verify", help="run an acceptance suite")
    v.add_argument("suite", choices=list(SUITES))
    return p


def _problem_from_args(args):
    files = (args.k_file, args.m_file)
    if args.problem and any(files + (args.b_file,)):
        raise UsageError("give either --problem or --k-file/--m-file, not both")
    if args.problem is None:
        if not all(files):
            raise UsageError("a problem source is required: --problem or --k-file and --m-file")
        return build_problem("mm-files", k_file=args.k_file, m_file=args.m_file,
                             b_file=args.b_file)
    params = {k: v for k, v in (("n", args.n), ("m", args.m), ("cond", args.cond),
                                ("seed", args.problem_seed)) if v is not None}
    return build_problem(args.problem, **params)


def _finite(x):
    """JSON-safe value: non-finite floats become ``None``."""
    if isinstance(x, dict):
        return {str(k): _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, np.ndarray):
        return _finite(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def build_report(res: EigenResult, problem, wall_time: float) -> dict:
    cfg = res.config
    regression = []
    for i in range(res.history.ntracked):
        try:
            fit = regression_coefficients(res.history, i)
            regression.append({"eigenindex": i, "alpha": fit.alpha, "beta": fit.beta,
                               "degenerate": fit.degenerate, "pairs": fit.npairs})
        except NotEnoughSamples:
            regression.append({"eigenindex": i, "alpha": None, "beta": None,
                               "degenerate": False, "pairs": 0})
    return _finite({
        "config": {"nev": cfg.nev, "nb": cfg.nb, "tol": cfg.tol, "ngs": cfg.ngs, "s": cfg.s,
                   "moving": cfg.moving, "max_outer_iter": cfg.max_outer_iter,
                   "rng_seed": cfg.rng_seed},
        "problem": {"name": problem.name, "n": problem.n, "params": problem.params},
        "converged": res.converged,
        "nev_conv": res.nev_conv,
        "iterations": res.iterations,
        "wall_time": wall_time,
        "nullspace_rank": res.nullspace_rank,
        "eigenvalues": res.lambdas,
        "residuals": res.residuals,
        "biorth_deviation": res.biorth_deviation,
        "max_width": res.max_width,
        "history": {"columns": ["iteration", "eigenindex", "residual"],
                    "rows": [list(r) for r in res.history.rows()]},
        "regression": regression,
    })


def dumps_report(report: dict) -> str:
    """Canonical JSON: sorted keys, shortest round-tripping float repr."""
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "eigenindex", "residual"])
        for it, idx, r in history.rows():
            w.writerow([it, idx, repr(r) if math.isfinite(r) else "nan"])


def _print_eigen_table(res: EigenResult, out):
    print(f"{'index':>5}  {'lambda':>19}  {'residual':>10}", file=out)
    for i, (lam, r) in enumerate(zip(res.lambdas, res.residuals), start=1):
        print(f"{i:>5}  {lam:19.12E}  {r:10.3E}", file=out)
    status = "converged" if res.converged else f"NOT converged ({res.nev_conv}/{res.config.nev})"
    print(f"{status} in {res.iterations} iterations; nullspace rank {res.nullspace_rank}",
          file=out)


def cmd_solve(args, out) -> int:
    try:
        problem = _problem_from_args(args)
    except (IngestionError, OSError) as exc:
        print(f"lrep: cannot read input: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except ContractViolation as exc:
        code = EXIT_INGEST if args.problem is None else EXIT_PARSE
        print(f"lrep: {exc}", file=sys.stderr)
        return code
    try:
        cfg = BospConfig(nev=args.nev, nb=args.nb, tol=args.tol, ngs=args.ngs, s=args.s,
                         moving=args.moving, max_outer_iter=args.max_iter, rng_seed=args.seed)
    except ContractViolation as exc:
        print(f"lrep: {exc}", file=sys.stderr)
        return EXIT_PARSE
    t0 = time.perf_counter()
    try:
        res = solve(problem.K, problem.M, problem.ip, cfg, rank_hint=args.rank_hint)
    except ContractViolation as exc:
        print(f"lrep: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except LrepError as exc:
        print(f"lrep: numerical abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - t0
    _print_eigen_table(res, out)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps_report(build_report(res, problem, wall)))
    if args.history:
        write_history_csv(args.history, res.history)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


_BENCH_COLUMNS = ["n", "cond_X", "cond_Y", "sqrt_cond_XtY", "cgs_residual", "mgs_residual"]


def cmd_biorth_bench(args, out) -> int:
    try:
        rows = biorth_bench(args.sizes, args.mu)
    except ValueError as exc:
        raise UsageError(f"lrep biorth-bench: error: {exc}")
    if args.format == "csv":
        w = csv.writer(out)
        w.writerow(_BENCH_COLUMNS)
        for r in rows:
            d = r.as_dict()
            w.writerow([d["n"], *(f"{d[c]:.6e}" for c in _BENCH_COLUMNS[1:])])
    else:
        print("| " + " | ".join(_BENCH_COLUMNS) + " |", file=out)
        print("|" + "---|" * len(_BENCH_COLUMNS), file=out)
        for r in rows:
            d = r.as_dict()
            print("| " + " | ".join([str(d["n"]), *(f"{d[c]:.2E}" for c in _BENCH_COLUMNS[1:])])
                  + " |", file=out)
    return EXIT_OK


def cmd_verify(args, out) -> int:
    from .verify import run_suite

    checks = run_suite(args.suite, out)
    failed = [c for c in checks if not c.passed]
    print(f"{args.suite}: {len(checks) - len(failed)}/{len(checks)} checks passed", file=out)
    for c in failed:
        print(f"lrep verify: failed check: {c.name}", file=sys.stderr)
    return 1 if failed else 0


def _thread_limit():
    raw = os.environ.get("BOSP_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"BOSP_THREADS must be a non-negative integer, got {raw!r}")
    if n < 0:
        raise UsageError(f"BOSP_THREADS must be a non-negative integer, got {raw!r}")
    if n == 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        limit = _thread_limit()
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_PARSE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"solve": cmd_solve, "biorth-bench": cmd_biorth_bench, "verify": cmd_verify}
    try:
        with limit:
            return handlers[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
