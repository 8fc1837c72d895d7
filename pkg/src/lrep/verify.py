"""Verification suites: solver output against analytic, reference and oracle values.

Each suite returns a list of :class:`Check` records; ``run_suite`` prints a
pass/fail table.  The same suites back the ``lrep verify`` command and the
acceptance tests.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bench import biorth_bench
from .linalg import InnerProduct, LinearOperator
from .problems import (make_fd_laplacian_problem, make_generalized_problem,
                       make_random_spd_problem, make_T_problem)
from .projected import ProjectedLrep, dense_lrep_oracle, solve_small_lrep
from .solver import BospConfig, EigenResult, regression_coefficients, solve

__all__ = ["Check", "SUITES", "run_suite", "TM1_REFERENCE", "T0_LAMBDA1",
           "pairing_residuals", "invariant_checks", "aggregate_invariants"]

# Smallest eigenvalue of the T(0)/T(0) problem at n = 1000.
T0_LAMBDA1 = 9.849886676638340e-06

# Ten smallest positive eigenvalues of T(-1)/T(0) at n = 1000, computed in
# quadruple precision.
TM1_REFERENCE = np.array([
    3.943890108210e-05, 6.154958719056e-05, 1.577542931907e-04, 1.994584196853e-04,
    3.549418750556e-04, 4.161478616511e-04, 6.309942290978e-04, 7.116221744879e-04,
    9.859008227908e-04, 1.085870497647e-03,
])

INVARIANT_TOL = 1e-10


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.criterion:>2} {self.name}: {self.detail}"


def pairing_residuals(res: EigenResult, K, M, ip=None) -> np.ndarray:
    """Normalized residuals of the reflected pairs ``(-lambda; -y, x)``."""
    ip = ip or InnerProduct()
    lam = res.lambdas
    # H [-y; x] = [K x; -M y] must equal -lambda B [-y; x] = [lambda B y; -lambda B x]
    top = K.apply(res.X) - ip.apply_weight(res.Y) * lam
    bot = -M.apply(res.Y) + ip.apply_weight(res.X) * lam
    num = np.sqrt((top ** 2).sum(0) + (bot ** 2).sum(0))
    den = (1.0 + lam) * np.sqrt((res.X ** 2).sum(0) + (res.Y ** 2).sum(0))
    return num / den


def invariant_checks(res: EigenResult, label: str, criterion: int = 8) -> list[Check]:
    log = res.invariant_log
    biorth = max((d["biorth"] for d in log), default=0.0)
    cross = max((d["cross_gram"] for d in log), default=0.0)
    steps = np.diff(res.history.nev_conv)
    return [
        Check(criterion, f"{label}: U^T B V deviation", bool(log) and biorth <= INVARIANT_TOL,
              f"max {biorth:.2e} over {len(log)} samples"),
        Check(criterion, f"{label}: cross-Gram vs deflated pairs", bool(log) and cross <= INVARIANT_TOL,
              f"max {cross:.2e}"),
        Check(criterion, f"{label}: nevConv nondecreasing", bool(np.all(steps >= 0)),
              f"final {res.history.nev_conv[-1] if res.history.nev_conv else 0}"),
    ]


def aggregate_invariants(runs, label: str, criterion: int = 8) -> Check:
    """One summary check over many runs."""
    biorth = max((d["biorth"] for _, r in runs for d in r.invariant_log), default=0.0)
    cross = max((d["cross_gram"] for _, r in runs for d in r.invariant_log), default=0.0)
    failing = [name for name, r in runs
               if not all(c.passed for c in invariant_checks(r, name, criterion))]
    return Check(criterion, f"{label}: invariants over {len(runs)} runs", not failing,
                 f"max U^T B V deviation {biorth:.2e}, max cross-Gram {cross:.2e}"
                 + (f"; failing: {', '.join(failing)}" if failing else ""))


def _timed_solve(problem, cfg, **kw):
    t0 = time.perf_counter()
    res = solve(problem.K, problem.M, problem.ip, cfg, **kw)
    return res, time.perf_counter() - t0


def suite_accuracy_spd() -> list[Check]:
    pr = make_T_problem(1000, 0)
    cfg = BospConfig(nev=10, nb=10, tol=1e-10, check_every=1)
    res, wall = _timed_solve(pr, cfg, rank_hint=0)
    exact = np.array([pr.analytic.eigenvalue(l) for l in range(1, 11)])
    rel = np.abs(res.lambdas - exact) / exact
    vec = []
    for l in range(10):
        v = pr.analytic.eigenvector(l + 1)[0]
        v = v / np.linalg.norm(v)
        x = res.X[:, l] / np.linalg.norm(res.X[:, l])
        vec.append(min(np.linalg.norm(x - v), np.linalg.norm(x + v)))
    vec = np.array(vec)
    pair = pairing_residuals(res, pr.K, pr.M)
    return [
        Check(1, "T(0) converged", res.converged, f"{res.iterations} iterations"),
        Check(1, "T(0) eigenvalues vs 4 sin^2", bool(np.all(rel <= 1e-10)),
              f"max relative error {rel.max():.2e}"),
        Check(1, "T(0) lambda_1 vs reference", abs(res.lambdas[0] - T0_LAMBDA1) <= 1e-12 * T0_LAMBDA1,
              f"{res.lambdas[0]:.15E}"),
        Check(1, "T(0) eigenvectors vs sine vectors", bool(np.all(vec <= 1e-8)),
              "errors " + " ".join(f"{e:.1e}" for e in vec)),
        Check(1, "T(0) runtime", wall <= 30.0, f"{wall:.1f} s"),
        Check(10, "T(0) reflected pairs", bool(np.all(pair <= cfg.tol)),
              f"max {pair.max():.2e}"),
        *invariant_checks(res, "T(0) n=1000"),
    ]


def suite_accuracy_spsd() -> list[Check]:
    pr = make_T_problem(1000, -1)
    cfg = BospConfig(nev=10, nb=10, tol=1e-10, check_every=1)
    res, wall = _timed_solve(pr, cfg)
    rel = np.abs(res.lambdas - TM1_REFERENCE) / TM1_REFERENCE
    pair = pairing_residuals(res, pr.K, pr.M)
    ns = pr.analytic.nullspace
    # <y0, x> and <x0, y> vanish for eigenvectors of nonzero eigenvalues.
    x0, y0 = ns.X0[:, 0], ns.Y0[:, 0]
    orth = max(np.max(np.abs(y0 @ res.X) / (np.linalg.norm(y0) * np.linalg.norm(res.X, axis=0))),
               np.max(np.abs(x0 @ res.Y) / (np.linalg.norm(x0) * np.linalg.norm(res.Y, axis=0))))
    return [
        Check(2, "T(-1) converged", res.converged, f"{res.iterations} iterations, r={res.nullspace_rank}"),
        Check(2, "T(-1) eigenvalues vs reference", bool(np.all(rel <= 1e-9)),
              f"max relative error {rel.max():.2e}"),
        Check(2, "T(-1) no zero eigenvalue", bool(res.lambdas.min() > 1e-8),
              f"min {res.lambdas.min():.3e}"),
        Check(2, "T(-1) eigenvectors orthogonal to nullspace chain", orth <= 1e-8, f"{orth:.2e}"),
        Check(2, "T(-1) runtime", wall <= 60.0, f"{wall:.1f} s"),
        Check(10, "T(-1) reflected pairs", bool(np.all(pair <= cfg.tol)),
              f"max {pair.max():.2e}"),
        *invariant_checks(res, "T(-1) n=1000"),
    ]


def _oracle_match(problem, nev, tol=1e-10):
    res = solve(problem.K, problem.M, problem.ip,
                BospConfig(nev=nev, tol=tol, check_every=1))
    ref = dense_lrep_oracle(problem.dense())
    rel = np.abs(res.lambdas - ref.lambdas[:nev]) / ref.lambdas[:nev]
    K, M, ip = problem.K, problem.M, problem.ip
    lam = res.lambdas
    nK = np.linalg.norm(K.to_dense(), 2)
    nM = np.linalg.norm(M.to_dense(), 2)
    scale = np.linalg.norm(res.X, axis=0) + np.linalg.norm(res.Y, axis=0)
    r1 = np.linalg.norm(K.apply(res.X) - ip.apply_weight(res.Y) * lam, axis=0) / ((nK + lam) * scale)
    r2 = np.linalg.norm(M.apply(res.Y) - ip.apply_weight(res.X) * lam, axis=0) / ((nM + lam) * scale)
    ident = max(r1.max(), r2.max(), res.biorth_deviation)
    return res, float(rel.max()), float(ident)


def suite_oracle() -> list[Check]:
    t0 = time.perf_counter()
    worst_rel = worst_id = 0.0
    failures, runs = [], []
    cases = [(f"random-spd seed={s}", make_random_spd_problem(10 + s, 10.0 ** (1 + s % 3), s),
              max(2, (10 + s) // 4)) for s in range(20)]
    cases += [("t0 n=20", make_T_problem(20, 0), 6), ("tm1 n=20", make_T_problem(20, -1), 6),
              ("t0 n=8 full", make_T_problem(8, 0), 8), ("tm1 n=8 full", make_T_problem(8, -1), 7)]
    for label, problem, nev in cases:
        res, rel, ident = _oracle_match(problem, nev)
        runs.append((label, res))
        worst_rel, worst_id = max(worst_rel, rel), max(worst_id, ident)
        if rel > 1e-8 or ident > 1e-8 or not res.converged:
            failures.append(label)
    wall = time.perf_counter() - t0
    checks = [
        Check(4, "oracle eigenvalues", worst_rel <= 1e-8 and not failures,
              f"max relative error {worst_rel:.2e} over {len(cases)} problems"
              + (f"; failing: {', '.join(failures)}" if failures else "")),
        Check(4, "oracle residual identities", worst_id <= 1e-8, f"max {worst_id:.2e}"),
        Check(4, "oracle runtime", wall <= 60.0, f"{wall:.1f} s"),
    ]
    checks.append(aggregate_invariants(runs, "oracle"))
    return checks


def suite_moving_equivalence() -> list[Check]:
    pr = make_T_problem(1000, 0)
    out = {}
    for moving in (True, False):
        cfg = BospConfig(nev=300, nb=60, tol=1e-8, moving=moving, check_every=5)
        out[moving] = _timed_solve(pr, cfg, rank_hint=0)
    (on, t_on), (off, t_off) = out[True], out[False]
    rel = np.max(np.abs(on.lambdas - off.lambdas) / off.lambdas)
    width = (on.config.s + 2) * on.config.nb
    return [
        Check(6, "moving on/off converged", on.converged and off.converged,
              f"{on.iterations} / {off.iterations} iterations"),
        Check(6, "moving on/off eigenvalues agree", rel <= 1e-8, f"max relative difference {rel:.2e}"),
        Check(6, "moving max width(U)", on.max_width == width,
              f"{on.max_width} (expected {width}); without moving {off.max_width}"),
        Check(6, "moving wall time not slower", t_on <= t_off, f"{t_on:.1f} s vs {t_off:.1f} s"),
        *invariant_checks(on, "moving on"),
        *invariant_checks(off, "moving off"),
    ]


def suite_regression() -> list[Check]:
    pr = make_T_problem(500, 0)
    res = solve(pr.K, pr.M, cfg=BospConfig(nev=10, nb=10, tol=1e-10, check_every=1))
    betas = np.array([regression_coefficients(res.history, l).beta for l in range(10)])
    return [
        Check(7, "superlinear fit beta > 1", int(np.sum(betas > 1.0)) >= 8,
              f"{int(np.sum(betas > 1.0))}/10 above 1; beta = "
              + " ".join(f"{b:.3f}" for b in betas)),
        *invariant_checks(res, "T(0) n=500"),
    ]


def suite_biorth_stability() -> list[Check]:
    rows = biorth_bench()
    by_n = {r.n: r for r in rows}
    ordered = all(r.mgs_residual <= r.cgs_residual for r in rows)
    ratio = by_n[20].cgs_residual / by_n[20].mgs_residual
    return [
        Check(3, "MGS residual <= CGS residual", ordered,
              " ".join(f"n={r.n}:{r.mgs_residual:.1e}/{r.cgs_residual:.1e}" for r in rows)),
        Check(3, "CGS/MGS ratio at n=20", ratio >= 1e3, f"{ratio:.2e}"),
        Check(3, "MGS residual at n=8", by_n[8].mgs_residual <= 1e-6, f"{by_n[8].mgs_residual:.2e}"),
    ]


def _random_spd_matrix(d, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = 10.0 ** rng.uniform(-1.5, 1.5, d)
    A = (Q * w) @ Q.T
    return 0.5 * (A + A.T)


def suite_small_solver(count: int = 200, seed: int = 2024) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = {"biorth": 0.0, "K": 0.0, "M": 0.0, "oracle": 0.0}
    for _ in range(count):
        d = int(rng.integers(1, 51))
        p = ProjectedLrep(_random_spd_matrix(d, rng), _random_spd_matrix(d, rng))
        sol = solve_small_lrep(p)
        lam = sol.lambdas
        worst["biorth"] = max(worst["biorth"], np.abs(sol.Xhat.T @ sol.Yhat - np.eye(d)).max())
        rK = np.linalg.norm(p.Khat @ sol.Xhat - sol.Yhat * lam) / (
            np.linalg.norm(p.Khat) * np.linalg.norm(sol.Xhat))
        rM = np.linalg.norm(p.Mhat @ sol.Yhat - sol.Xhat * lam) / (
            np.linalg.norm(p.Mhat) * np.linalg.norm(sol.Yhat))
        worst["K"], worst["M"] = max(worst["K"], rK), max(worst["M"], rM)
        ref = dense_lrep_oracle(p)
        worst["oracle"] = max(worst["oracle"], np.max(np.abs(lam - ref.lambdas) / ref.lambdas))
    return [
        Check(5, "Xhat^T Yhat = I", worst["biorth"] <= 1e-10, f"max {worst['biorth']:.2e}"),
        Check(5, "Khat Xhat = Yhat Lambda", worst["K"] <= 1e-9, f"max {worst['K']:.2e}"),
        Check(5, "Mhat Yhat = Xhat Lambda", worst["M"] <= 1e-9, f"max {worst['M']:.2e}"),
        Check(5, "eigenvalues vs dense oracle", worst["oracle"] <= 1e-10,
              f"max relative error {worst['oracle']:.2e} over {count} pairs"),
    ]


def suite_generalized() -> list[Check]:
    base = make_fd_laplacian_problem(3)
    n = base.n
    checks, runs = [], []
    worst = 0.0
    for seed in range(3):
        b = np.random.default_rng(seed).uniform(0.5, 2.0, n)
        gp = make_generalized_problem(base, np.diag(b))
        res = solve(gp.K, gp.M, gp.ip, BospConfig(nev=8, tol=1e-11, check_every=1))
        K, M = base.K.to_dense(), base.M.to_dense()
        ref = dense_lrep_oracle((K / b[:, None], M / b[:, None]))
        worst = max(worst, np.max(np.abs(res.lambdas - ref.lambdas[:8]) / ref.lambdas[:8]))
        runs.append((f"B=diag seed={seed}", res))
    checks.insert(0, Check(9, "B = diag vs transformed oracle", worst <= 1e-9,
                           f"max relative error {worst:.2e}"))

    pr = make_T_problem(60, 0)
    cfg = BospConfig(nev=6, tol=1e-10)
    plain = solve(pr.K, pr.M, None, cfg)
    eye = solve(pr.K, pr.M, InnerProduct(LinearOperator.identity(pr.n)), cfg)
    diff = np.max(np.abs(plain.lambdas - eye.lambdas) / plain.lambdas)
    checks.insert(1, Check(9, "B = I matches standard path", diff <= 1e-12,
                           f"max relative difference {diff:.2e}"))
    checks.append(aggregate_invariants(runs, "generalized"))
    return checks


SUITES = {
    "accuracy-spd": suite_accuracy_spd,
    "accuracy-spsd": suite_accuracy_spsd,
    "oracle": suite_oracle,
    "moving-equivalence": suite_moving_equivalence,
    "regression": suite_regression,
    "biorth-stability": suite_biorth_stability,
    "small-solver": suite_small_solver,
    "generalized": suite_generalized,
}


def run_suite(name: str, stream=None) -> list[Check]:
    checks = SUITES[name]()
    if stream is not None:
        for c in checks:
            print(c.line(), file=stream)
    return checks
