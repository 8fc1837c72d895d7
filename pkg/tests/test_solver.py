import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrep.biorth import biorth_against, mgs_biorth, refine_biorth
from lrep.errors import ContractViolation, NotEnoughSamples, RankMismatch
from lrep.linalg import InnerProduct, LinearOperator
from lrep.nullspace import GeneralizedNullspace, analytic_nullspace_T, compute_nullspace
from lrep.problems import make_random_spd_problem, make_T_problem
from lrep.projected import dense_lrep_oracle
from lrep.solver import (BospConfig, ResidualHistory, check_state, default_batch_size,
                         initialize, iterate_once, normalized_residuals,
                         regression_coefficients, solve)


@pytest.mark.parametrize("nev,nb", [(1, 1), (4, 4), (5, 1), (10, 2), (12, 3), (300, 60),
                                    (1000, 150), (5000, 150)])
def test_default_batch_size(nev, nb):
    assert default_batch_size(nev) == nb


def test_config_defaults_and_errors():
    cfg = BospConfig(nev=300, nb=60)
    assert cfg.moving and cfg.window == 180 and cfg.tol == 1e-8 and cfg.ngs == 1 and cfg.s == 3
    assert not BospConfig(nev=10, nb=10).moving
    for bad in (dict(nev=0), dict(nev=5, nb=6), dict(nev=5, s=1), dict(nev=5, tol=0.0),
                dict(nev=5, ngs=0)):
        with pytest.raises(ContractViolation):
            BospConfig(**bad)


def _uv_checks(state):
    U, V = state.U, state.V
    dev = np.abs(state.ip.gram(U, V) - np.eye(U.shape[1])).max()
    return dev, check_state(state)["cross_gram"]


def test_initialize_postconditions():
    pr = make_T_problem(60, -1)
    K, M = pr.K, pr.M
    ns = analytic_nullspace_T(60)
    cfg = BospConfig(nev=4, nb=2)
    st_ = initialize(K, M, None, ns, cfg)
    dev, cross = _uv_checks(st_)
    assert dev <= 1e-12 and cross <= 1e-12
    assert st_.X.shape[1] == cfg.window and st_.P.shape[1] == st_.W.shape[1] == 2
    again = initialize(K, M, None, ns, cfg)
    np.testing.assert_array_equal(st_.U, again.U)
    np.testing.assert_array_equal(st_.V, again.V)


def test_initialize_without_nullspace_is_plain_biorth():
    pr = make_T_problem(30, 0)
    cfg = BospConfig(nev=2, nb=1)
    st_ = initialize(pr.K, pr.M, None, GeneralizedNullspace.empty(30), cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    blocks = [rng.uniform(-1, 1, (30, w)) for w in (2, 2, 1, 1, 1, 1)]
    out = mgs_biorth(np.hstack(blocks[0::2]), np.hstack(blocks[1::2]))
    P, Q = refine_biorth(out.P, out.Q)
    np.testing.assert_array_equal(st_.U, P)
    np.testing.assert_array_equal(st_.V, Q)


def test_iterate_restores_biorth():
    pr = make_T_problem(200, -1)
    ns = compute_nullspace(pr.K, pr.M)
    cfg = BospConfig(nev=6, nb=3)
    st_ = initialize(pr.K, pr.M, None, ns, cfg)
    for _ in range(5):
        iterate_once(st_, pr.K, pr.M, None, ns, cfg)
        dev, cross = _uv_checks(st_)
        assert dev <= 1e-10 and cross <= 1e-10
        rep = check_state(st_)
        assert rep["biorth"] <= 1e-10 and rep["cross_gram"] <= 1e-10


def test_fixed_point_exits_in_one_iteration():
    n = 40
    pr = make_T_problem(n, 0)
    cfg = BospConfig(nev=2, nb=2)
    ns = GeneralizedNullspace.empty(n)
    st_ = initialize(pr.K, pr.M, None, ns, cfg)
    k = st_.X.shape[1]
    V = np.column_stack([pr.analytic.eigenvector(l)[0] for l in range(1, k + 1)])
    V /= np.linalg.norm(V, axis=0)
    st_.X, st_.Y = V.copy(order="F"), V.copy(order="F")
    P, Q = biorth_against([(V, V)], np.hstack([st_.P, st_.W]), np.hstack([st_.Q, st_.Z]))
    out = mgs_biorth(P, Q)
    st_.P, st_.Q = out.P[:, :2], out.Q[:, :2]
    st_.W, st_.Z = out.P[:, 2:], out.Q[:, 2:]
    iterate_once(st_, pr.K, pr.M, None, ns, cfg)
    assert st_.done and st_.iter == 1
    assert st_.P.shape[1] == 0 and st_.W.shape[1] == 0


def test_T0_n100_nev5():
    pr = make_T_problem(100, 0)
    res = solve(pr.K, pr.M, cfg=BospConfig(nev=5, nb=5, tol=1e-10))
    exact = [pr.analytic.eigenvalue(l) for l in range(1, 6)]
    assert res.converged
    np.testing.assert_allclose(res.lambdas, exact, rtol=1e-10)
    assert np.all(res.residuals <= 1e-10)
    np.testing.assert_allclose(res.X.T @ res.Y, np.eye(5), atol=1e-10)


@pytest.mark.parametrize("s,nev", [(0, 8), (-1, 7)])
def test_full_spectrum_small(s, nev):
    pr = make_T_problem(8, s)
    res = solve(pr.K, pr.M, cfg=BospConfig(nev=nev, tol=1e-10))
    ref = dense_lrep_oracle(pr.dense()).lambdas
    assert len(ref) == nev
    np.testing.assert_allclose(res.lambdas, ref, rtol=1e-9)


@given(st.integers(2, 30), st.floats(1.0, 1e3), st.integers(0, 10 ** 5))
@settings(max_examples=15)
def test_random_spd_matches_oracle(n, cond, seed):
    pr = make_random_spd_problem(n, cond, seed)
    nev = max(1, n // 3)
    res = solve(pr.K, pr.M, cfg=BospConfig(nev=nev, tol=1e-10))
    ref = dense_lrep_oracle(pr.dense()).lambdas[:nev]
    assert res.converged
    np.testing.assert_allclose(res.lambdas, ref, rtol=1e-8)
    assert np.all(res.lambdas > 0) and np.all(np.diff(res.lambdas) >= 0)


def test_pairs_orthogonal_to_nullspace():
    pr = make_T_problem(100, -1)
    res = solve(pr.K, pr.M, cfg=BospConfig(nev=6, tol=1e-10))
    ns = pr.analytic.nullspace
    assert res.nullspace_rank == 1 and res.lambdas.min() > 0
    assert np.abs(ns.Y0.T @ res.X).max() <= 1e-10 * np.linalg.norm(ns.Y0) * np.linalg.norm(res.X)
    assert np.abs(ns.X0.T @ res.Y).max() <= 1e-10 * np.linalg.norm(ns.X0) * np.linalg.norm(res.Y)


def test_generalized_2I_halves():
    pr = make_T_problem(50, 0)
    ip = InnerProduct(LinearOperator.from_dense(2.0 * np.eye(50)))
    cfg = BospConfig(nev=4, tol=1e-11)
    half = solve(pr.K, pr.M, ip, cfg)
    base = solve(pr.K, pr.M, None, cfg)
    np.testing.assert_allclose(half.lambdas, base.lambdas / 2, rtol=1e-9)
    np.testing.assert_allclose(half.X.T @ (2 * half.Y), np.eye(4), atol=1e-10)


def test_not_converged_is_partial():
    pr = make_T_problem(300, 0)
    res = solve(pr.K, pr.M, cfg=BospConfig(nev=6, nb=2, max_outer_iter=4))
    assert not res.converged and res.iterations == 4
    assert res.lambdas.size == res.nev_conv < 6


def test_rank_hint_mismatch_propagates():
    pr = make_T_problem(20, -1)
    with pytest.raises(RankMismatch):
        solve(pr.K, pr.M, nev=2, rank_hint=0)


def test_nev_too_large():
    pr = make_T_problem(8, -1)
    with pytest.raises(ContractViolation):
        solve(pr.K, pr.M, nev=8)


def test_seed_determinism():
    pr = make_T_problem(120, 0)
    cfg = BospConfig(nev=4, rng_seed=3)
    a, b = solve(pr.K, pr.M, cfg=cfg), solve(pr.K, pr.M, cfg=cfg)
    np.testing.assert_array_equal(a.lambdas, b.lambdas)
    np.testing.assert_array_equal(a.X, b.X)


def test_history_layout_and_monotone_nevconv():
    pr = make_T_problem(200, 0)
    res = solve(pr.K, pr.M, cfg=BospConfig(nev=6, nb=2, tol=1e-9, check_every=1))
    h = res.history
    assert h.table.shape == (res.iterations, 6)
    assert len(list(h.rows())) == res.iterations * 6
    assert np.all(np.diff(h.nev_conv) >= 0) and h.nev_conv[-1] == 6
    assert len(res.invariant_log) >= res.iterations
    assert all(d["lambdas_sorted"] for d in res.invariant_log)


def test_moving_width_bound():
    pr = make_T_problem(400, 0)
    on = solve(pr.K, pr.M, cfg=BospConfig(nev=40, nb=4, moving=True, tol=1e-8))
    off = solve(pr.K, pr.M, cfg=BospConfig(nev=40, nb=4, moving=False, tol=1e-8))
    assert on.max_width == (3 + 2) * 4
    assert on.stats.moves > 0
    np.testing.assert_allclose(on.lambdas, off.lambdas, rtol=1e-8)


def test_normalized_residual_of_exact_pair():
    pr = make_T_problem(30, 0)
    x, y = pr.analytic.eigenvector(2)
    lam = pr.analytic.eigenvalue(2)
    r = normalized_residuals(pr.K, pr.M, InnerProduct(), x, y, [lam])
    assert r[0] <= 1e-15


def test_regression_exact_model():
    r = [1e-1]
    for _ in range(8):
        r.append(0.1 * r[-1] ** 1.1)
    fit = regression_coefficients(r)
    assert fit.alpha == pytest.approx(0.1, rel=1e-10)
    assert fit.beta == pytest.approx(1.1, rel=1e-10)
    alpha, beta = fit
    assert not fit.degenerate and fit.npairs == 8


def test_regression_constant_history():
    fit = regression_coefficients([1e-3] * 6)
    assert fit.degenerate and fit.beta == 0.0 and fit.alpha == pytest.approx(1e-3)


def test_regression_not_enough_samples():
    with pytest.raises(NotEnoughSamples):
        regression_coefficients([1e-2, 1e-3])
    h = ResidualHistory(1, tol=1e-2)
    for v in (1.0, 1e-3, 1e-4, 1e-5):
        h.record([v], [True], 0)
    with pytest.raises(NotEnoughSamples):
        regression_coefficients(h, 0)


def test_regression_noise_floor():
    h = ResidualHistory(1, tol=1e-10)
    for v in (1e-1, 1e-2, 1e-3, 1e-4, 3e-12, 5e-12):
        h.record([v], [True], 0)
    fit = regression_coefficients(h, 0)
    assert fit.npairs == 3 and fit.beta == pytest.approx(1.0)
