import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrep.errors import RankMismatch
from lrep.linalg import InnerProduct, LinearOperator
from lrep.nullspace import analytic_nullspace_T, compute_nullspace, estimate_norm
from lrep.problems import tridiag_T


def ops(n, s):
    return (LinearOperator.from_sparse(tridiag_T(n, s)),
            LinearOperator.from_sparse(tridiag_T(n, 0.0)))


def test_spd_has_empty_nullspace():
    ns = compute_nullspace(*ops(20, 0.0))
    assert ns.r == 0 and ns.X0.shape == (20, 0)


def test_Tm1_n4():
    ns = compute_nullspace(*ops(4, -1.0))
    assert ns.r == 1
    x, y = ns.X0[:, 0], ns.Y0[:, 0]
    np.testing.assert_allclose(x / x[0], np.ones(4), rtol=1e-10)
    np.testing.assert_allclose(y / y[0], np.array([2, 3, 3, 2]) / 2, rtol=1e-10)
    assert x @ y == pytest.approx(1.0, abs=1e-12)


def test_diagonal_rank_two():
    K = LinearOperator.from_dense(np.diag([0.0, 0.0, 5.0]))
    ns = compute_nullspace(K, LinearOperator.identity(3))
    assert ns.r == 2
    np.testing.assert_allclose(ns.X0[2], 0.0, atol=1e-14)
    np.testing.assert_allclose(ns.X0.T @ ns.Y0, np.eye(2), atol=1e-12)


def test_rank_hint_mismatch():
    with pytest.raises(RankMismatch):
        compute_nullspace(*ops(10, -1.0), r_hint=2)
    assert compute_nullspace(*ops(10, -1.0), r_hint=1).r == 1


def test_analytic_prenormalization():
    a4 = analytic_nullspace_T(4, normalize=False)
    np.testing.assert_array_equal(a4.X0[:, 0], np.ones(4))
    np.testing.assert_array_equal(a4.Y0[:, 0], [2, 3, 3, 2])
    a5 = analytic_nullspace_T(5, normalize=False)
    np.testing.assert_array_equal(a5.Y0[:, 0], [2.5, 4, 4.5, 4, 2.5])


@given(st.integers(3, 300))
def test_analytic_chain(n):
    K, M = ops(n, -1.0)
    a = analytic_nullspace_T(n)
    assert np.abs(K.apply(a.X0)).max() <= 1e-14 * max(1, np.abs(a.X0).max())
    np.testing.assert_allclose(M.apply(a.Y0), a.X0, rtol=0, atol=4e-15 * np.abs(a.Y0).max())
    assert a.X0[:, 0] @ a.Y0[:, 0] == pytest.approx(1.0, rel=1e-13)
    np.testing.assert_allclose(a.Y0[::-1], a.Y0, rtol=1e-15)


@pytest.mark.parametrize("n", [5, 50, 400])
def test_computed_matches_analytic(n):
    K, M = ops(n, -1.0)
    ns = compute_nullspace(K, M)
    a = analytic_nullspace_T(n)
    sign = np.sign(ns.X0[0, 0])
    np.testing.assert_allclose(sign * ns.X0, a.X0, rtol=1e-8)
    np.testing.assert_allclose(sign * ns.Y0, a.Y0, rtol=1e-8)
    dev = ns.deviations(K, M)
    assert max(dev.values()) <= 1e-10


def test_weighted_chain(rng):
    n = 30
    K, M = ops(n, -1.0)
    b = rng.uniform(0.5, 2.0, n)
    ip = InnerProduct(LinearOperator.from_dense(np.diag(b)))
    ns = compute_nullspace(K, M, ip=ip)
    assert ns.r == 1
    assert max(ns.deviations(K, M).values()) <= 1e-10


def test_estimate_norm():
    K, _ = ops(50, 0.0)
    assert estimate_norm(K, iters=300) == pytest.approx(np.linalg.norm(K.to_dense(), 2), rel=1e-2)
