import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrep.errors import DegenerateSpectrum, NullspaceLeak
from lrep.jacobi import jacobi_svd, svd_square
from lrep.linalg import LinearOperator
from lrep.problems import tridiag_T
from lrep.projected import (ProjectedLrep, assemble_projected, dense_lrep_oracle,
                            solve_small_lrep)


def spd(d, rng, spread=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = (Q * 10.0 ** rng.uniform(-spread / 2, spread / 2, d)) @ Q.T
    return 0.5 * (A + A.T)


@given(st.integers(1, 80), st.integers(0, 10 ** 6))
def test_jacobi_svd_reconstructs(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    U, s, V = jacobi_svd(A)
    assert np.all(np.diff(s) <= 0)
    np.testing.assert_allclose(U @ np.diag(s) @ V.T, A, rtol=0, atol=1e-12 * max(1, s[0]))
    np.testing.assert_allclose(s, np.linalg.svd(A, compute_uv=False), rtol=1e-11)
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)


@pytest.mark.parametrize("method", ["jacobi", "lapack", "auto"])
def test_svd_methods_agree(rng, method):
    A = spd(30, rng)
    U, s, V = svd_square(A, method)
    np.testing.assert_allclose(U * s @ V.T, A, atol=1e-12 * s[0])
    with pytest.raises(ValueError):
        svd_square(A, "qr")


def test_jacobi_high_relative_accuracy():
    # Graded matrix: Jacobi keeps tiny singular values relatively accurate.
    D = np.diag(10.0 ** -np.arange(0, 16, 3.0))
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))
    A = D @ Q
    _, s, _ = jacobi_svd(A)
    np.testing.assert_allclose(np.sort(s), np.sort(np.diag(D)), rtol=1e-12)


def test_assemble_examples():
    K = LinearOperator.from_sparse(tridiag_T(3, 0.0))
    e1 = np.eye(3)[:, :1]
    p = assemble_projected(K, K, e1, e1)
    assert p.Khat[0, 0] == 2.0 and p.Mhat[0, 0] == 2.0
    p = assemble_projected(K, K, np.eye(3), np.eye(3))
    np.testing.assert_array_equal(p.Khat, tridiag_T(3, 0.0).toarray())


def test_assemble_detects_leak():
    K = LinearOperator.from_sparse(tridiag_T(4, -1.0))
    ones = np.ones((4, 1))
    with pytest.raises(NullspaceLeak):
        assemble_projected(K, K, ones, ones)


def test_d1_closed_form():
    sol = solve_small_lrep(ProjectedLrep(np.array([[4.0]]), np.array([[9.0]])))
    assert sol.lambdas[0] == pytest.approx(6.0, rel=1e-15)
    assert abs(sol.Yhat[0, 0]) == pytest.approx(2 / np.sqrt(6), rel=1e-15)
    assert abs(sol.Xhat[0, 0]) == pytest.approx(3 / np.sqrt(6), rel=1e-15)
    assert sol.Xhat[0, 0] * sol.Yhat[0, 0] == pytest.approx(1.0, rel=1e-15)
    assert dense_lrep_oracle((np.array([[4.0]]), np.array([[9.0]]))).lambdas[0] == pytest.approx(6.0)


def test_identity_problem():
    sol = solve_small_lrep(ProjectedLrep(np.eye(4), np.eye(4)))
    np.testing.assert_allclose(sol.lambdas, 1.0, rtol=1e-15)
    np.testing.assert_allclose(sol.Xhat.T @ sol.Yhat, np.eye(4), atol=1e-15)


def test_diagonal_problem():
    p = ProjectedLrep(np.diag([1.0, 4.0]), np.diag([9.0, 1.0]))
    sol = solve_small_lrep(p)
    np.testing.assert_allclose(sol.lambdas, [2.0, 3.0], rtol=1e-15)
    np.testing.assert_allclose(p.Khat @ sol.Xhat, sol.Yhat * sol.lambdas, atol=1e-14)
    np.testing.assert_allclose(dense_lrep_oracle(p).lambdas, [2.0, 3.0], rtol=1e-10)


def test_T3_oracle():
    T = tridiag_T(3, 0.0).toarray()
    ref = [2 - np.sqrt(2), 2, 2 + np.sqrt(2)]
    np.testing.assert_allclose(dense_lrep_oracle((T, T)).lambdas, ref, rtol=1e-10)
    np.testing.assert_allclose(solve_small_lrep(ProjectedLrep(T, T)).lambdas, ref, rtol=1e-13)


def test_errors():
    with pytest.raises(NullspaceLeak):
        ProjectedLrep(np.array([[0.0, 0.0], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(DegenerateSpectrum):
        solve_small_lrep(ProjectedLrep(np.diag([1e-32, 1.0]), np.eye(2)))


@given(st.integers(1, 40), st.integers(0, 10 ** 6))
def test_small_solver_identities(d, seed):
    rng = np.random.default_rng(seed)
    p = ProjectedLrep(spd(d, rng), spd(d, rng))
    sol = solve_small_lrep(p)
    lam = sol.lambdas
    assert np.all(lam > 0) and np.all(np.diff(lam) >= 0)
    np.testing.assert_allclose(sol.Xhat.T @ sol.Yhat, np.eye(d), atol=1e-10)
    nK = np.linalg.norm(p.Khat) * np.linalg.norm(sol.Xhat)
    nM = np.linalg.norm(p.Mhat) * np.linalg.norm(sol.Yhat)
    assert np.linalg.norm(p.Khat @ sol.Xhat - sol.Yhat * lam) <= 1e-9 * nK
    assert np.linalg.norm(p.Mhat @ sol.Yhat - sol.Xhat * lam) <= 1e-9 * nM
    ref = dense_lrep_oracle(p)
    np.testing.assert_allclose(lam, ref.lambdas, rtol=1e-10)


def test_partial_k(rng):
    p = ProjectedLrep(spd(10, rng), spd(10, rng))
    full, part = solve_small_lrep(p), solve_small_lrep(p, k=3)
    np.testing.assert_array_equal(part.lambdas, full.lambdas[:3])


def test_oracle_with_weight(rng):
    K, M = spd(6, rng), spd(6, rng)
    b = rng.uniform(0.5, 2.0, 6)
    ref = dense_lrep_oracle((K / b[:, None], M / b[:, None]))
    got = dense_lrep_oracle((K, M, np.diag(b)))
    np.testing.assert_allclose(got.lambdas, ref.lambdas, rtol=1e-10)
    np.testing.assert_allclose(got.Xhat.T @ np.diag(b) @ got.Yhat, np.eye(6), atol=1e-9)
