import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrep.bench import biorth_bench, hilbert_columns, lauchli
from lrep.biorth import (BiorthBasis, biorth_against, biorth_residual, cgs_biorth,
                         mgs_biorth, refine_biorth)
from lrep.errors import ContractViolation
from lrep.linalg import InnerProduct, LinearOperator
from lrep.problems import tridiag_T

E = np.eye(3)


@pytest.mark.parametrize("method", [mgs_biorth, cgs_biorth])
def test_already_biorthonormal(method):
    out = method(E[:, :2], E[:, :2])
    np.testing.assert_array_equal(out.P, E[:, :2])
    np.testing.assert_array_equal(out.Q, E[:, :2])
    assert out.dropped_columns == []


def test_single_column_scaling():
    out = mgs_biorth(np.array([1.0, 0.0]), np.array([2.0, 0.0]))
    np.testing.assert_allclose(out.P[:, 0], [1 / np.sqrt(2), 0], rtol=1e-15)
    np.testing.assert_allclose(out.Q[:, 0], [np.sqrt(2), 0], rtol=1e-15)
    assert out.P[:, 0] @ out.Q[:, 0] == pytest.approx(1.0, abs=1e-15)


def test_negative_eta_sign():
    out = mgs_biorth(np.array([1.0, 0.0]), np.array([-4.0, 0.0]))
    assert out.P[0, 0] == pytest.approx(-0.5) and out.Q[0, 0] == pytest.approx(-2.0)


@pytest.mark.parametrize("method", [mgs_biorth, cgs_biorth])
def test_dependent_column_dropped(method):
    X = np.column_stack([E[:, 0], E[:, 0]])
    out = method(X, X)
    assert out.kept_columns == [0] and out.dropped_columns == [1]


def test_cgs_worse_than_mgs_at_12():
    X, Y = hilbert_columns(12, 6), lauchli(12)[:, :6]
    cgs = cgs_biorth(X, Y, drop_tol=0.0, reorth=False)
    mgs = mgs_biorth(X, Y, drop_tol=0.0, reorth=False)
    assert biorth_residual(cgs.P, cgs.Q) > biorth_residual(mgs.P, mgs.Q)


def test_residual_examples():
    assert biorth_residual(E[:, :2], E[:, :2]) == 0.0
    P = np.column_stack([E[:, 0], E[:, 0]])
    assert biorth_residual(P, P) == pytest.approx(1.0, rel=1e-14)


def test_mgs_at_8_within_band():
    X, Y = hilbert_columns(8, 4), lauchli(8)[:, :4]
    mgs = mgs_biorth(X, Y, drop_tol=0.0, reorth=False)
    assert biorth_residual(mgs.P, mgs.Q) <= 1e-6


def test_against_examples(rng):
    X, Y = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    W, Z = biorth_against([], X, Y)
    np.testing.assert_array_equal(W, X)
    W, Z = biorth_against([BiorthBasis(E[:, :1], E[:, :1])], E[:, :1], E[:, :1])
    assert np.all(W == 0) and np.all(Z == 0)
    Xo = np.array([[0.0], [1.0], [2.0]])
    W, _ = biorth_against([BiorthBasis(E[:, :1], E[:, :1])], Xo, Xo)
    assert np.linalg.norm(W - Xo) <= 1e-14 * np.linalg.norm(Xo)
    with pytest.raises(ContractViolation):
        biorth_against([BiorthBasis(np.eye(4)[:, :1], np.eye(4)[:, :1])], X, Y)


def _weight(n):
    return InnerProduct(LinearOperator.from_sparse(tridiag_T(n, 0.0)))


@given(st.integers(1, 6), st.integers(0, 10 ** 6), st.booleans())
def test_mgs_postcondition(m, seed, weighted):
    rng = np.random.default_rng(seed)
    n = 12
    ip = _weight(n) if weighted else InnerProduct()
    X, Y = rng.standard_normal((n, m)), rng.standard_normal((n, m))
    out = mgs_biorth(X, Y, ip)
    k = out.P.shape[1]
    assert k + len(out.dropped_columns) == m
    assert np.abs(ip.gram(out.P, out.Q) - np.eye(k)).max() <= 1e-10 * max(
        1.0, np.linalg.norm(out.P) * np.linalg.norm(out.Q))


@given(st.integers(0, 10 ** 6))
def test_span_preserved(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((10, 4)), rng.standard_normal((10, 4))
    out = mgs_biorth(X, Y)
    # Triangular mixing: column j of P lies in span(X[:, :j+1]).
    for j in range(out.P.shape[1]):
        coef, *_ = np.linalg.lstsq(X[:, :j + 1], out.P[:, j], rcond=None)
        assert np.linalg.norm(X[:, :j + 1] @ coef - out.P[:, j]) <= 1e-9 * np.linalg.norm(out.P[:, j])


@given(st.integers(0, 10 ** 6))
def test_against_then_orthogonal(seed):
    rng = np.random.default_rng(seed)
    n, ip = 15, _weight(15)
    b = mgs_biorth(rng.standard_normal((n, 3)), rng.standard_normal((n, 3)), ip)
    basis = BiorthBasis(b.P, b.Q, ip)
    W, Z = biorth_against([basis], rng.standard_normal((n, 2)), rng.standard_normal((n, 2)), ip)
    scale = np.linalg.norm(b.P) * np.linalg.norm(b.Q) * (1 + np.linalg.norm(W) + np.linalg.norm(Z))
    assert np.abs(basis.BQ.T @ W).max() <= 1e-12 * scale
    assert np.abs(basis.BP.T @ Z).max() <= 1e-12 * scale


@given(st.integers(0, 10 ** 6), st.floats(1e-8, 1e-3))
def test_refine_restores_biorth(seed, noise):
    rng = np.random.default_rng(seed)
    out = mgs_biorth(rng.standard_normal((20, 5)), rng.standard_normal((20, 5)))
    P = out.P + noise * rng.standard_normal(out.P.shape)
    Q = out.Q + noise * rng.standard_normal(out.Q.shape)
    P2, Q2 = refine_biorth(P, Q)
    assert biorth_residual(P2, Q2) <= 1e-12 * max(1.0, np.linalg.norm(P2) * np.linalg.norm(Q2))
    # Spans are unchanged.
    for A, B in ((P, P2), (Q, Q2)):
        coef, *_ = np.linalg.lstsq(A, B, rcond=None)
        assert np.linalg.norm(A @ coef - B) <= 1e-10 * np.linalg.norm(B)


def test_refine_balances_norms(rng):
    out = mgs_biorth(rng.standard_normal((8, 3)), rng.standard_normal((8, 3)))
    c = np.array([1e6, 1.0, 1e-6])
    P, Q = refine_biorth(out.P * c, out.Q / c)
    ratio = np.linalg.norm(P, axis=0) / np.linalg.norm(Q, axis=0)
    np.testing.assert_allclose(ratio, 1.0, rtol=1e-6)
    assert biorth_residual(P, Q) <= 1e-13


def test_bench_table_shape():
    rows = biorth_bench()
    assert [r.n for r in rows] == [4, 8, 12, 16, 20]
    assert rows[0].cgs_residual <= 1e-10 and rows[0].mgs_residual <= 1e-10
    assert all(r.mgs_residual <= r.cgs_residual for r in rows)
    assert rows[-1].cgs_residual > 1 and rows[-1].mgs_residual < 1e-1
    np.testing.assert_allclose([r.cond_Y for r in rows[:2]], [1.41e3, 2.00e3], rtol=3e-3)
    with pytest.raises(ValueError):
        biorth_bench([5])
