"""Block-vector kernels, operators and inner products.

Every vector quantity in the solver is a *block*: a float64 ``ndarray`` of
shape ``(n, m)`` stored in Fortran (column-major) order, so ``X[:, j]`` is a
contiguous view that aliases the block.  Operators only need to provide a
block-to-block product; dense arrays and scipy CSR matrices are wrapped for
convenience.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation

__all__ = [
    "LinearOperator",
    "InnerProduct",
    "CGInfo",
    "as_block",
    "empty_block",
    "block_apply",
    "block_inner",
    "block_axpy",
    "block_product",
    "cg_solve",
    "symmetrize",
    "mirror_lower",
]


def as_block(X, copy=False) -> np.ndarray:
    """Return ``X`` as a 2-D column-major float64 block.

    1-D input becomes a single column.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ContractViolation(f"block must be 1-D or 2-D, got ndim={X.ndim}")
    if copy:
        return np.array(X, order="F", copy=True)
    return np.asfortranarray(X)


def empty_block(n: int, m: int = 0) -> np.ndarray:
    return np.zeros((n, m), order="F")


def symmetrize(A: np.ndarray) -> np.ndarray:
    """``(A + A^T)/2``; the result is bit-exactly symmetric."""
    return 0.5 * (A + A.T)


def mirror_lower(A: np.ndarray) -> np.ndarray:
    """Copy the strict lower triangle of ``A`` onto the upper one."""
    L = np.tril(A)
    return L + np.tril(A, -1).T


class LinearOperator:
    """A square real operator known only through block products.

    Parameters
    ----------
    dim : int
        Size ``n`` of the operator.
    matmat : callable
        Maps an ``(n, m)`` block to an ``(n, m)`` block.
    kind : str
        One of ``"dense"``, ``"sparse-csr"``, ``"matrix-free-callback"``.
    matrix : optional
        The stored matrix for dense/sparse kinds.

    The operator counts how many columns it has been applied to in
    ``ncols_applied``, which the solver reports as its matvec count.
    """

    KINDS = ("dense", "sparse-csr", "matrix-free-callback")

    def __init__(self, dim: int, matmat: Callable, kind="matrix-free-callback",
                 matrix=None, name: str | None = None):
        if kind not in self.KINDS:
            raise ContractViolation(f"unknown operator kind {kind!r}")
        self.dim = int(dim)
        self._matmat = matmat
        self.kind = kind
        self.matrix = matrix
        self.name = name
        self.ncols_applied = 0

    @classmethod
    def from_dense(cls, A, name=None) -> "LinearOperator":
        A = np.array(A, dtype=np.float64, order="F")
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ContractViolation(f"operator must be square, got {A.shape}")
        return cls(A.shape[0], A.__matmul__, "dense", A, name)

    @classmethod
    def from_sparse(cls, A, name=None) -> "LinearOperator":
        A = sp.csr_matrix(A, dtype=np.float64)
        A.sum_duplicates()
        A.sort_indices()
        if A.shape[0] != A.shape[1]:
            raise ContractViolation(f"operator must be square, got {A.shape}")
        return cls(A.shape[0], A.__matmul__, "sparse-csr", A, name)

    @classmethod
    def from_callback(cls, dim, matmat, name=None) -> "LinearOperator":
        return cls(dim, matmat, "matrix-free-callback", None, name)

    @classmethod
    def identity(cls, n, name="I") -> "LinearOperator":
        return cls(n, lambda X: np.array(X, order="F", copy=True),
                   "matrix-free-callback", None, name)

    @classmethod
    def wrap(cls, A, name=None) -> "LinearOperator":
        """Coerce an ndarray, scipy sparse matrix or operator."""
        if isinstance(A, LinearOperator):
            return A
        if sp.issparse(A):
            return cls.from_sparse(A, name)
        return cls.from_dense(A, name)

    def apply(self, X) -> np.ndarray:
        return block_apply(self, X)

    def __matmul__(self, X):
        return self.apply(X)

    def to_dense(self) -> np.ndarray:
        """Materialize the operator (test scale only)."""
        if self.kind == "dense":
            return np.array(self.matrix)
        if self.kind == "sparse-csr":
            return self.matrix.toarray()
        return self.apply(np.eye(self.dim))

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<LinearOperator{label} n={self.dim} kind={self.kind}>"


def block_apply(op: LinearOperator, X) -> np.ndarray:
    """Apply ``op`` to every column of ``X``."""
    X = as_block(X)
    if X.shape[0] != op.dim:
        raise ContractViolation(
            f"operator of size {op.dim} applied to block with {X.shape[0]} rows")
    if X.shape[1] == 0:
        return empty_block(op.dim, 0)
    Y = op._matmat(X)
    if sp.issparse(Y):
        Y = Y.toarray()
    Y = as_block(Y)
    if Y.shape != X.shape:
        raise ContractViolation(
            f"operator returned shape {Y.shape} for input {X.shape}")
    op.ncols_applied += X.shape[1]
    return Y


@dataclass
class InnerProduct:
    """Euclidean or ``B``-weighted inner product ``<x, y> = x^T B y``."""

    weight: LinearOperator | None = None
    napplied: int = field(default=0, compare=False)

    @property
    def is_identity(self) -> bool:
        return self.weight is None

    def apply_weight(self, X) -> np.ndarray:
        """``B X`` (or ``X`` itself when unweighted; no copy is made)."""
        X = as_block(X)
        if self.weight is None:
            return X
        return block_apply(self.weight, X)

    def gram(self, X, Y, BY=None) -> np.ndarray:
        """``X^T B Y``; pass a precomputed ``BY`` to skip the weight product."""
        X, Y = as_block(X), as_block(Y)
        if X.shape[0] != Y.shape[0]:
            raise ContractViolation(
                f"inner product of blocks with {X.shape[0]} and {Y.shape[0]} rows")
        if BY is None:
            BY = self.apply_weight(Y)
        return X.T @ BY

    def norms(self, X) -> np.ndarray:
        X = as_block(X)
        BX = self.apply_weight(X)
        return np.sqrt(np.einsum("ij,ij->j", X, BX))


def block_inner(ip: InnerProduct, X, Y) -> np.ndarray:
    """Gram matrix ``G[i, j] = <X[:, i], Y[:, j]>`` under ``ip``."""
    return ip.gram(X, Y)


def block_product(X, C) -> np.ndarray:
    """``X @ C`` as a column-major block."""
    X, C = as_block(X), np.asarray(C, dtype=np.float64)
    if C.ndim == 1:
        C = C[:, None]
    if X.shape[1] != C.shape[0]:
        raise ContractViolation(f"cannot multiply {X.shape} by {C.shape}")
    return np.asfortranarray(X @ C)


def block_axpy(X, C, Y=None) -> np.ndarray:
    """Return ``Y - X @ C``; with ``Y`` omitted, return ``X @ C``.

    ``Y`` is not modified.
    """
    XC = block_product(X, C)
    if Y is None:
        return XC
    Y = as_block(Y)
    if Y.shape != XC.shape:
        raise ContractViolation(f"cannot subtract {XC.shape} from {Y.shape}")
    return np.asfortranarray(Y - XC)


@dataclass
class CGInfo:
    """Per-column outcome of :func:`cg_solve`."""

    iterations: np.ndarray
    converged: np.ndarray
    breakdown: np.ndarray
    residual_norms: np.ndarray

    @property
    def any_breakdown(self) -> bool:
        return bool(self.breakdown.any())


def cg_solve(op: LinearOperator, rhs, x0=None, tol=1e-2,
             max_iter: int = 20):
    """Unpreconditioned conjugate gradients, one independent run per column.

    Column ``j`` stops when ``||op x - b||_2 <= tol * ||b||_2`` or after
    ``max_iter`` iterations; ``tol`` may be a scalar or one value per
    column.  A non-positive curvature ``p^T op p <= 0`` stops
    that column too and sets its breakdown flag; the current iterate is kept.
    The columns are advanced together so each iteration costs one block
    product, but their recurrences never mix.

    Returns
    -------
    X : ndarray
        Final iterates.
    info : CGInfo
    """
    B = as_block(rhs)
    n, m = B.shape
    if n != op.dim:
        raise ContractViolation(f"rhs has {n} rows, operator size {op.dim}")
    if x0 is None:
        X = np.zeros((n, m), order="F")
        R = np.array(B, order="F", copy=True)
    else:
        X = as_block(x0, copy=True)
        if X.shape != B.shape:
            raise ContractViolation(f"x0 shape {X.shape} != rhs shape {B.shape}")
        R = np.asfortranarray(B - block_apply(op, X))

    bnorm = np.linalg.norm(B, axis=0)
    target = tol * bnorm
    rr = np.einsum("ij,ij->j", R, R)
    iterations = np.zeros(m, dtype=int)
    breakdown = np.zeros(m, dtype=bool)
    converged = np.sqrt(rr) <= target
    active = ~converged
    P = np.array(R, order="F", copy=True)

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Pa = P[:, idx]
        APa = block_apply(op, Pa)
        pap = np.einsum("ij,ij->j", Pa, APa)
        bad = ~(pap > 0.0)
        if bad.any():
            breakdown[idx[bad]] = True
            active[idx[bad]] = False
            keep = ~bad
            idx, Pa, APa, pap = idx[keep], Pa[:, keep], APa[:, keep], pap[keep]
            if idx.size == 0:
                break
        alpha = rr[idx] / pap
        X[:, idx] += Pa * alpha
        Ra = R[:, idx] - APa * alpha
        R[:, idx] = Ra
        rr_new = np.einsum("ij,ij->j", Ra, Ra)
        iterations[idx] += 1
        done = np.sqrt(rr_new) <= target[idx]
        converged[idx[done]] = True
        active[idx[done]] = False
        beta = rr_new / rr[idx]
        rr[idx] = rr_new
        P[:, idx] = Ra + Pa * beta

    info = CGInfo(iterations, converged, breakdown, np.sqrt(rr))
    return X, info
