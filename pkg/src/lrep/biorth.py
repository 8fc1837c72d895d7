"""Gram-Schmidt biorthogonalization of paired blocks.

Given ``X, Y`` of shape ``(n, m)`` these routines produce ``P, Q`` spanning
the same column spaces with ``<P, Q> = P^T B Q = I``.  The modified variant
subtracts each projection from the running residual and is markedly more
robust than the classical one when ``X^T B Y`` is ill conditioned.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.linalg as sla

from .errors import ContractViolation
from .linalg import InnerProduct, as_block, empty_block

__all__ = [
    "BiorthBasis",
    "BiorthOutcome",
    "mgs_biorth",
    "cgs_biorth",
    "biorth_against",
    "biorth_residual",
    "refine_biorth",
    "DEFAULT_DROP_TOL",
    "REORTH_THRESHOLD",
]

DEFAULT_DROP_TOL = 1e-12
REORTH_THRESHOLD = 1e-10

_EUCLID = InnerProduct()


@dataclass
class BiorthBasis:
    """Paired blocks with ``P^T B Q = I``.

    ``BP`` and ``BQ`` are computed on first use and cached; for the Euclidean
    inner product they alias ``P`` and ``Q``.
    """

    P: np.ndarray
    Q: np.ndarray
    ip: InnerProduct = field(default_factory=InnerProduct)

    def __post_init__(self):
        self.P = as_block(self.P)
        self.Q = as_block(self.Q)
        if self.P.shape != self.Q.shape:
            raise ContractViolation(
                f"P and Q shapes differ: {self.P.shape} vs {self.Q.shape}")

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @property
    def ncols(self) -> int:
        return self.P.shape[1]

    @cached_property
    def BP(self) -> np.ndarray:
        return self.ip.apply_weight(self.P)

    @cached_property
    def BQ(self) -> np.ndarray:
        return self.ip.apply_weight(self.Q)

    def residual(self) -> float:
        return biorth_residual(self.P, self.Q, self.ip)


@dataclass
class BiorthOutcome:
    basis: BiorthBasis
    kept_columns: list[int]
    dropped_columns: list[int]

    @property
    def P(self):
        return self.basis.P

    @property
    def Q(self):
        return self.basis.Q


def biorth_residual(P, Q, ip: InnerProduct | None = None) -> float:
    """Spectral norm of ``P^T B Q - I``."""
    P, Q = as_block(P), as_block(Q)
    if P.shape != Q.shape:
        raise ContractViolation(f"P and Q shapes differ: {P.shape} vs {Q.shape}")
    m = P.shape[1]
    if m == 0:
        return 0.0
    G = (ip or _EUCLID).gram(P, Q) - np.eye(m)
    return float(np.linalg.svd(G, compute_uv=False)[0])


def _sign(x):
    return 1.0 if x >= 0.0 else -1.0


def _gram_schmidt(X, Y, ip, drop_tol, modified):
    """One left-to-right pass; returns (P, Q, kept, dropped)."""
    ip = ip or _EUCLID
    X, Y = as_block(X), as_block(Y)
    if X.shape != Y.shape:
        raise ContractViolation(f"X and Y shapes differ: {X.shape} vs {Y.shape}")
    n, m = X.shape
    if m > n:
        raise ContractViolation(f"cannot biorthogonalize {m} columns in R^{n}")
    weighted = not ip.is_identity

    P = np.array(X, order="F", copy=True)
    Q = np.array(Y, order="F", copy=True)
    if weighted:
        BP = np.array(ip.apply_weight(X), order="F", copy=True)
        BQ = np.array(ip.apply_weight(Y), order="F", copy=True)
    else:
        BP, BQ = P, Q
    if not modified:
        X0, Y0 = np.array(P), np.array(Q)

    kept, dropped = [], []
    # Right-looking form: once column l is final its projection is removed from
    # every later column.  Each column still sees the projections in the same
    # order as the textbook column-by-column loop.
    for l in range(m):
        p, q = P[:, l], Q[:, l]
        eta = float(p @ BQ[:, l])
        pn = np.sqrt(max(float(p @ BP[:, l]), 0.0))
        qn = np.sqrt(max(float(q @ BQ[:, l]), 0.0))
        if pn == 0.0 or qn == 0.0 or not abs(eta) >= drop_tol * pn * qn:
            dropped.append(l)
            continue
        kept.append(l)
        r_ll = _sign(eta) * np.sqrt(abs(eta))
        s_ll = np.sqrt(abs(eta))
        p /= r_ll
        q /= s_ll
        if weighted:
            BP[:, l] /= r_ll
            BQ[:, l] /= s_ll
        if l + 1 == m:
            break
        rest = slice(l + 1, m)
        if modified:
            r = BQ[:, l] @ P[:, rest]
        else:
            r = BQ[:, l] @ X0[:, rest]
        P[:, rest] -= np.outer(p, r)
        if weighted:
            BP[:, rest] -= np.outer(BP[:, l], r)
        if modified:
            s = BP[:, l] @ Q[:, rest]
        else:
            s = BP[:, l] @ Y0[:, rest]
        Q[:, rest] -= np.outer(q, s)
        if weighted:
            BQ[:, rest] -= np.outer(BQ[:, l], s)

    return (np.asfortranarray(P[:, kept]), np.asfortranarray(Q[:, kept]),
            kept, dropped)


def _run(X, Y, ip, drop_tol, reorth, modified):
    ip = ip or _EUCLID
    P, Q, kept, dropped = _gram_schmidt(X, Y, ip, drop_tol, modified)
    if reorth and P.shape[1] and biorth_residual(P, Q, ip) > REORTH_THRESHOLD:
        P, Q, kept2, dropped2 = _gram_schmidt(P, Q, ip, drop_tol, modified)
        dropped = sorted(dropped + [kept[i] for i in dropped2])
        kept = [kept[i] for i in kept2]
    return BiorthOutcome(BiorthBasis(P, Q, ip), kept, dropped)


def mgs_biorth(X, Y, ip: InnerProduct | None = None,
               drop_tol: float = DEFAULT_DROP_TOL,
               reorth: bool = True) -> BiorthOutcome:
    """Modified Gram-Schmidt biorthogonalization.

    Column ``l`` is reduced against every earlier kept pair using the current
    partial residuals, then scaled so that ``p_l^T B q_l = 1`` with
    ``p_l = sign(eta) p / sqrt|eta|`` and ``q_l = q / sqrt|eta|``.  A column
    whose ``|eta|`` falls below ``drop_tol * ||p|| * ||q||`` is discarded.

    With ``reorth`` a second full pass is made when the first leaves
    ``||P^T B Q - I||_2 > 1e-10``.
    """
    return _run(X, Y, ip, drop_tol, reorth, modified=True)


def cgs_biorth(X, Y, ip: InnerProduct | None = None,
               drop_tol: float = DEFAULT_DROP_TOL,
               reorth: bool = True) -> BiorthOutcome:
    """Classical Gram-Schmidt biorthogonalization.

    Same contract as :func:`mgs_biorth` but every projection coefficient is
    taken against the original ``x_l``/``y_l``.
    """
    return _run(X, Y, ip, drop_tol, reorth, modified=False)


def refine_biorth(P, Q, ip: InnerProduct | None = None, passes: int = 2):
    """Restore ``P^T B Q = I`` for blocks that already nearly satisfy it.

    Factors ``G = P^T B Q = L D R`` (unit triangular ``L``, ``R``) and sets
    ``P <- P L^{-T} |D|^{-1/2} sign(D)``, ``Q <- Q R^{-1} |D|^{-1/2}``.  Column
    ``j`` only mixes with columns ``< j``, as in Gram-Schmidt, but the work is
    one Gram product and two triangular solves.  Falls back to
    :func:`mgs_biorth` when ``G`` is not diagonally dominant enough to be
    factored without pivoting.  Pair norms are balanced first.  Returns
    ``(P, Q)``.
    """
    ip = ip or _EUCLID
    P, Q = as_block(P), as_block(Q)
    m = P.shape[1]
    if m:
        # p <- c p, q <- q / c equalizes the pair norms without touching
        # P^T B Q's diagonal; unbalanced pairs inflate the Gram rounding error.
        pn, qn = np.linalg.norm(P, axis=0), np.linalg.norm(Q, axis=0)
        ok = (pn > 0) & (qn > 0)
        c = np.ones(m)
        c[ok] = np.sqrt(qn[ok] / pn[ok])
        P, Q = np.asfortranarray(P * c), np.asfortranarray(Q / c)
    for _ in range(passes):
        if m == 0:
            break
        G = ip.gram(P, Q)
        lu, piv = sla.lu_factor(G, check_finite=False)
        if np.any(piv != np.arange(m)):
            out = mgs_biorth(P, Q, ip, drop_tol=0.0)
            return out.P, out.Q
        D = np.diag(lu).copy()
        L = np.tril(lu, -1) + np.eye(m)
        R = np.triu(lu, 1) / D[:, None] + np.eye(m)
        Ls = sla.solve_triangular(L, P.T, lower=True, unit_diagonal=True).T
        Rs = sla.solve_triangular(R, Q.T, trans="T", lower=False, unit_diagonal=True).T
        root = np.sqrt(np.abs(D))
        P = np.asfortranarray(Ls * (np.sign(D) / root))
        Q = np.asfortranarray(Rs / root)
    return P, Q


def _as_pair(b, ip):
    if isinstance(b, BiorthBasis):
        return b
    P, Q = b
    return BiorthBasis(P, Q, ip)


def biorth_against(bases: Iterable, X, Y, ip: InnerProduct | None = None):
    """Project ``X`` and ``Y`` onto the biorthogonal complement of ``bases``.

    Computes ``X <- (I - P Q^T B) X`` and ``Y <- (I - Q P^T B) Y`` for each
    basis in turn (block projections, no column loops).  ``bases`` holds
    :class:`BiorthBasis` objects or ``(P, Q)`` tuples.  The inputs are not
    modified.
    """
    ip = ip or _EUCLID
    W = as_block(X, copy=True)
    Z = as_block(Y, copy=True)
    if W.shape[0] != Z.shape[0]:
        raise ContractViolation(f"X has {W.shape[0]} rows, Y has {Z.shape[0]}")
    for b in bases:
        b = _as_pair(b, ip)
        if b.ncols == 0:
            continue
        if b.dim != W.shape[0]:
            raise ContractViolation(
                f"basis of dimension {b.dim} against block with {W.shape[0]} rows")
        if W.shape[1]:
            W -= b.P @ (b.BQ.T @ W)
        if Z.shape[1]:
            Z -= b.Q @ (b.BP.T @ Z)
    return W, Z


def empty_basis(n: int, ip: InnerProduct | None = None) -> BiorthBasis:
    return BiorthBasis(empty_block(n), empty_block(n), ip or InnerProduct())
