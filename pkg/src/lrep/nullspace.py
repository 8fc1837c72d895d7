"""Generalized nullspace of ``H = [[0, K], [M, 0]]``.

When ``K`` is singular, ``H`` has the zero eigenvalue with Jordan chains
``(0; x0) -> (y0; 0)`` where ``K x0 = 0`` and ``M y0 = B x0``.  The pair
``X0, Y0`` (normalized to ``X0^T B Y0 = I``) spans that invariant subspace and
must be deflated before positive eigenvalues are sought.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .biorth import BiorthBasis
from .errors import InvalidNullspace, RankMismatch
from .linalg import InnerProduct, LinearOperator, as_block, cg_solve, empty_block

__all__ = [
    "GeneralizedNullspace",
    "compute_nullspace",
    "analytic_nullspace_T",
    "estimate_norm",
]


@dataclass
class GeneralizedNullspace:
    r: int
    X0: np.ndarray
    Y0: np.ndarray
    ip: InnerProduct = field(default_factory=InnerProduct)

    def __post_init__(self):
        self.X0 = as_block(self.X0)
        self.Y0 = as_block(self.Y0)

    @classmethod
    def empty(cls, n, ip=None):
        return cls(0, empty_block(n), empty_block(n), ip or InnerProduct())

    def as_basis(self) -> BiorthBasis:
        return BiorthBasis(self.X0, self.Y0, self.ip)

    def deviations(self, K: LinearOperator, M: LinearOperator, normK=None):
        """Relative violations of ``K X0 = 0``, ``M Y0 = B X0``, ``X0^T B Y0 = I``."""
        if self.r == 0:
            return {"kernel": 0.0, "chain": 0.0, "biorth": 0.0}
        normK = normK or estimate_norm(K)
        KX = K.apply(self.X0)
        BX = self.ip.apply_weight(self.X0)
        chain = M.apply(self.Y0) - BX
        return {
            "kernel": float(np.max(np.linalg.norm(KX, axis=0)
                                   / (normK * np.linalg.norm(self.X0, axis=0)))),
            "chain": float(np.max(np.linalg.norm(chain, axis=0)
                                  / np.linalg.norm(BX, axis=0))),
            "biorth": float(np.linalg.norm(self.X0.T @ self.ip.apply_weight(self.Y0)
                                           - np.eye(self.r), 2)),
        }


def estimate_norm(op: LinearOperator, iters: int = 30, seed: int = 12345) -> float:
    """Power-iteration estimate of ``||op||_2`` for a symmetric operator."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = op.apply(v)[:, 0]
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return est
        est = nw
        v = w / nw
    return float(est)


def _normalize_pair(Xt, Yt, ip):
    """``X0 = Xt C^{-1}``, ``Y0 = Yt C^{-1}`` with ``C^T C = Xt^T B Yt``."""
    G = Xt.T @ ip.apply_weight(Yt)
    G = 0.5 * (G + G.T)
    try:
        C = sla.cholesky(G, lower=False)
    except np.linalg.LinAlgError:
        raise InvalidNullspace(
            "Gram matrix of nullspace candidates is not positive definite") from None
    X0 = sla.solve_triangular(C, Xt.T, trans="T", lower=False).T
    Y0 = sla.solve_triangular(C, Yt.T, trans="T", lower=False).T
    return np.asfortranarray(X0), np.asfortranarray(Y0)


def compute_nullspace(K: LinearOperator, M: LinearOperator, r_hint: int | None = None,
                      tol_null: float = 1e-10, ip: InnerProduct | None = None,
                      seed: int = 0, max_iter: int | None = None) -> GeneralizedNullspace:
    """Numerically compute ``X0, Y0`` for symmetric PSD ``K`` and SPD ``M``.

    A random probe block is projected onto ``N(K)`` by removing its range
    component, ``x <- x - K^+ K x``, where ``K^+ K x`` comes from CG on the
    consistent system ``K d = K x`` (up to three refinement passes, each
    aiming at ``||K x|| ~ eps ||K|| ||x||``).  This is inverse
    iteration taken to the zero-shift limit, so it does not depend on the gap
    below the first nonzero eigenvalue.  A Rayleigh-Ritz step on the surviving
    directions declares an eigenvalue zero when ``|theta| < tol_null * ||K||``.
    If every probe direction is null the probe is doubled.  Then
    ``M y = B x`` is solved by CG and the pair is normalized to
    ``X0^T B Y0 = I``.

    Raises :class:`RankMismatch` when ``r_hint`` disagrees with the detected
    dimension and :class:`InvalidNullspace` when the Gram matrix is not SPD.
    """
    ip = ip or InnerProduct()
    n = K.dim
    max_iter = max_iter or 10 * n
    normK = estimate_norm(K)
    if normK == 0.0:
        raise InvalidNullspace("K is the zero operator")
    rng = np.random.default_rng(seed)
    width = min(n, (r_hint + 2) if r_hint is not None else 4)

    while True:
        X = rng.uniform(-1.0, 1.0, size=(n, width))
        X = np.asfortranarray(X / np.linalg.norm(X, axis=0))
        for _ in range(3):
            KX = K.apply(X)
            # The CG target is absolute, about eps * ||K|| ||x||; asking for
            # more on a rounding-level right-hand side only amplifies noise.
            floor = 1e-15 * normK * np.linalg.norm(X, axis=0)
            knorm = np.linalg.norm(KX, axis=0)
            live = knorm > 10.0 * floor
            if not live.any():
                break
            tol = np.maximum(1e-12, floor[live] / knorm[live])
            D, _ = cg_solve(K, KX[:, live], tol=tol, max_iter=max_iter)
            X[:, live] -= D
            X = np.asfortranarray(X)
        Uo, sv, _ = np.linalg.svd(X, full_matrices=False)
        keep = sv > 1e-8 * sv[0] if sv.size and sv[0] > 0 else np.zeros(0, bool)
        Qb = Uo[:, keep]
        theta, S = np.linalg.eigh(Qb.T @ K.apply(Qb)) if Qb.shape[1] else (np.zeros(0), None)
        zero = np.abs(theta) < tol_null * normK
        r = int(zero.sum())
        if r < width or width >= n:
            break
        width = min(n, 2 * width)

    if r_hint is not None and r != r_hint:
        raise RankMismatch(f"detected nullspace dimension {r}, hint says {r_hint}")
    if r == 0:
        return GeneralizedNullspace.empty(n, ip)

    Xt = np.asfortranarray(Qb @ S[:, zero])
    Yt, _ = cg_solve(M, ip.apply_weight(Xt), tol=1e-12, max_iter=max_iter)
    X0, Y0 = _normalize_pair(Xt, Yt, ip)
    return GeneralizedNullspace(r, X0, Y0, ip)


def analytic_nullspace_T(n: int, normalize: bool = True) -> GeneralizedNullspace:
    """Closed-form pair for ``K = T(-1)``, ``M = T(0)``.

    ``x0`` is the all-ones vector and ``y0_l = l (n - l + 1) / 2``; with
    ``normalize`` both are divided by ``sqrt(x0^T y0)``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    ell = np.arange(1, n + 1, dtype=np.float64)
    x0 = np.ones(n)
    y0 = ell * (n - ell + 1) / 2.0
    if normalize:
        c = np.sqrt(x0 @ y0)
        x0, y0 = x0 / c, y0 / c
    return GeneralizedNullspace(1, x0[:, None], y0[:, None])
