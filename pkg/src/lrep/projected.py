"""Projected (small dense) linear response eigenproblem.

With ``U^T B V = I`` the projected matrix keeps the block form
``[[0, Khat], [Mhat, 0]]`` where ``Khat = U^T K U`` and ``Mhat = V^T M V`` are
SPD.  Its positive eigenvalues are the singular values of ``L^T R`` for the
Cholesky factors ``Khat = L L^T`` and ``Mhat = R R^T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ContractViolation, DegenerateSpectrum, NullspaceLeak
from .jacobi import svd_square
from .linalg import InnerProduct, LinearOperator, as_block, block_apply, symmetrize

__all__ = [
    "ProjectedLrep",
    "SmallEigenSolution",
    "assemble_projected",
    "solve_small_lrep",
    "dense_lrep_oracle",
    "DEGENERACY_TOL",
]

DEGENERACY_TOL = 1e-14


def _cholesky(A, label):
    try:
        return sla.cholesky(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NullspaceLeak(f"{label} is not positive definite: {exc}") from None


@dataclass
class ProjectedLrep:
    """``Khat`` and ``Mhat`` of a projected problem with their Cholesky factors.

    ``KU`` and ``MV`` optionally keep the large products used to build the
    blocks so the caller can reuse them.
    """

    Khat: np.ndarray
    Mhat: np.ndarray
    KU: np.ndarray | None = field(default=None, repr=False)
    MV: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.Khat = symmetrize(np.atleast_2d(np.asarray(self.Khat, dtype=np.float64)))
        self.Mhat = symmetrize(np.atleast_2d(np.asarray(self.Mhat, dtype=np.float64)))
        if self.Khat.shape != self.Mhat.shape or self.Khat.shape[0] != self.Khat.shape[1]:
            raise ContractViolation(
                f"Khat {self.Khat.shape} and Mhat {self.Mhat.shape} must be equal squares")
        self.Lk = _cholesky(self.Khat, "Khat")
        self.Lm = _cholesky(self.Mhat, "Mhat")

    @property
    def d(self) -> int:
        return self.Khat.shape[0]

    def dense_H(self) -> np.ndarray:
        d = self.d
        H = np.zeros((2 * d, 2 * d))
        H[:d, d:] = self.Khat
        H[d:, :d] = self.Mhat
        return H


@dataclass
class SmallEigenSolution:
    """Positive eigenpairs of a projected problem, ascending.

    ``Khat @ Xhat = Yhat * lambdas``, ``Mhat @ Yhat = Xhat * lambdas`` and
    ``Xhat.T @ Yhat = I``.
    """

    lambdas: np.ndarray
    Xhat: np.ndarray
    Yhat: np.ndarray

    @property
    def k(self) -> int:
        return len(self.lambdas)


def assemble_projected(K: LinearOperator, M: LinearOperator, U, V,
                       ip: InnerProduct | None = None) -> ProjectedLrep:
    """Form ``Khat = U^T K U`` and ``Mhat = V^T M V`` (symmetrized).

    ``U`` and ``V`` must be biorthonormal under ``ip``; the weight itself does
    not enter the blocks.  Raises :class:`NullspaceLeak` when either block
    fails Cholesky.
    """
    U, V = as_block(U), as_block(V)
    if U.shape != V.shape:
        raise ContractViolation(f"U {U.shape} and V {V.shape} differ")
    KU = block_apply(K, U)
    MV = block_apply(M, V)
    return ProjectedLrep(U.T @ KU, V.T @ MV, KU=KU, MV=MV)


def solve_small_lrep(p: ProjectedLrep, k: int | None = None,
                     svd_method: str = "auto") -> SmallEigenSolution:
    """The ``k`` smallest positive eigenpairs of a projected problem.

    With ``W = L^T R = Phi diag(sigma) Psi^T`` the eigenvalues are ``sigma``
    and the eigenvectors are ``Yhat = L Phi sigma^{-1/2}``,
    ``Xhat = R Psi sigma^{-1/2}``.
    """
    d = p.d
    k = d if k is None else int(k)
    if not 0 <= k <= d:
        raise ContractViolation(f"requested {k} eigenpairs of a size-{d} problem")
    W = p.Lk.T @ p.Lm
    Phi, sigma, Psi = svd_square(W, svd_method)
    smax = sigma.max() if d else 0.0
    if d and not sigma.min() > DEGENERACY_TOL * smax:
        raise DegenerateSpectrum(
            f"projected eigenvalue {sigma.min():.3e} is numerically zero "
            f"(largest {smax:.3e})")
    order = np.argsort(sigma, kind="stable")[:k]
    lam = sigma[order]
    scale = 1.0 / np.sqrt(lam)
    Yhat = (p.Lk @ Phi[:, order]) * scale
    Xhat = (p.Lm @ Psi[:, order]) * scale
    return SmallEigenSolution(lam, Xhat, Yhat)


def dense_lrep_oracle(p, cluster_tol: float = 1e-8,
                      zero_tol: float = 1e-7) -> SmallEigenSolution:
    """Brute-force reference: general eigensolver on the full ``2d x 2d`` matrix.

    ``p`` is a :class:`ProjectedLrep` or a tuple ``(K, M)`` / ``(K, M, B)`` of
    dense arrays; with ``B`` the pencil ``(H, diag(B, B))`` is solved.  Keeps
    eigenvalues with real part above ``zero_tol * ||H||`` (this drops the
    defective zero eigenvalues of a singular ``K``), normalizes each pair to
    ``x^T B y = 1`` (clusters jointly) and returns them ascending.  Test use
    only.
    """
    if isinstance(p, ProjectedLrep):
        K, M, B = p.Khat, p.Mhat, None
    else:
        K, M, *rest = (np.asarray(a, dtype=np.float64) for a in p)
        B = rest[0] if rest else None
    d = K.shape[0]
    if d > 200:
        raise ContractViolation(f"oracle limited to d <= 200, got {d}")
    H = np.zeros((2 * d, 2 * d))
    H[:d, d:] = K
    H[d:, :d] = M
    if B is None:
        w, vecs = sla.eig(H)
        Bw = np.eye(d)
    else:
        w, vecs = sla.eig(H, sla.block_diag(B, B))
        Bw = B
    cutoff = zero_tol * max(np.abs(H).sum(axis=1).max(), 1.0)
    pos = np.flatnonzero(np.isfinite(w) & (w.real > cutoff))
    pos = pos[np.argsort(w.real[pos], kind="stable")]
    lam = w.real[pos]
    Y = vecs[:d, pos].real
    X = vecs[d:, pos].real
    start = 0
    while start < len(lam):
        stop = start + 1
        while stop < len(lam) and lam[stop] - lam[start] <= cluster_tol * lam[start]:
            stop += 1
        g = slice(start, stop)
        G = X[:, g].T @ Bw @ Y[:, g]
        if stop - start == 1:
            eta = G[0, 0]
            X[:, g] *= np.sign(eta) / np.sqrt(abs(eta))
            Y[:, g] /= np.sqrt(abs(eta))
        else:
            Y[:, g] = Y[:, g] @ np.linalg.inv(G)
        start = stop
    return SmallEigenSolution(lam, X, Y)
