"""One-sided (Hestenes) Jacobi SVD for small dense square matrices.

Columns are rotated pairwise until mutually orthogonal.  Pairs are visited in
a round-robin tournament so that every round touches ``n/2`` disjoint pairs,
which lets a whole round be applied with array operations.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

__all__ = ["jacobi_svd", "svd_square", "JACOBI_MAX_DIM"]

# Above this size the Python-level rotation rounds dominate; LAPACK's
# preconditioned Jacobi (dgejsv) is used instead.
JACOBI_MAX_DIM = 64


@lru_cache(maxsize=64)
def _tournament(n: int):
    """Round-robin schedule: ``n-1`` rounds of disjoint ``(p, q)`` pairs."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = (np.array(v, dtype=np.intp) for v in zip(*pairs))
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _rotate(A, tol, max_sweeps):
    G = np.array(A, dtype=np.float64, order="F", copy=True)
    n = G.shape[1]
    if G.ndim != 2 or G.shape[0] != n:
        raise ValueError(f"jacobi_svd expects a square matrix, got {G.shape}")
    V = np.eye(n, order="F")
    if n == 0:
        return G, np.zeros(0), V
    if tol is None:
        tol = n * np.finfo(np.float64).eps
    rounds = _tournament(n)
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            Gp, Gq = G[:, p], G[:, q]
            alpha = np.einsum("ij,ij->j", Gp, Gp)
            beta = np.einsum("ij,ij->j", Gq, Gq)
            gamma = np.einsum("ij,ij->j", Gp, Gq)
            scale = np.sqrt(alpha * beta)
            hit = np.abs(gamma) > tol * scale
            if not hit.any():
                continue
            rotated = True
            if not hit.all():
                p, q = p[hit], q[hit]
                Gp, Gq = Gp[:, hit], Gq[:, hit]
                alpha, beta, gamma = alpha[hit], beta[hit], gamma[hit]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.hypot(1.0, t)
            s = c * t
            G[:, p] = Gp * c - Gq * s
            G[:, q] = Gp * s + Gq * c
            Vp, Vq = V[:, p], V[:, q]
            V[:, p] = Vp * c - Vq * s
            V[:, q] = Vp * s + Vq * c
        if not rotated:
            break
    sigma = np.linalg.norm(G, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    G, V = G[:, order], V[:, order]
    U = np.zeros_like(G)
    nz = sigma > 0
    U[:, nz] = G[:, nz] / sigma[nz]
    return U, sigma, V


def jacobi_svd(A, tol=None, max_sweeps=60, precondition=True):
    """Singular value decomposition ``A = U diag(s) V^T`` of a square matrix.

    Returns ``(U, s, V)`` with ``s`` in *descending* order.  Columns of ``U``
    belonging to zero singular values are left as zero vectors.

    Sweeps stop once every pair satisfies
    ``|a_p . a_q| <= tol * ||a_p|| ||a_q||`` (default ``tol = n * eps``).
    With ``precondition`` the rotations act on ``R^T`` from a column-pivoted
    QR of ``A``, which needs far fewer sweeps.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"jacobi_svd expects a square matrix, got {A.shape}")
    if not precondition or A.shape[0] == 0:
        return _rotate(A, tol, max_sweeps)
    # A[:, piv] = Qf R  =>  A = (Qf Vr) S (Pi Ur)^T  where R^T = Ur S Vr^T
    Qf, R, piv = sla.qr(A, pivoting=True)
    Ur, s, Vr = _rotate(R.T, tol, max_sweeps)
    U = Qf @ Vr
    V = np.empty_like(Ur)
    V[piv] = Ur
    return U, s, V


def svd_square(A, method="auto"):
    """SVD of a small square matrix through a Jacobi-type method.

    ``method`` is ``"jacobi"`` (this module), ``"lapack"`` (``dgejsv``) or
    ``"auto"`` (``"jacobi"`` up to :data:`JACOBI_MAX_DIM`).  Returns
    ``(U, s, V)`` with ``s`` descending.
    """
    n = np.shape(A)[0]
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        return jacobi_svd(A)
    if method != "lapack":
        raise ValueError(f"unknown SVD method {method!r}")
    sva, U, V, work, _, info = lapack.dgejsv(
        np.asfortranarray(A, dtype=np.float64),
        joba=1, jobu=0, jobv=0, jobr=1, jobt=0, jobp=0)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgejsv failed with info={info}")
    s = sva * (work[0] / work[1])
    return U, s, V
