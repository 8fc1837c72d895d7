"""Biorthogonalization stability benchmark on Hilbert/Lauchli column blocks."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla

from .biorth import biorth_residual, cgs_biorth, mgs_biorth

__all__ = ["LAUCHLI_MU", "lauchli", "hilbert_columns", "BenchRow", "biorth_bench",
           "DEFAULT_SIZES"]

# Gives kappa(Y) = sqrt(m) / mu, about 1e3 for the sizes benchmarked.
LAUCHLI_MU = 1e-3
DEFAULT_SIZES = (4, 8, 12, 16, 20)


def lauchli(n: int, mu: float = LAUCHLI_MU) -> np.ndarray:
    """The ``n x (n-1)`` Lauchli matrix ``[ones(1, n-1); mu * I]``."""
    A = np.zeros((n, n - 1))
    A[0] = 1.0
    A[1:] = mu * np.eye(n - 1)
    return A


def hilbert_columns(n: int, m: int) -> np.ndarray:
    return sla.hilbert(n)[:, :m]


@dataclass
class BenchRow:
    n: int
    cond_X: float
    cond_Y: float
    sqrt_cond_XtY: float
    cgs_residual: float
    mgs_residual: float

    def as_dict(self):
        return asdict(self)


def biorth_bench(sizes=DEFAULT_SIZES, mu: float = LAUCHLI_MU) -> list[BenchRow]:
    """Single-pass CGS and MGS on ``X = hilbert[:, :m]``, ``Y = lauchli[:, :m]``, ``m = n/2``.

    Both run without reorthogonalization and without column dropping so that
    the loss of biorthogonality ``||P^T Q - I||_2`` is what the method itself
    leaves behind.
    """
    rows = []
    for n in sizes:
        if n < 2 or n % 2:
            raise ValueError(f"sizes must be even and >= 2, got {n}")
        m = n // 2
        X = hilbert_columns(n, m)
        Y = lauchli(n, mu)[:, :m]
        cgs = cgs_biorth(X, Y, drop_tol=0.0, reorth=False)
        mgs = mgs_biorth(X, Y, drop_tol=0.0, reorth=False)
        rows.append(BenchRow(
            n=n,
            cond_X=float(np.linalg.cond(X)),
            cond_Y=float(np.linalg.cond(Y)),
            sqrt_cond_XtY=float(np.sqrt(np.linalg.cond(X.T @ Y))),
            cgs_residual=biorth_residual(cgs.P, cgs.Q),
            mgs_residual=biorth_residual(mgs.P, mgs.Q),
        ))
    return rows
