"""Benchmark problems with known spectra and random test factories."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ContractViolation
from .linalg import InnerProduct, LinearOperator
from .nullspace import GeneralizedNullspace, analytic_nullspace_T

__all__ = [
    "BenchmarkProblem",
    "Analytic",
    "tridiag_T",
    "make_T_problem",
    "make_fd_laplacian_problem",
    "make_random_spd_problem",
    "make_generalized_problem",
    "make_matrix_market_problem",
    "PROBLEMS",
    "build_problem",
]

# Dense validation (Cholesky / eigvalsh) is only attempted below this size.
VALIDATE_MAX_N = 2000


@dataclass
class Analytic:
    """Closed-form ground truth; ``ell`` is 1-based."""

    eigenvalue: Callable[[int], float] | None = None
    eigenvector: Callable[[int], tuple[np.ndarray, np.ndarray]] | None = None
    nullspace: GeneralizedNullspace | None = None


@dataclass
class BenchmarkProblem:
    name: str
    K: LinearOperator
    M: LinearOperator
    B: LinearOperator | None = None
    analytic: Analytic | None = None
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.K.dim

    @property
    def ip(self) -> InnerProduct:
        return InnerProduct(self.B)

    def dense(self):
        """``(K, M)`` or ``(K, M, B)`` as dense arrays, for the oracle."""
        mats = [self.K.to_dense(), self.M.to_dense()]
        if self.B is not None:
            mats.append(self.B.to_dense())
        return tuple(mats)

    def validate(self) -> None:
        """Check symmetry, ``K`` PSD and ``M`` (and ``B``) SPD at test scale."""
        if self.n > VALIDATE_MAX_N:
            return
        for label, op, definite in (("K", self.K, False), ("M", self.M, True),
                                    ("B", self.B, True)):
            if op is None:
                continue
            A = op.to_dense()
            scale = max(np.abs(A).max(), 1.0)
            if not np.allclose(A, A.T, rtol=0, atol=1e-13 * scale):
                raise ContractViolation(f"{label} is not symmetric")
            if definite:
                try:
                    np.linalg.cholesky(A)
                except np.linalg.LinAlgError:
                    raise ContractViolation(f"{label} is not positive definite") from None
            elif np.linalg.eigvalsh(A)[0] < -1e-10 * scale:
                raise ContractViolation(f"{label} is not positive semi-definite")


def tridiag_T(n: int, s: float) -> sp.csr_matrix:
    """``tridiag(-1, 2, -1)`` of order ``n`` with corner entries ``s``."""
    if n < 3:
        raise ContractViolation(f"T(s) needs n >= 3, got {n}")
    A = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)],
                 [-1, 0, 1], format="lil")
    A[0, n - 1] = s
    A[n - 1, 0] = s
    A = A.tocsr()
    A.eliminate_zeros()
    return A


def _sine_vector(n, ell):
    k = np.arange(1, n + 1)
    return np.sin(ell * np.pi * k / (n + 1))


def make_T_problem(n: int, s: float) -> BenchmarkProblem:
    """``K = T(s)``, ``M = T(0)`` for ``s`` in ``{0, -1}``."""
    if s not in (0, -1):
        raise ContractViolation(f"s must be 0 or -1, got {s}")
    K = LinearOperator.from_sparse(tridiag_T(n, float(s)), name=f"T({s:g})")
    M = LinearOperator.from_sparse(tridiag_T(n, 0.0), name="T(0)")
    if s == 0:
        def eigenvalue(ell):
            return 4.0 * np.sin(np.pi * ell / (2 * (n + 1))) ** 2

        def eigenvector(ell):
            v = _sine_vector(n, ell)
            return v, v.copy()

        analytic = Analytic(eigenvalue, eigenvector)
        name = "t0"
    else:
        analytic = Analytic(nullspace=analytic_nullspace_T(n))
        name = "tm1"
    return BenchmarkProblem(name, K, M, None, analytic, {"n": n, "s": s})


def _laplacian_1d(m):
    return sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)],
                    [-1, 0, 1], format="csr")


def make_fd_laplacian_problem(m: int) -> BenchmarkProblem:
    """7-point Dirichlet Laplacian on the unit cube, ``n = m**3``, ``M = I``.

    Eigenvalues of ``H`` are the square roots of those of ``K``, which are
    ``h^-2 * 4 (sin^2(pi i h/2) + sin^2(pi j h/2) + sin^2(pi k h/2))``.
    """
    if m < 2:
        raise ContractViolation(f"grid count must be at least 2, got {m}")
    h = 1.0 / (m + 1)
    T1 = _laplacian_1d(m)
    I1 = sp.identity(m, format="csr")
    L = (sp.kron(sp.kron(T1, I1), I1) + sp.kron(sp.kron(I1, T1), I1)
         + sp.kron(sp.kron(I1, I1), T1))
    n = m ** 3
    K = LinearOperator.from_sparse(L / h ** 2, name="FD Laplacian")
    M = LinearOperator.from_sparse(sp.identity(n, format="csr"), name="I")

    mu = 4.0 * np.sin(np.pi * np.arange(1, m + 1) * h / 2.0) ** 2 / h ** 2
    spectrum = np.sort(np.sqrt((mu[:, None, None] + mu[None, :, None]
                                + mu[None, None, :]).ravel()))

    def eigenvalue(ell):
        return float(spectrum[ell - 1])

    return BenchmarkProblem("fd-laplace", K, M, None, Analytic(eigenvalue),
                            {"m": m, "n": n})


def _random_spd(n, cond, rng):
    if cond == 1.0:
        return np.eye(n)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q *= np.sign(np.diag(R))
    d = cond ** rng.uniform(0.0, 1.0, n)
    d[:2] = (1.0, cond)
    A = (Q.T * d) @ Q
    return 0.5 * (A + A.T)


def make_random_spd_problem(n: int, cond_target: float, seed: int) -> BenchmarkProblem:
    """Dense ``K, M = Q^T D Q`` with log-uniform ``D`` spanning ``cond_target``."""
    if n < 2:
        raise ContractViolation(f"n must be at least 2, got {n}")
    if not cond_target >= 1.0:
        raise ContractViolation(f"cond_target must be >= 1, got {cond_target}")
    rng = np.random.default_rng(seed)
    K = _random_spd(n, float(cond_target), rng)
    M = _random_spd(n, float(cond_target), rng)
    return BenchmarkProblem(
        "random-spd", LinearOperator.from_dense(K, "K"), LinearOperator.from_dense(M, "M"),
        params={"n": n, "cond_target": cond_target, "seed": seed})


def make_generalized_problem(base: BenchmarkProblem, B) -> BenchmarkProblem:
    """``base`` with the ``B``-weighted inner product: ``K x = lambda B y``, ``M y = lambda B x``.

    Analytic data is dropped since it describes the unweighted problem.
    """
    B = LinearOperator.wrap(B, name="B")
    if B.dim != base.n:
        raise ContractViolation(f"B has size {B.dim}, problem has {base.n}")
    if base.n <= VALIDATE_MAX_N:
        Bd = B.to_dense()
        if not np.allclose(Bd, Bd.T, rtol=0, atol=1e-13 * max(np.abs(Bd).max(), 1.0)):
            raise ContractViolation("B is not symmetric")
        try:
            sla.cholesky(Bd)
        except np.linalg.LinAlgError:
            raise ContractViolation("B is not positive definite") from None
    return replace(base, name=f"{base.name}+B", B=B, analytic=None,
                   params={**base.params, "generalized": True})


def make_matrix_market_problem(k_file, m_file, b_file=None) -> BenchmarkProblem:
    from .mmio import read_matrix_market

    K = read_matrix_market(k_file)
    M = read_matrix_market(m_file)
    if K.shape != M.shape or K.shape[0] != K.shape[1]:
        raise ContractViolation(f"K {K.shape} and M {M.shape} must be equal squares")
    B = None
    if b_file is not None:
        Bm = read_matrix_market(b_file)
        if Bm.shape != K.shape:
            raise ContractViolation(f"B {Bm.shape} does not match K {K.shape}")
        B = LinearOperator.from_sparse(Bm, "B")
    return BenchmarkProblem(
        "mm-files", LinearOperator.from_sparse(K, "K"), LinearOperator.from_sparse(M, "M"),
        B, params={"k_file": str(k_file), "m_file": str(m_file),
                   "b_file": None if b_file is None else str(b_file)})


PROBLEMS = {
    "t0": lambda n=1000, **_: make_T_problem(n, 0),
    "tm1": lambda n=1000, **_: make_T_problem(n, -1),
    "fd-laplace": lambda m=10, **_: make_fd_laplacian_problem(m),
    "random-spd": lambda n=30, cond=100.0, seed=0, **_: make_random_spd_problem(n, cond, seed),
    "mm-files": lambda k_file, m_file, b_file=None, **_: make_matrix_market_problem(
        k_file, m_file, b_file),
}


def build_problem(name: str, **params) -> BenchmarkProblem:
    """Look up a problem family by registry name."""
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ContractViolation(
            f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
    return factory(**params)
