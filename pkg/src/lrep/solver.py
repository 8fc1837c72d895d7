"""Block biorthogonal subspace iteration for the linear response eigenproblem.

The search space is carried as two biorthonormal triples ``U = [X, P, W]`` and
``V = [Y, Q, Z]``:

* ``X, Y`` hold the current Ritz vectors (the *window*);
* ``P, Q`` hold the change of the Ritz coefficients between iterations;
* ``W, Z`` hold corrections from one block Gauss-Seidel sweep on the
  residual equations, solved loosely with CG.

Each iteration projects ``H`` onto ``(U, V)``, which keeps the
``[[0, Khat], [Mhat, 0]]`` form, solves the small problem, locks the converged
prefix and rebuilds ``P, W``.  Converged pairs and the generalized nullspace
are deflated by biorthogonal projection.  With batching only ``nb``
unconverged pairs drive the update; with the moving mechanism the window has
fixed width ``s * nb`` and converged pairs are moved out ``2 * nb`` at a time.
"""
from __future__ import annotations

import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .biorth import BiorthBasis, biorth_against, mgs_biorth, refine_biorth
from .errors import (ContractViolation, DegenerateSpectrum, InitializationFailure,
                     LrepError, NotEnoughSamples, NullspaceLeak)
from .linalg import InnerProduct, LinearOperator, as_block, cg_solve, empty_block
from .nullspace import GeneralizedNullspace, compute_nullspace
from .projected import assemble_projected, solve_small_lrep

__all__ = [
    "BospConfig",
    "SolverState",
    "EigenResult",
    "ResidualHistory",
    "RegressionFit",
    "default_batch_size",
    "initialize",
    "iterate_once",
    "solve",
    "normalized_residuals",
    "regression_coefficients",
    "check_state",
]

log = logging.getLogger(__name__)

# A column whose norm shrinks below this fraction during a projection is
# considered to lie in the deflated space and is discarded.
CANCEL_TOL = 1e-10


def default_batch_size(nev: int) -> int:
    if nev < 5:
        return nev
    return max(1, math.ceil(min(nev / 5, 150)))


@dataclass
class BospConfig:
    """Solver parameters.

    ``nb`` defaults to ``ceil(min(nev/5, 150))`` (``nev`` itself when
    ``nev < 5``) and ``moving`` to ``nev > s * nb``.  ``check_every > 0``
    evaluates the state invariants every that many iterations.
    """

    nev: int
    nb: int | None = None
    tol: float = 1e-8
    ngs: int = 1
    s: int = 3
    moving: bool | None = None
    max_outer_iter: int = 500
    rng_seed: int = 0
    inner_cg_tol: float = 1e-2
    inner_cg_max_iter: int = 20
    svd_method: str = "auto"
    check_every: int = 0

    def __post_init__(self):
        if self.nev < 1:
            raise ContractViolation(f"nev must be positive, got {self.nev}")
        if self.nb is None:
            self.nb = default_batch_size(self.nev)
        if not 1 <= self.nb <= self.nev:
            raise ContractViolation(f"need 1 <= nb <= nev, got nb={self.nb}, nev={self.nev}")
        if self.s < 2:
            raise ContractViolation(f"s must be at least 2, got {self.s}")
        if not self.tol > 0:
            raise ContractViolation(f"tol must be positive, got {self.tol}")
        if self.ngs < 1 or self.max_outer_iter < 1:
            raise ContractViolation("ngs and max_outer_iter must be positive")
        if self.moving is None:
            self.moving = self.nev > self.s * self.nb

    @property
    def window(self) -> int:
        return self.s * self.nb if self.moving else self.nev


class ResidualHistory:
    """Normalized residuals per outer iteration, indexed by eigenpair.

    Row ``j`` holds the residual of every tracked pair after iteration ``j``.
    Pairs that were not recomputed in that iteration (already locked, or not
    yet in the window) carry their last known value, or ``nan``, and are
    marked inactive.
    """

    def __init__(self, ntracked: int, tol: float):
        self.ntracked = ntracked
        self.tol = tol
        self._rows: list[np.ndarray] = []
        self._active: list[np.ndarray] = []
        self.nev_conv: list[int] = []

    def record(self, values, active, nev_conv):
        self._rows.append(np.asarray(values, dtype=np.float64).copy())
        self._active.append(np.asarray(active, dtype=bool).copy())
        self.nev_conv.append(int(nev_conv))

    def __len__(self):
        return len(self._rows)

    @property
    def table(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.ntracked))
        return np.vstack(self._rows)

    @property
    def active(self) -> np.ndarray:
        if not self._active:
            return np.zeros((0, self.ntracked), dtype=bool)
        return np.vstack(self._active)

    def series(self, index: int) -> np.ndarray:
        """Residuals of one pair over the iterations in which it was computed."""
        if not 0 <= index < self.ntracked:
            raise ContractViolation(f"eigenindex {index} outside 0..{self.ntracked - 1}")
        if not self._rows:
            return np.zeros(0)
        return self.table[self.active[:, index], index]

    def rows(self):
        """``(iteration, eigenindex, residual)`` triples, 1-based iterations."""
        for j, row in enumerate(self._rows, start=1):
            for i, r in enumerate(row):
                yield j, i, float(r)


@dataclass
class SolverStats:
    widths: list[int] = field(default_factory=list)
    timings: dict = field(default_factory=lambda: defaultdict(float))
    recoveries: int = 0
    moves: int = 0

    @property
    def max_width(self) -> int:
        return max(self.widths, default=0)


@dataclass
class SolverState:
    """Working blocks of one solve.

    The window ``X, Y`` starts with ``nlock`` converged columns (locked in
    place) followed by active Ritz vectors.  ``locked`` holds the pairs moved
    out of the window; the nullspace pair is kept separately in ``ns``.
    """

    X: np.ndarray
    Y: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    ns: GeneralizedNullspace
    ip: InnerProduct
    lambdas: np.ndarray
    residuals: np.ndarray
    nlock: int = 0
    locked: list[BiorthBasis] = field(default_factory=list)
    locked_lambdas: list[np.ndarray] = field(default_factory=list)
    locked_residuals: list[np.ndarray] = field(default_factory=list)
    iter: int = 0
    nev_conv_seen: int = 0
    done: bool = False
    history: ResidualHistory | None = None
    stats: SolverStats = field(default_factory=SolverStats)
    invariant_log: list[dict] = field(default_factory=list)

    @property
    def n_moved(self) -> int:
        return sum(b.ncols for b in self.locked)

    @property
    def nev_conv(self) -> int:
        """Length of the converged prefix (never decreases)."""
        return max(self.nev_conv_seen, self.n_moved + self.nlock)

    @property
    def U(self) -> np.ndarray:
        return np.hstack([self.X[:, self.nlock:], self.P, self.W])

    @property
    def V(self) -> np.ndarray:
        return np.hstack([self.Y[:, self.nlock:], self.Q, self.Z])

    def deflation_bases(self) -> list[BiorthBasis]:
        """Nullspace pair, moved-out pairs and the pairs locked in the window."""
        bases = [self.ns.as_basis(), *self.locked]
        if self.nlock:
            bases.append(BiorthBasis(self.X[:, :self.nlock], self.Y[:, :self.nlock], self.ip))
        return bases

    @property
    def lambdas_converged(self) -> np.ndarray:
        return np.concatenate([*self.locked_lambdas, self.lambdas[:self.nlock]])


@dataclass
class EigenResult:
    """Converged eigenpairs ``K X = B Y diag(lambdas)``, ``M Y = B X diag(lambdas)``.

    ``converged`` is ``False`` when the iteration limit was hit; the result
    then holds the ``nev_conv`` pairs that did converge.
    """

    lambdas: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    iterations: int
    residuals: np.ndarray
    history: ResidualHistory
    converged: bool
    nev_conv: int
    biorth_deviation: float
    stats: SolverStats
    invariant_log: list[dict]
    nullspace_rank: int
    config: BospConfig

    @property
    def max_width(self) -> int:
        return self.stats.max_width


def normalized_residuals(K, M, ip, X, Y, lambdas, KX=None, MY=None):
    """``||H xi - lambda B xi|| / ((1 + lambda) ||xi||)`` with ``xi = [y; x]``."""
    X, Y = as_block(X), as_block(Y)
    lam = np.asarray(lambdas, dtype=np.float64)
    KX = K.apply(X) if KX is None else KX
    MY = M.apply(Y) if MY is None else MY
    R1 = KX - ip.apply_weight(Y) * lam
    R2 = MY - ip.apply_weight(X) * lam
    num = np.sqrt(np.einsum("ij,ij->j", R1, R1) + np.einsum("ij,ij->j", R2, R2))
    den = (1.0 + np.abs(lam)) * np.sqrt(np.einsum("ij,ij->j", X, X)
                                        + np.einsum("ij,ij->j", Y, Y))
    return num / den


def _capped_widths(n_avail, cfg):
    wx = min(cfg.window, n_avail)
    if cfg.nev > n_avail:
        raise ContractViolation(
            f"nev={cfg.nev} exceeds the {n_avail} positive eigenvalues available")
    wp = max(0, min(cfg.nb, n_avail - wx))
    ww = max(0, min(cfg.nb, n_avail - wx - wp))
    # Prefer corrections over the difference directions when space is short.
    if ww < wp:
        wp, ww = ww, wp
    return wx, wp, ww


def initialize(K: LinearOperator, M: LinearOperator, ip: InnerProduct | None,
               ns: GeneralizedNullspace, cfg: BospConfig) -> SolverState:
    """Random start: uniform ``[-1, 1]`` blocks, deflated and biorthonormalized."""
    ip = ip or InnerProduct()
    n = K.dim
    if M.dim != n:
        raise ContractViolation(f"K has size {n}, M has size {M.dim}")
    wx, wp, ww = _capped_widths(n - ns.r, cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    blocks = [rng.uniform(-1.0, 1.0, size=(n, w)) for w in (wx, wx, wp, wp, ww, ww)]
    U = np.hstack(blocks[0::2])
    V = np.hstack(blocks[1::2])
    U, V = biorth_against([ns.as_basis()], U, V, ip)
    out = mgs_biorth(U, V, ip)
    if out.dropped_columns:
        raise InitializationFailure(
            f"{len(out.dropped_columns)} of {U.shape[1]} random columns were dropped")
    U, V = refine_biorth(out.P, out.Q, ip)
    cut = (wx, wx + wp)
    X, P, W = np.hsplit(U, cut)
    Y, Q, Z = np.hsplit(V, cut)
    f = np.asfortranarray
    return SolverState(f(X), f(Y), f(P), f(Q), f(W), f(Z), ns, ip,
                       lambdas=np.full(wx, np.nan), residuals=np.full(wx, np.inf),
                       history=ResidualHistory(cfg.nev, cfg.tol))


def _cross_gram(basis: BiorthBasis, U, V):
    """Largest normalized entry of ``Q0^T B U`` and ``P0^T B V``."""
    if basis.ncols == 0 or U.shape[1] == 0:
        return 0.0
    G1 = basis.BQ.T @ U
    G2 = basis.BP.T @ V
    n1 = np.linalg.norm(basis.Q, axis=0)[:, None] * np.linalg.norm(U, axis=0)
    n2 = np.linalg.norm(basis.P, axis=0)[:, None] * np.linalg.norm(V, axis=0)
    return float(max(np.max(np.abs(G1) / n1), np.max(np.abs(G2) / n2)))


def check_state(state: SolverState) -> dict:
    """Measure the state invariants: biorthogonality of ``(U, V)`` and
    its cross-Grams against the nullspace and every locked pair."""
    U, V = state.U, state.V
    G = state.ip.gram(U, V) - np.eye(U.shape[1])
    cross = [_cross_gram(b, U, V) for b in state.deflation_bases()]
    lam = state.lambdas_converged
    return {
        "iteration": state.iter,
        "biorth": float(np.linalg.norm(G, 2)) if G.size else 0.0,
        "cross_gram": max(cross, default=0.0),
        "nev_conv": state.nev_conv,
        "lambdas_sorted": bool(np.all(np.diff(lam) >= 0)),
    }


def _project_and_biorth(bases, W, Z, ip, passes=2):
    """Deflate ``(W, Z)`` against ``bases`` and biorthonormalize the rest."""
    norms0 = np.minimum(np.linalg.norm(W, axis=0), np.linalg.norm(Z, axis=0))
    W0, Z0 = W, Z
    for _ in range(2):
        W, Z = biorth_against(bases, W, Z, ip)
    # A correction that cancels on one side only (e.g. K = M) still carries
    # new information on the other side; reuse that side for both.
    w_gone = np.linalg.norm(W, axis=0) <= CANCEL_TOL * norms0
    z_gone = np.linalg.norm(Z, axis=0) <= CANCEL_TOL * norms0
    one = w_gone ^ z_gone
    if one.any():
        W0, Z0 = W0.copy(), Z0.copy()
        W0[:, one & w_gone] = Z0[:, one & w_gone]
        Z0[:, one & z_gone] = W0[:, one & z_gone]
        W, Z = W0, Z0
        for _ in range(2):
            W, Z = biorth_against(bases, W, Z, ip)
    keep = (np.linalg.norm(W, axis=0) > CANCEL_TOL * norms0) & \
           (np.linalg.norm(Z, axis=0) > CANCEL_TOL * norms0)
    W, Z = W[:, keep], Z[:, keep]
    for p in range(passes):
        out = mgs_biorth(W, Z, ip)
        W, Z = out.P, out.Q
        if p + 1 < passes:
            W, Z = biorth_against(bases, W, Z, ip)
    return np.asfortranarray(W), np.asfortranarray(Z)


def _recover(state: SolverState, K, M, cfg):
    """Re-deflate and re-biorthonormalize ``(U, V)`` after a leak."""
    k = state.X.shape[1] - state.nlock
    wp = state.P.shape[1]
    U, V = biorth_against(state.deflation_bases(), state.U, state.V, state.ip)
    out = mgs_biorth(U, V, state.ip)
    idx = np.asarray(out.kept_columns, dtype=int)
    parts = (idx < k, (idx >= k) & (idx < k + wp), idx >= k + wp)
    X, P, W = (out.P[:, m] for m in parts)
    Y, Q, Z = (out.Q[:, m] for m in parts)
    state.X = np.asfortranarray(np.hstack([state.X[:, :state.nlock], X]))
    state.Y = np.asfortranarray(np.hstack([state.Y[:, :state.nlock], Y]))
    state.P, state.Q = np.asfortranarray(P), np.asfortranarray(Q)
    state.W, state.Z = np.asfortranarray(W), np.asfortranarray(Z)
    state.stats.recoveries += 1
    log.warning("nullspace leak at iteration %d: re-projected %d columns, %d dropped",
                state.iter, U.shape[1], len(out.dropped_columns))


def _projected_solution(state, K, M, cfg):
    for attempt in (0, 1):
        U, V = state.U, state.V
        try:
            proj = assemble_projected(K, M, U, V)
            return U, V, solve_small_lrep(proj, svd_method=cfg.svd_method)
        except (NullspaceLeak, DegenerateSpectrum):
            if attempt:
                raise
            _recover(state, K, M, cfg)


class _RitzBlock:
    """Ritz vectors ``U Xhat[:, j]`` with their operator images, grown on demand."""

    def __init__(self, K, M, ip, U, V, sol):
        self.K, self.M, self.ip, self.U, self.V, self.sol = K, M, ip, U, V, sol
        n = U.shape[0]
        self.X = self.Y = self.KX = self.MY = empty_block(n)

    @property
    def count(self):
        return self.X.shape[1]

    def extend(self, upto):
        if upto <= self.count:
            return
        cols = slice(self.count, upto)
        Xn = np.asfortranarray(self.U @ self.sol.Xhat[:, cols])
        Yn = np.asfortranarray(self.V @ self.sol.Yhat[:, cols])
        self.X = np.hstack([self.X, Xn])
        self.Y = np.hstack([self.Y, Yn])
        self.KX = np.hstack([self.KX, self.K.apply(Xn)])
        self.MY = np.hstack([self.MY, self.M.apply(Yn)])

    def residuals(self, cols):
        lam = self.sol.lambdas[cols]
        return normalized_residuals(self.K, self.M, self.ip, self.X[:, cols], self.Y[:, cols],
                                    lam, self.KX[:, cols], self.MY[:, cols])


def _gauss_seidel(K, M, ip, lam, X, Y, KX, MY, cfg):
    """``ngs`` sweeps of the block Gauss-Seidel splitting of the correction equations."""
    base_z = ip.apply_weight(X) * lam - MY
    base_w = ip.apply_weight(Y) * lam - KX
    W = np.zeros_like(X)
    for _ in range(cfg.ngs):
        Z, _ = cg_solve(M, ip.apply_weight(W) * lam + base_z,
                        tol=cfg.inner_cg_tol, max_iter=cfg.inner_cg_max_iter)
        W, _ = cg_solve(K, ip.apply_weight(Z) * lam + base_w,
                        tol=cfg.inner_cg_tol, max_iter=cfg.inner_cg_max_iter)
    return W, Z


def _record_history(state, eps, offset):
    """Store residuals of every tracked pair for this iteration.

    ``eps`` holds the freshly computed residuals of window columns starting at
    global index ``offset``; locked pairs keep their stored values.
    """
    h = state.history
    vals = np.full(h.ntracked, np.nan)
    act = np.zeros(h.ntracked, dtype=bool)
    done = np.concatenate([*state.locked_residuals, state.residuals[:state.nlock]])
    m = min(len(done), h.ntracked)
    vals[:m] = done[:m]
    hi = min(offset + len(eps), h.ntracked)
    if hi > offset:
        vals[offset:hi] = eps[:hi - offset]
        act[offset:hi] = True
    h.record(vals, act, state.nev_conv)


def iterate_once(state: SolverState, K: LinearOperator, M: LinearOperator,
                 ip: InnerProduct | None, ns: GeneralizedNullspace,
                 cfg: BospConfig) -> SolverState:
    """One outer iteration: Rayleigh-Ritz, locking, new ``P``/``W`` blocks.

    Converged pairs are counted as a prefix but stay in the search space until
    a whole batch has converged: ``nb`` columns are then locked in place, or
    with the moving mechanism ``2 * nb`` columns are moved out.  The state is
    updated in place and returned; ``state.done`` is set once ``nev`` pairs
    have converged.
    """
    ip = ip or state.ip
    timings = state.stats.timings
    nb = cfg.nb
    state.iter += 1
    if cfg.check_every and (state.iter - 1) % cfg.check_every == 0:
        state.invariant_log.append(check_state(state))

    t0 = time.perf_counter()
    U, V, sol = _projected_solution(state, K, M, cfg)
    d = U.shape[1]
    k = state.X.shape[1] - state.nlock
    state.stats.widths.append(d)
    ritz = _RitzBlock(K, M, ip, U, V, sol)
    ritz.extend(k)
    timings["projected"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    eps = ritz.residuals(slice(0, k))
    bad = np.flatnonzero(~(eps < cfg.tol))
    c = int(bad[0]) if bad.size else k
    offset = state.n_moved + state.nlock
    state.nev_conv_seen = max(state.nev_conv_seen, offset + c)
    timings["residuals"] += time.perf_counter() - t0

    if offset + c >= cfg.nev:
        _record_history(state, eps, offset)
        nl = state.nlock
        state.X = np.asfortranarray(np.hstack([state.X[:, :nl], ritz.X]))
        state.Y = np.asfortranarray(np.hstack([state.Y[:, :nl], ritz.Y]))
        state.lambdas = np.concatenate([state.lambdas[:nl], sol.lambdas[:k]])
        state.residuals = np.concatenate([state.residuals[:nl], eps])
        state.nlock = nl + c
        state.P = state.Q = state.W = state.Z = empty_block(U.shape[0])
        state.done = True
        return state

    # ``m`` leading Ritz pairs leave the active set; ``n_active`` stay.
    if cfg.moving:
        m = 2 * nb * (c // (2 * nb))
        n_active = min(cfg.window, d - m)
    else:
        m = nb * (c // nb)
        n_active = k - m
    T = m + n_active
    ritz.extend(T)
    if T > k:
        eps = np.concatenate([eps, ritz.residuals(slice(k, T))])
    _record_history(state, eps, offset)

    nl = state.nlock
    if cfg.moving and m:
        for j in range(0, m, 2 * nb):
            cols = slice(j, j + 2 * nb)
            state.locked.append(BiorthBasis(ritz.X[:, cols], ritz.Y[:, cols], ip))
            state.locked_lambdas.append(sol.lambdas[cols])
            state.locked_residuals.append(eps[cols])
            state.stats.moves += 1
        keep = slice(0, 0)
    else:
        keep = slice(0, m)
    state.X = np.asfortranarray(np.hstack([state.X[:, :nl], ritz.X[:, keep], ritz.X[:, m:T]]))
    state.Y = np.asfortranarray(np.hstack([state.Y[:, :nl], ritz.Y[:, keep], ritz.Y[:, m:T]]))
    state.lambdas = np.concatenate([state.lambdas[:nl], sol.lambdas[keep], sol.lambdas[m:T]])
    state.residuals = np.concatenate([state.residuals[:nl], eps[keep], eps[m:T]])
    state.nlock = state.X.shape[1] - n_active

    start = nb * (c // nb)
    b = min(nb, T - start)
    batch = np.arange(start, start + b)

    # Change of the Ritz coefficients, restricted to the complement of the
    # kept Ritz pairs.  Rows ``0..k-1`` belong to the previous X block.
    t0 = time.perf_counter()
    E = np.zeros((d, b))
    old = batch < k
    E[batch[old], np.flatnonzero(old)] = 1.0
    XhT, YhT = sol.Xhat[:, :T], sol.Yhat[:, :T]
    Ph = sol.Xhat[:, batch] - E
    Qh = sol.Yhat[:, batch] - E
    scale = np.maximum(np.linalg.norm(sol.Xhat[:, batch], axis=0),
                       np.linalg.norm(sol.Yhat[:, batch], axis=0))
    for _ in range(2):
        Ph = Ph - XhT @ (YhT.T @ Ph)
        Qh = Qh - YhT @ (XhT.T @ Qh)
    keep = (np.linalg.norm(Ph, axis=0) > 1e-12 * scale) & \
           (np.linalg.norm(Qh, axis=0) > 1e-12 * scale)
    out = mgs_biorth(Ph[:, keep], Qh[:, keep])
    room = max(K.dim - ns.r - state.n_moved - state.X.shape[1], 0)
    Pt = np.asfortranarray(U @ out.P[:, :room])
    Qt = np.asfortranarray(V @ out.Q[:, :room])
    timings["pq"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    Wg, Zg = _gauss_seidel(K, M, ip, sol.lambdas[batch], ritz.X[:, batch], ritz.Y[:, batch],
                           ritz.KX[:, batch], ritz.MY[:, batch], cfg)
    bases = [ns.as_basis(), *state.locked,
             BiorthBasis(state.X, state.Y, ip), BiorthBasis(Pt, Qt, ip)]
    room = max(K.dim - ns.r - state.n_moved - state.X.shape[1] - Pt.shape[1], 0)
    Wg, Zg = _project_and_biorth(bases, Wg[:, :room], Zg[:, :room], ip)
    timings["wz"] += time.perf_counter() - t0

    # Ritz vectors inherit the rounding errors of (U, V) amplified by the
    # conditioning of the small problem.  A leaked nullspace component is
    # worse: it has near-zero K-energy, so Rayleigh-Ritz favours it and it
    # grows geometrically.  Re-deflating and re-biorthonormalizing the whole
    # new (U, V) keeps both at rounding level without changing the spans.
    # A second round catches what an ill-conditioned refinement amplifies.
    nl, wp = state.nlock, Pt.shape[1]
    Un = np.hstack([state.X[:, nl:], Pt, Wg])
    Vn = np.hstack([state.Y[:, nl:], Qt, Zg])
    for _ in range(2):
        Un, Vn = biorth_against(state.deflation_bases(), Un, Vn, ip)
        Un, Vn = refine_biorth(Un, Vn, ip)
    state.X[:, nl:], state.Y[:, nl:] = Un[:, :n_active], Vn[:, :n_active]
    state.P, state.Q = Un[:, n_active:n_active + wp], Vn[:, n_active:n_active + wp]
    state.W, state.Z = Un[:, n_active + wp:], Vn[:, n_active + wp:]
    log.debug("iter %d: width %d, converged %d, first unconverged residual %.3e",
              state.iter, d, state.nev_conv, eps[c])
    return state


def _assemble_result(state, K, M, cfg, ns) -> EigenResult:
    # Converged columns that were still active when the loop stopped count too.
    nl = state.nlock
    tail = np.flatnonzero(~(state.residuals[nl:] < cfg.tol))
    nl += int(tail[0]) if tail.size else len(state.residuals) - nl
    lam = np.concatenate([*state.locked_lambdas, state.lambdas[:nl]])
    X = np.hstack([*(b.P for b in state.locked), state.X[:, :nl]])
    Y = np.hstack([*(b.Q for b in state.locked), state.Y[:, :nl]])
    order = np.argsort(lam, kind="stable")[:cfg.nev]
    lam, X, Y = lam[order], np.asfortranarray(X[:, order]), np.asfortranarray(Y[:, order])
    ip = state.ip
    res = normalized_residuals(K, M, ip, X, Y, lam) if lam.size else np.zeros(0)
    dev = float(np.linalg.norm(ip.gram(X, Y) - np.eye(lam.size), 2)) if lam.size else 0.0
    converged = lam.size >= cfg.nev
    if lam.size and not lam[0] > 0:
        raise LrepError(f"non-positive eigenvalue {lam[0]:.3e} in the output")
    if np.any(res > 2 * cfg.tol):
        raise LrepError(f"returned pair has residual {res.max():.3e} above tol {cfg.tol:.1e}")
    return EigenResult(lam, X, Y, state.iter, res, state.history, converged, int(lam.size),
                       dev, state.stats, state.invariant_log, ns.r, cfg)


def solve(K, M, ip: InnerProduct | None = None, cfg: BospConfig | None = None,
          ns: GeneralizedNullspace | None = None, *, rank_hint: int | None = None,
          nev: int | None = None) -> EigenResult:
    """Smallest ``cfg.nev`` positive eigenpairs of ``[[0, K], [M, 0]]``.

    ``K`` must be symmetric positive semi-definite and ``M`` symmetric
    positive definite (both under ``ip`` for the generalized problem).  The
    generalized nullspace is computed unless ``ns`` is given.  When the
    iteration limit is reached the result has ``converged=False`` and holds the
    pairs that did converge.
    """
    if cfg is None:
        if nev is None:
            raise ContractViolation("pass cfg or nev")
        cfg = BospConfig(nev=nev)
    K, M = LinearOperator.wrap(K, "K"), LinearOperator.wrap(M, "M")
    ip = ip or InnerProduct()
    if ns is None:
        ns = compute_nullspace(K, M, r_hint=rank_hint, ip=ip)
    t0 = time.perf_counter()
    state = initialize(K, M, ip, ns, cfg)
    state.stats.timings["initialize"] += time.perf_counter() - t0
    while not state.done and state.iter < cfg.max_outer_iter:
        iterate_once(state, K, M, ip, ns, cfg)
    if cfg.check_every and not state.done:
        state.invariant_log.append(check_state(state))
    return _assemble_result(state, K, M, cfg, ns)


class RegressionFit(tuple):
    """``(alpha, beta)`` of ``r_j = alpha * r_{j-1}**beta``.

    Unpacks as a pair; ``degenerate`` is set when the predecessors are all
    equal so only ``alpha`` is identifiable (``beta`` is reported as 0).
    """

    def __new__(cls, alpha, beta, degenerate=False, npairs=0):
        obj = super().__new__(cls, (alpha, beta))
        obj.degenerate = degenerate
        obj.npairs = npairs
        return obj

    alpha = property(lambda self: self[0])
    beta = property(lambda self: self[1])


def regression_coefficients(history, eigenindex: int = 0,
                            tol: float | None = None) -> RegressionFit:
    """Least-squares fit of ``log r_j = log alpha + beta log r_{j-1}``.

    ``history`` is a :class:`ResidualHistory` (or a plain residual sequence
    for one pair).  Residuals below ``10 * tol`` are treated as
    post-convergence noise and excluded.
    """
    if isinstance(history, ResidualHistory):
        r = history.series(eigenindex)
        tol = history.tol if tol is None else tol
    else:
        r = np.asarray(history, dtype=np.float64).ravel()
    floor = 10.0 * tol if tol else 0.0
    r = r[np.isfinite(r)]
    if r.size < 3:
        raise NotEnoughSamples(f"need at least 3 residuals, have {r.size}")
    prev, cur = r[:-1], r[1:]
    ok = (prev > max(floor, 0.0)) & (cur > max(floor, 0.0))
    prev, cur = np.log(prev[ok]), np.log(cur[ok])
    if prev.size < 2:
        raise NotEnoughSamples(
            f"only {prev.size} residual pairs above the noise floor {floor:.1e}")
    if np.ptp(prev) == 0.0:
        return RegressionFit(float(np.exp(cur.mean())), 0.0, True, prev.size)
    A = np.column_stack([np.ones_like(prev), prev])
    (log_alpha, beta), *_ = np.linalg.lstsq(A, cur, rcond=None)
    return RegressionFit(float(np.exp(log_alpha)), float(beta), False, prev.size)
