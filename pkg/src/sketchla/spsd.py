"""Query-frugal SPSD (kernel) matrix approximation.

All methods build K ~= C X C^T from c sampled columns C and a small core X,
reading kernel entries only through an oracle that counts distinct evaluations:

  - approximate(): uniform columns, then two independent leverage-score
    samplers of the rows of C; the sketched core is projected onto the PSD
    cone. Total queries stay within n*c + s^2 + c.
  - nystrom(): core = pseudo-inverse of the c x c intersection block.
  - fast_spsd_baseline(): one shared sampler on both sides, no projection.
  - optimal_core(): the unrestricted optimum pinv(C) K pinv(C)^T, which
    needs every entry of K and serves as the quality reference.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, InvalidSpec, NotSquare, NotSymmetric, RankCollapse
from .gmr import project_psd
from .matrix import as_handle, matrix_rank, pseudo_inverse_apply, symmetric_eig
from .rng import derive_seed, substream
from .sketch import (
    SketchSpec,
    apply_left,
    identity_validation_spec,
    leverage_scores,
    realize,
)


class KernelOracle:
    """Lazy RBF kernel K_ij = exp(-sigma ||x_i - x_j||^2) with query counting.

    Points are the columns of a d x n array. Entries are computed on first
    touch and cached under the canonical (min, max) pair, so query_count is
    the number of DISTINCT entries ever evaluated; re-reads are free. Cache
    writes are serialized by an internal lock; warm reads need no lock.
    """

    def __init__(self, points, sigma: float):
        self.points = np.asarray(points, dtype=np.float64)
        if self.points.ndim != 2:
            raise InvalidSpec("points must be a d x n array (columns are samples)")
        if sigma <= 0:
            raise InvalidSpec(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)
        self.cache: dict[tuple[int, int], float] = {}
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return int(self.points.shape[1])

    @property
    def query_count(self) -> int:
        return len(self.cache)

    def _check(self, i: int):
        if not 0 <= i < self.n:
            raise IndexOutOfRange(f"index {i} outside [0, {self.n})")

    def entry(self, i: int, j: int) -> float:
        self._check(i)
        self._check(j)
        key = (i, j) if i <= j else (j, i)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        diff = self.points[:, key[0]] - self.points[:, key[1]]
        val = float(np.exp(-self.sigma * (diff ** 2).sum()))
        with self._lock:
            self.cache[key] = val
        return val

    def column(self, j: int) -> np.ndarray:
        """Column j of K; counts only the not-yet-seen entries."""
        self._check(j)
        sq = ((self.points - self.points[:, [j]]) ** 2).sum(axis=0)
        vals = np.exp(-self.sigma * sq)
        with self._lock:
            for i in range(self.n):
                key = (i, j) if i <= j else (j, i)
                hit = self.cache.get(key)
                if hit is None:
                    self.cache[key] = float(vals[i])
                else:
                    vals[i] = hit
        return vals

    def columns(self, idx) -> np.ndarray:
        """The n x len(idx) block of the requested columns."""
        return np.stack([self.column(int(j)) for j in idx], axis=1)


class MatrixKernelOracle:
    """Oracle over an explicit symmetric matrix, with the same counting contract.

    Used to replay an approximation against a densely materialized kernel and
    to approximate arbitrary SPSD matrices.
    """

    def __init__(self, k):
        k = as_handle(k).dense()
        if k.shape[0] != k.shape[1]:
            raise NotSquare(f"kernel must be square, got {k.shape}")
        asym = float(np.linalg.norm(k - k.T))
        if asym > 1e-8 * max(1.0, float(np.linalg.norm(k))):
            raise NotSymmetric(f"kernel asymmetry {asym:.3e} too large")
        self.k = (k + k.T) / 2.0
        self.cache: set[tuple[int, int]] = set()
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return int(self.k.shape[0])

    @property
    def query_count(self) -> int:
        return len(self.cache)

    def _check(self, i: int):
        if not 0 <= i < self.n:
            raise IndexOutOfRange(f"index {i} outside [0, {self.n})")

    def entry(self, i: int, j: int) -> float:
        self._check(i)
        self._check(j)
        with self._lock:
            self.cache.add((i, j) if i <= j else (j, i))
        return float(self.k[i, j])

    def column(self, j: int) -> np.ndarray:
        self._check(j)
        with self._lock:
            self.cache.update((i, j) if i <= j else (j, i) for i in range(self.n))
        return self.k[:, j].copy()

    def columns(self, idx) -> np.ndarray:
        return np.stack([self.column(int(j)) for j in idx], axis=1)


def rbf_entry(oracle, i: int, j: int) -> float:
    """Single kernel entry through the counting oracle."""
    return oracle.entry(i, j)


def rbf_kernel_dense(points, sigma: float) -> np.ndarray:
    """Full dense RBF kernel, column by column (test/bench utility, no counting)."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[1]
    k = np.empty((n, n))
    for j in range(n):
        sq = ((points - points[:, [j]]) ** 2).sum(axis=0)
        k[:, j] = np.exp(-sigma * sq)
    return (k + k.T) / 2.0


def materialize(oracle) -> np.ndarray:
    """Densify the oracle's kernel through its counting interface."""
    return oracle.columns(range(oracle.n))


def spectral_ratio_eta(k_dense, k: int) -> float:
    """Spectral mass ratio eta = ||K_k||_F^2 / ||K||_F^2 of a symmetric matrix."""
    if k < 1:
        raise InvalidSpec(f"k must be >= 1, got {k}")
    a = as_handle(k_dense).dense()
    if a.shape[0] != a.shape[1]:
        raise NotSquare(f"expected square, got {a.shape}")
    asym = float(np.linalg.norm(a - a.T))
    if asym > 1e-8 * max(1.0, float(np.linalg.norm(a))):
        raise NotSymmetric(f"asymmetry {asym:.3e} too large")
    lam2 = np.sort(np.linalg.eigvalsh((a + a.T) / 2.0) ** 2)[::-1]
    total = lam2.sum()
    if total == 0:
        raise InvalidSpec("zero matrix has no spectral ratio")
    return float(lam2[: min(k, lam2.size)].sum() / total)


def tune_rbf_sigma(points, k: int = 15, target: float = 0.6, sample: int = 1024, seed: int = 0):
    """Largest sigma from a log grid whose kernel keeps eta(k) >= target.

    Operates on a uniform subsample of the points when there are more than
    ``sample`` of them (eta needs a dense eigendecomposition). Returns
    (sigma, eta).
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[1]
    if n > sample:
        pick = substream(seed, "sigma-sample").choice(n, size=sample, replace=False)
        points = points[:, np.sort(pick)]
    for sigma in np.logspace(2, -9, 34):
        eta = spectral_ratio_eta(rbf_kernel_dense(points, sigma), k)
        if eta >= target:
            return float(sigma), float(eta)
    raise InvalidSpec(f"no sigma on the grid reaches eta >= {target}")


@dataclass(frozen=True, eq=False)
class SpsdApproximation:
    """Sampled columns C plus a small core X with K ~= C X C^T."""

    c: np.ndarray
    core: np.ndarray
    column_indices: np.ndarray
    queries_used: int
    raw_core: np.ndarray  # pre-projection core, for no-harm diagnostics

    def reconstruct(self) -> np.ndarray:
        return self.c @ self.core @ self.c.T


def _sample_columns(n: int, c: int, seed: int) -> np.ndarray:
    # Without replacement: duplicated columns would make C rank-deficient for free.
    return np.sort(substream(seed, "columns").choice(n, size=c, replace=False))


def _sampler_spec(n: int, s: int, seed, tag: str, scores, validation: bool) -> SketchSpec:
    if validation:
        if s != n:
            raise InvalidSpec("validation mode requires s == n")
        return identity_validation_spec(n, seed=derive_seed(seed, tag))
    return SketchSpec(
        family="leverage", sketch_rows=s, source_dim=n,
        seed=derive_seed(seed, tag), scores=scores,
    )


def _gather_scaled_block(oracle, left_op, right_op) -> np.ndarray:
    """S_1 K S_2^T for sampling operators, entry by entry through the oracle."""
    li, ls = left_op.indices, left_op.scales
    ri, rs = right_op.indices, right_op.scales
    block = np.empty((li.size, ri.size))
    for t in range(li.size):
        for u in range(ri.size):
            block[t, u] = oracle.entry(int(li[t]), int(ri[u]))
    return ls[:, None] * block * rs[None, :]


def _check_sampler_rank(name: str, sketched: np.ndarray, cmat: np.ndarray, cache: dict):
    rk = matrix_rank(sketched)
    if rk < cmat.shape[1]:
        if "rank_c" not in cache:
            cache["rank_c"] = matrix_rank(cmat)
        if rk < cache["rank_c"]:
            raise RankCollapse(f"{name} has rank {rk}, below rank(C)")


def approximate(oracle, c: int, s: int, seed: int, validation: bool = False) -> SpsdApproximation:
    """Query-frugal SPSD approximation with a PSD-projected sketched core.

    Samples c columns uniformly without replacement, computes the row
    leverage scores of C, draws two independent s-row leverage samplers, and
    solves the doubly sketched regression for the core before projecting it
    onto the PSD cone. Touches at most n*c + s^2 + c distinct kernel entries.
    """
    n = oracle.n
    if not 1 <= c <= n:
        raise InvalidSpec(f"c={c} outside [1, n={n}]")
    if s < c:
        raise InvalidSpec(f"s={s} must be at least c={c}")
    start = oracle.query_count

    cols = _sample_columns(n, c, seed)
    cmat = oracle.columns(cols)
    scores = leverage_scores(cmat, side="row").scores
    s1 = realize(_sampler_spec(n, s, seed, "s1", scores, validation))
    s2 = realize(_sampler_spec(n, s, seed, "s2", scores, validation))

    s1c = apply_left(s1, cmat).dense()
    s2c = apply_left(s2, cmat).dense()
    block = _gather_scaled_block(oracle, s1, s2)

    rank_cache: dict = {}
    _check_sampler_rank("S_1 C", s1c, cmat, rank_cache)
    _check_sampler_rank("S_2 C", s2c, cmat, rank_cache)

    mid = pseudo_inverse_apply(s1c, block, side="left")
    raw = pseudo_inverse_apply(s2c.T, mid, side="right")
    core = project_psd(raw)
    return SpsdApproximation(
        c=cmat, core=core, column_indices=cols,
        queries_used=oracle.query_count - start, raw_core=raw,
    )


def nystrom(oracle, c: int, seed: int) -> SpsdApproximation:
    """Classical column-sampling approximation: core = pinv of the c x c block."""
    n = oracle.n
    if not 1 <= c <= n:
        raise InvalidSpec(f"c={c} outside [1, n={n}]")
    start = oracle.query_count
    cols = _sample_columns(n, c, seed)
    cmat = oracle.columns(cols)
    w = cmat[cols, :]
    w = (w + w.T) / 2.0
    v, d = symmetric_eig(w)
    cutoff = w.shape[0] * float(np.max(np.abs(d), initial=0.0)) * np.finfo(np.float64).eps
    keep = d > cutoff
    core = (v[:, keep] / d[keep][None, :]) @ v[:, keep].T
    core = (core + core.T) / 2.0
    return SpsdApproximation(
        c=cmat, core=core, column_indices=cols,
        queries_used=oracle.query_count - start, raw_core=core,
    )


def fast_spsd_baseline(
    oracle, c: int, s: int, seed: int, validation: bool = False
) -> SpsdApproximation:
    """Single-sketch competitor: core = pinv(SC) (S K S^T) pinv(SC)^T, unprojected."""
    n = oracle.n
    if not 1 <= c <= s <= n:
        raise InvalidSpec(f"need 1 <= c <= s <= n, got c={c}, s={s}, n={n}")
    start = oracle.query_count
    cols = _sample_columns(n, c, seed)
    cmat = oracle.columns(cols)
    scores = leverage_scores(cmat, side="row").scores
    op = realize(_sampler_spec(n, s, seed, "s", scores, validation))

    sc = apply_left(op, cmat).dense()
    block = _gather_scaled_block(oracle, op, op)
    _check_sampler_rank("S C", sc, cmat, {})

    mid = pseudo_inverse_apply(sc, block, side="left")
    core = pseudo_inverse_apply(sc.T, mid, side="right")
    core = (core + core.T) / 2.0
    return SpsdApproximation(
        c=cmat, core=core, column_indices=cols,
        queries_used=oracle.query_count - start, raw_core=core,
    )


def optimal_core(oracle, c: int, seed: int) -> SpsdApproximation:
    """Unrestricted optimum pinv(C) K pinv(C)^T; reads the entire kernel."""
    n = oracle.n
    if not 1 <= c <= n:
        raise InvalidSpec(f"c={c} outside [1, n={n}]")
    start = oracle.query_count
    cols = _sample_columns(n, c, seed)
    cmat = oracle.columns(cols)
    k = materialize(oracle)
    mid = pseudo_inverse_apply(cmat, k, side="left")
    core = pseudo_inverse_apply(cmat.T, mid, side="right")
    core = (core + core.T) / 2.0
    return SpsdApproximation(
        c=cmat, core=core, column_indices=cols,
        queries_used=oracle.query_count - start, raw_core=core,
    )


def error_ratio(k_dense, approx: SpsdApproximation) -> float:
    """Relative reconstruction error ||K - C X C^T||_F / ||K||_F."""
    k = as_handle(k_dense).dense()
    return float(np.linalg.norm(k - approx.reconstruct()) / np.linalg.norm(k))


def query_budget(n: int, c: int, s: int) -> int:
    """The accounting bound every approximate() run must respect."""
    return n * c + s * s + c


def suggested_intersection_rows(c: int, eps: float, rho: float) -> int:
    """Sampler size at which the sketched core's error bound kicks in, constant 1.

    s = max(c/sqrt(eps), c/(eps rho^2)) + c log c; heuristic guidance only.
    """
    if not 0 < eps < 1:
        raise InvalidSpec(f"eps must be in (0, 1), got {eps}")
    if rho <= 0:
        raise InvalidSpec(f"rho must be positive, got {rho}")
    base = max(c / math.sqrt(eps), c / (eps * rho ** 2))
    return max(1, math.ceil(base + c * math.log(max(c, 2))))
