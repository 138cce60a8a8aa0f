"""Matrix container and exact factorization kernels.

A MatrixHandle wraps either a dense float64 array (stored column-major) or a
canonical compressed-sparse-column array; everything downstream accepts either
kind, or a bare numpy / scipy.sparse operand, and coerces through as_handle().

Factorizations (thin QR, thin SVD, symmetric eig) are delegated to LAPACK via
numpy.linalg; they are only ever invoked on matrices whose smaller dimension
is on the order of a sketch size. Pseudo-inverse cutoffs follow the usual
rank tolerance max(rows, cols) * sigma_max * eps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionMismatch,
    InvalidSpec,
    IterationFailure,
    NotSquare,
    NotSymmetric,
)

_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True, eq=False)
class MatrixHandle:
    """Dense column-major or CSC-sparse float64 matrix with fixed dims."""

    data: object

    def __post_init__(self):
        d = self.data
        if sp.issparse(d):
            d = sp.csc_array(d).astype(np.float64)
            d.sum_duplicates()
            d.sort_indices()
        else:
            d = np.asarray(d, dtype=np.float64)
            if d.ndim != 2:
                raise DimensionMismatch(f"expected a 2-d matrix, got ndim={d.ndim}")
            d = np.asfortranarray(d)
        object.__setattr__(self, "data", d)

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.data)

    @property
    def nnz(self) -> int:
        if self.is_sparse:
            return int(self.data.nnz)
        return int(np.count_nonzero(self.data))

    def dense(self) -> np.ndarray:
        """The entries as a dense float64 array."""
        if self.is_sparse:
            return self.data.toarray()
        return self.data

    def transpose(self) -> "MatrixHandle":
        return MatrixHandle(self.data.T)

    def fro(self) -> float:
        if self.is_sparse:
            return float(np.sqrt((self.data.data ** 2).sum()))
        return float(np.linalg.norm(self.data))


def as_handle(a) -> MatrixHandle:
    """Coerce a MatrixHandle, ndarray, or scipy sparse matrix to a handle."""
    if isinstance(a, MatrixHandle):
        return a
    return MatrixHandle(a)


def as_dense(a) -> np.ndarray:
    """Densified float64 view of any accepted matrix operand."""
    return as_handle(a).dense()


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """Thin SVD A = U diag(s) V^T truncated at the rank tolerance."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.s.size)


def _rank_cutoff(s: np.ndarray, rows: int, cols: int) -> float:
    if s.size == 0:
        return 0.0
    return max(rows, cols) * float(s[0]) * _EPS


def thin_qr(a):
    """Economy QR: Q (rows x q) with orthonormal columns, T upper-triangular."""
    a = as_dense(a)
    try:
        q, t = np.linalg.qr(a, mode="reduced")
    except np.linalg.LinAlgError as e:  # pragma: no cover - LAPACK hiccup
        raise IterationFailure(f"QR failed: {e}") from e
    return q, t


def thin_svd(a) -> SvdFactors:
    """Thin SVD with singular values below the rank tolerance dropped."""
    a = as_dense(a)
    m, n = a.shape
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise IterationFailure(f"SVD did not converge: {e}") from e
    keep = int(np.sum(s > _rank_cutoff(s, m, n)))
    return SvdFactors(u=u[:, :keep], s=s[:keep], v=vt[:keep, :].T)


def matrix_rank(a) -> int:
    """Numerical rank under the same cutoff thin_svd truncates at."""
    return thin_svd(a).rank


def pseudo_inverse_apply(a, b, side: str = "left") -> np.ndarray:
    """Apply the pseudo-inverse of ``a`` to ``b`` without forming it.

    side="left" computes pinv(a) @ b, side="right" computes b @ pinv(a).
    Rank-deficient ``a`` is handled by the SVD cutoff; a zero ``a`` maps
    everything to zeros.
    """
    b = as_dense(b)
    f = thin_svd(a)
    if side == "left":
        if f.u.shape[0] != b.shape[0]:
            raise DimensionMismatch(
                f"pinv({f.u.shape[0]} rows) @ B with {b.shape[0]} rows"
            )
        return f.v @ ((f.u.T @ b) / f.s[:, None]) if f.rank else np.zeros(
            (f.v.shape[0], b.shape[1])
        )
    if side == "right":
        if b.shape[1] != f.v.shape[0]:
            raise DimensionMismatch(
                f"B with {b.shape[1]} cols @ pinv({f.v.shape[0]} cols)"
            )
        return ((b @ f.v) / f.s[None, :]) @ f.u.T if f.rank else np.zeros(
            (b.shape[0], f.u.shape[0])
        )
    raise InvalidSpec(f"side must be 'left' or 'right', got {side!r}")


def best_rank_k(a, k: int) -> SvdFactors:
    """Best rank-k approximation factors (fewer if the rank is smaller)."""
    a = as_dense(a)
    if not 0 <= k <= min(a.shape):
        raise InvalidSpec(f"k={k} outside [0, {min(a.shape)}]")
    f = thin_svd(a)
    q = min(k, f.rank)
    return SvdFactors(u=f.u[:, :q], s=f.s[:q], v=f.v[:, :q])


def tail_norm(a, k: int) -> float:
    """Frobenius norm of A minus its best rank-k approximation."""
    a = as_dense(a)
    if not 0 <= k <= min(a.shape):
        raise InvalidSpec(f"k={k} outside [0, {min(a.shape)}]")
    s = np.linalg.svd(a, compute_uv=False)
    return float(np.sqrt(np.sum(s[k:] ** 2)))


def symmetric_eig(a, tol: float = 1e-10):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns (V, d) with A = V diag(d) V^T. Raises NotSquare / NotSymmetric
    when the input fails the symmetry contract.
    """
    a = as_dense(a)
    m, n = a.shape
    if m != n:
        raise NotSquare(f"expected square, got {m}x{n}")
    scale = max(1.0, float(np.linalg.norm(a)))
    asym = float(np.linalg.norm(a - a.T))
    if asym > tol * scale:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {tol:.1e} * {scale:.3e}")
    try:
        d, v = np.linalg.eigh((a + a.T) / 2.0)
    except np.linalg.LinAlgError as e:
        raise IterationFailure(f"eigh did not converge: {e}") from e
    order = np.argsort(d)[::-1]
    return v[:, order], d[order]


def fro_norm(a) -> float:
    """Frobenius norm of any accepted matrix operand."""
    return as_handle(a).fro()
