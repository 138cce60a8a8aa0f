"""Single-pass streaming SVD from composed sketches.

The state holds six operators frozen at construction (OSNAP row/column
sketches Psi, Omega compressed by Gaussian maps G_R, G_C, plus OSNAP
regression sketches S_C, S_R) and three accumulators:

    R = G_R Psi A          (r x n, built block by block)
    C = A Omega^T G_C^T    (m x c, accumulated)
    M = S_C A S_R^T        (s_c x s_r, accumulated)

Column blocks arrive in order; each update touches only the column-aligned
slices of the right sketches, so any block width yields the same accumulators
up to float addition order. finalize() orthonormalizes C and R^T, solves the
small sketched regression for the core N = pinv(S_C U_C) M pinv(V_R^T S_R^T),
and rotates N's SVD back up. A practical one-operator-pair baseline
(psi-tilde / omega-tilde, no compression stage) is provided for head-to-head
comparisons; it degrades when r < c.

Checkpoints serialize config, seed, and raw accumulators to a versioned
binary blob (16-byte magic, little-endian, SHA-256 trailer); operators are
re-realized from the seed on load, so round trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    CheckpointError,
    DegenerateTail,
    DimensionMismatch,
    IncompleteStream,
    InvalidSpec,
    IterationFailure,
    OutOfOrderBlock,
    RankCollapse,
)
from .matrix import as_handle, matrix_rank, pseudo_inverse_apply, thin_qr
from .rng import derive_seed
from .sketch import SketchSpec, apply_left, realize

_MAGIC = b"sketchla-svdckpt"
_VERSION = 1
_HEADER = struct.Struct("<QQQdQQQQQQQQQQ")  # m n k eps c0 r0 c r s_c s_r L p seed cols_seen


@dataclass(frozen=True)
class StreamSvdConfig:
    """Shapes and seed for the streaming factorization."""

    m: int
    n: int
    k: int
    epsilon: float
    c0: int
    r0: int
    c: int
    r: int
    s_c: int
    s_r: int
    block_size: int
    seed: int
    p: int = 2

    def __post_init__(self):
        if self.k < 1:
            raise InvalidSpec(f"k must be >= 1, got {self.k}")
        if not 0 < self.epsilon < 1:
            raise InvalidSpec(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not self.k <= self.c <= self.m:
            raise InvalidSpec(f"need k <= c <= m, got k={self.k}, c={self.c}, m={self.m}")
        if not self.k <= self.r <= self.n:
            raise InvalidSpec(f"need k <= r <= n, got k={self.k}, r={self.r}, n={self.n}")
        if self.c0 < self.c or self.r0 < self.r:
            raise InvalidSpec("compression sources c0/r0 must be at least c/r")
        if self.s_c < self.c or self.s_r < self.r:
            raise InvalidSpec("regression sketches s_c/s_r must be at least c/r")
        if self.block_size < 1:
            raise InvalidSpec(f"block_size must be >= 1, got {self.block_size}")
        if self.p < 1:
            raise InvalidSpec(f"p must be >= 1, got {self.p}")


def default_stream_config(
    m: int,
    n: int,
    k: int,
    epsilon: float,
    seed: int,
    block_size: int = 256,
    gamma: float = 0.5,
    p: int = 2,
) -> StreamSvdConfig:
    """Size the operators from (k, epsilon) with constant 1.

    c = r = k/eps; the OSNAP stages get (k/eps)^(1+gamma) rows; the regression
    sketches get k/eps^1.5 + (k/eps)^(1+gamma) rows, all clamped to the dims.
    """
    ke = k / epsilon
    c = min(m, max(k, math.ceil(ke)))
    r = min(n, max(k, math.ceil(ke)))
    c0 = min(n, max(c, math.ceil(ke ** (1.0 + gamma))))
    r0 = min(m, max(r, math.ceil(ke ** (1.0 + gamma))))
    s_c = min(m, max(c, math.ceil(k / epsilon ** 1.5 + ke ** (1.0 + gamma))))
    s_r = min(n, max(r, math.ceil(k / epsilon ** 1.5 + ke ** (1.0 + gamma))))
    return StreamSvdConfig(
        m=m, n=n, k=k, epsilon=epsilon, c0=c0, r0=r0, c=c, r=r,
        s_c=s_c, s_r=s_r, block_size=min(block_size, n), seed=seed, p=p,
    )


@dataclass(frozen=True, eq=False)
class LowRankFactors:
    """U diag(sigma) V^T with orthonormal U, V and q = min(c, r) columns."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.sigma.size)

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def _osnap(rows, dim, seed, tag, p):
    return realize(SketchSpec("osnap", rows, dim, derive_seed(seed, tag), p=p))


def _gauss(rows, dim, seed, tag):
    return realize(SketchSpec("gaussian", rows, dim, derive_seed(seed, tag)))


class StreamSvdState:
    """Mutable accumulator state for one pass over A's column blocks."""

    def __init__(self, config: StreamSvdConfig):
        self.config = config
        cfg = config
        self.psi = _osnap(cfg.r0, cfg.m, cfg.seed, "psi", cfg.p)
        self.omega = _osnap(cfg.c0, cfg.n, cfg.seed, "omega", cfg.p)
        self.g_r = _gauss(cfg.r, cfg.r0, cfg.seed, "g_r")
        self.g_c = _gauss(cfg.c, cfg.c0, cfg.seed, "g_c")
        self.s_c_op = _osnap(cfg.s_c, cfg.m, cfg.seed, "s_c", cfg.p)
        self.s_r_op = _osnap(cfg.s_r, cfg.n, cfg.seed, "s_r", cfg.p)
        self.c_acc = np.zeros((cfg.m, cfg.c))
        self.r_acc = np.zeros((cfg.r, cfg.n))
        self.m_acc = np.zeros((cfg.s_c, cfg.s_r))
        self.columns_seen = 0
        self._result: LowRankFactors | None = None

    def ingest_block(self, block, col_offset: int):
        """Fold in columns [col_offset, col_offset + width) of A.

        Blocks must arrive contiguously in column order; any width works and
        the accumulators agree across widths to float addition order.
        """
        if self._result is not None:
            raise InvalidSpec("stream already finalized")
        block = as_handle(block)
        cfg = self.config
        if block.rows != cfg.m:
            raise DimensionMismatch(f"block has {block.rows} rows, stream expects {cfg.m}")
        if col_offset != self.columns_seen:
            raise OutOfOrderBlock(
                f"expected columns at offset {self.columns_seen}, got {col_offset}"
            )
        width = block.cols
        if self.columns_seen + width > cfg.n:
            raise DimensionMismatch(
                f"block overruns the stream: {self.columns_seen}+{width} > {cfg.n}"
            )
        lo, hi = col_offset, col_offset + width

        compressed = apply_left(self.g_r, apply_left(self.psi, block)).dense()
        self.r_acc[:, lo:hi] = compressed

        omega_slice = self.omega.matrix[:, lo:hi]
        right = np.asarray((self.g_c.gaussian @ omega_slice).T)
        prod = block.data @ right
        self.c_acc += prod.toarray() if hasattr(prod, "toarray") else np.asarray(prod)

        sketched = apply_left(self.s_c_op, block).data
        s_r_slice = self.s_r_op.matrix[:, lo:hi]
        mid = sketched @ s_r_slice.T
        self.m_acc += mid.toarray() if hasattr(mid, "toarray") else np.asarray(mid)

        self.columns_seen += width

    def finalize(self) -> LowRankFactors:
        """Solve the sketched core and rotate back; idempotent once complete."""
        if self._result is not None:
            return self._result
        cfg = self.config
        if self.columns_seen < cfg.n:
            raise IncompleteStream(
                f"only {self.columns_seen} of {cfg.n} columns ingested"
            )
        u_c, _ = thin_qr(self.c_acc)
        v_r, _ = thin_qr(self.r_acc.T)
        su = apply_left(self.s_c_op, u_c).dense()
        sv = apply_left(self.s_r_op, v_r).dense()
        if matrix_rank(su) < cfg.c:
            raise RankCollapse(f"S_C U_C lost rank (< {cfg.c}); enlarge s_c")
        if matrix_rank(sv) < cfg.r:
            raise RankCollapse(f"S_R V_R lost rank (< {cfg.r}); enlarge s_r")
        mid = pseudo_inverse_apply(su, self.m_acc, side="left")
        core = pseudo_inverse_apply(sv.T, mid, side="right")
        try:
            u_n, sigma, v_nt = np.linalg.svd(core, full_matrices=False)
        except np.linalg.LinAlgError as e:
            raise IterationFailure(f"core SVD did not converge: {e}") from e
        self._result = LowRankFactors(u=u_c @ u_n, sigma=sigma, v=v_r @ v_nt.T)
        return self._result

    def memory_profile(self) -> dict:
        """Float64 counts per stored field; backs the space-contract test."""
        cfg = self.config
        profile = {
            "c_acc": self.c_acc.size,
            "r_acc": self.r_acc.size,
            "m_acc": self.m_acc.size,
            "psi": int(self.psi.matrix.nnz),
            "omega": int(self.omega.matrix.nnz),
            "g_r": self.g_r.gaussian.size,
            "g_c": self.g_c.gaussian.size,
            "s_c_op": int(self.s_c_op.matrix.nnz),
            "s_r_op": int(self.s_r_op.matrix.nnz),
        }
        profile["total"] = sum(profile.values())
        return profile


def fast_sp_svd(a, config: StreamSvdConfig) -> LowRankFactors:
    """One-call convenience: stream ``a`` through a fresh state in config-sized blocks."""
    a = as_handle(a)
    if (a.rows, a.cols) != (config.m, config.n):
        raise DimensionMismatch(
            f"matrix is {a.rows}x{a.cols}, config says {config.m}x{config.n}"
        )
    state = StreamSvdState(config)
    for lo in range(0, config.n, config.block_size):
        hi = min(lo + config.block_size, config.n)
        state.ingest_block(a.data[:, lo:hi], lo)
    return state.finalize()


class PracticalSpSvdState:
    """Baseline single-pass SVD with one directly sized operator pair.

    R = psi_tilde A (r x n) and C = A omega_tilde (m x c) accumulate per
    block; finalize solves N = pinv(psi_tilde U_C) R V_R. Accuracy degrades
    when r < c (the small system turns ill-posed), hence the warning.
    """

    def __init__(self, m, n, c, r, seed, family: str = "gaussian", p: int = 2):
        if not 1 <= c <= m:
            raise InvalidSpec(f"need 1 <= c <= m, got c={c}, m={m}")
        if not 1 <= r <= n:
            raise InvalidSpec(f"need 1 <= r <= n, got r={r}, n={n}")
        if r < c:
            warnings.warn(
                "practical single-pass SVD with r < c is ill-conditioned",
                stacklevel=2,
            )
        self.m, self.n, self.c, self.r = m, n, c, r
        self.psi = realize(SketchSpec(family, r, m, derive_seed(seed, "psi"), p=p))
        self.omega = realize(SketchSpec(family, c, n, derive_seed(seed, "omega"), p=p))
        self.c_acc = np.zeros((m, c))
        self.r_acc = np.zeros((r, n))
        self.columns_seen = 0
        self._result: LowRankFactors | None = None

    def ingest_block(self, block, col_offset: int):
        if self._result is not None:
            raise InvalidSpec("stream already finalized")
        block = as_handle(block)
        if block.rows != self.m:
            raise DimensionMismatch(f"block has {block.rows} rows, stream expects {self.m}")
        if col_offset != self.columns_seen:
            raise OutOfOrderBlock(
                f"expected columns at offset {self.columns_seen}, got {col_offset}"
            )
        width = block.cols
        if self.columns_seen + width > self.n:
            raise DimensionMismatch("block overruns the stream")
        lo, hi = col_offset, col_offset + width
        self.r_acc[:, lo:hi] = apply_left(self.psi, block).dense()
        if self.omega.gaussian is not None:
            right = self.omega.gaussian[:, lo:hi].T
        else:
            right = self.omega.matrix[:, lo:hi].toarray().T
        prod = block.data @ right
        self.c_acc += prod.toarray() if hasattr(prod, "toarray") else np.asarray(prod)
        self.columns_seen += width

    def finalize(self) -> LowRankFactors:
        if self._result is not None:
            return self._result
        if self.columns_seen < self.n:
            raise IncompleteStream(f"only {self.columns_seen} of {self.n} columns ingested")
        u_c, _ = thin_qr(self.c_acc)
        v_r, _ = thin_qr(self.r_acc.T)
        pu = apply_left(self.psi, u_c).dense()
        if matrix_rank(pu) < min(self.c, self.r):
            raise RankCollapse("psi_tilde U_C lost rank; enlarge r")
        core = pseudo_inverse_apply(pu, self.r_acc @ v_r, side="left")
        try:
            u_n, sigma, v_nt = np.linalg.svd(core, full_matrices=False)
        except np.linalg.LinAlgError as e:
            raise IterationFailure(f"core SVD did not converge: {e}") from e
        self._result = LowRankFactors(u=u_c @ u_n, sigma=sigma, v=v_r @ v_nt.T)
        return self._result


def practical_sp_svd(
    a, c: int, r: int, seed: int, block_size: int = 256, family: str = "gaussian"
) -> LowRankFactors:
    """Run the practical baseline over ``a`` in column blocks."""
    a = as_handle(a)
    state = PracticalSpSvdState(a.rows, a.cols, c, r, seed, family=family)
    for lo in range(0, a.cols, block_size):
        hi = min(lo + block_size, a.cols)
        state.ingest_block(a.data[:, lo:hi], lo)
    return state.finalize()


def sf_deviation(p_factor, a, k: int, side: str = "left") -> float:
    """Empirical spectral-Frobenius projection quality.

    For an orthonormal factor Q, returns k ||(I - QQ^T) A||_2^2 / ||A - A_k||_F^2
    (side="left"; the transposed variant for side="right"). Values <= eps
    certify an SF(eps, k) projection. Raises DegenerateTail when A is exactly
    rank k (the ratio is 0/0).
    """
    if side not in ("left", "right"):
        raise InvalidSpec(f"side must be 'left' or 'right', got {side!r}")
    q = np.asarray(p_factor, dtype=np.float64)
    if q.ndim != 2:
        raise InvalidSpec("projection factor must be a 2-d orthonormal basis")
    ortho = np.linalg.norm(q.T @ q - np.eye(q.shape[1]))
    if ortho > 1e-8:
        raise InvalidSpec(f"factor is not orthonormal (deviation {ortho:.3e})")
    a = as_handle(a).dense()
    if not 0 <= k <= min(a.shape):
        raise InvalidSpec(f"k={k} outside [0, {min(a.shape)}]")
    svals = np.linalg.svd(a, compute_uv=False)
    tail = float(np.sqrt((svals[k:] ** 2).sum()))
    if tail <= 1e-12 * max(1.0, float(np.linalg.norm(a))):
        raise DegenerateTail(f"||A - A_k||_F = {tail:.3e} is numerically zero")
    if side == "left":
        if q.shape[0] != a.shape[0]:
            raise DimensionMismatch("left factor must span A's rows")
        resid = a - q @ (q.T @ a)
    else:
        if q.shape[0] != a.shape[1]:
            raise DimensionMismatch("right factor must span A's columns")
        resid = a - (a @ q) @ q.T
    spectral = float(np.linalg.norm(resid, 2))
    return k * spectral ** 2 / tail ** 2


def save_checkpoint(state: StreamSvdState, path):
    """Serialize a mid-stream state; bit-exact to restore. Finalized states
    have nothing left to resume and are rejected."""
    if state._result is not None:
        raise InvalidSpec("cannot checkpoint a finalized stream")
    cfg = state.config
    header = _HEADER.pack(
        cfg.m, cfg.n, cfg.k, cfg.epsilon, cfg.c0, cfg.r0, cfg.c, cfg.r,
        cfg.s_c, cfg.s_r, cfg.block_size, cfg.p,
        cfg.seed & ((1 << 64) - 1), state.columns_seen,
    )
    body = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for arr in (state.c_acc, state.r_acc, state.m_acc)
    )
    blob = _MAGIC + struct.pack("<I", _VERSION) + header + body
    blob += hashlib.sha256(blob).digest()
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> StreamSvdState:
    """Restore a stream state; operators are re-realized from the stored seed."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 4 + _HEADER.size + 32:
        raise CheckpointError("checkpoint is truncated")
    if blob[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError("bad magic; not a stream checkpoint")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("checksum mismatch; checkpoint is corrupt")
    off = len(_MAGIC)
    (version,) = struct.unpack_from("<I", blob, off)
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off += 4
    m, n, k, eps, c0, r0, c, r, s_c, s_r, bs, p, seed, seen = _HEADER.unpack_from(
        blob, off
    )
    off += _HEADER.size
    cfg = StreamSvdConfig(
        m=m, n=n, k=k, epsilon=eps, c0=c0, r0=r0, c=c, r=r,
        s_c=s_c, s_r=s_r, block_size=bs, seed=seed, p=p,
    )
    state = StreamSvdState(cfg)
    expected = (m * c + r * n + s_c * s_r) * 8
    if len(payload) - off != expected:
        raise CheckpointError(
            f"accumulator payload is {len(payload) - off} bytes, expected {expected}"
        )
    for name, shape in (("c_acc", (m, c)), ("r_acc", (r, n)), ("m_acc", (s_c, s_r))):
        count = shape[0] * shape[1]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
        setattr(state, name, arr.copy())
        off += count * 8
    state.columns_seen = int(seen)
    return state
