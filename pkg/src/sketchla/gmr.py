"""Generalized matrix regression: min_X ||A - C X R||_F.

The exact minimizer is X* = pinv(C) A pinv(R). The fast solver replaces both
pseudo-inverses with sketched counterparts,

    X~ = pinv(S_C C) (S_C A S_R^T) pinv(R S_R^T),

which touches A only through one left and one right sketch and solves the
small system in O(s_r r^2 + s_c c^2 + s_c s_r min(c, r)) work. The rho
diagnostic measures how much of A's mass the column space of C and row space
of R jointly capture; small rho means sketched and exact solutions are close.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, NotSquare, NotSymmetric, RankCollapse
from .matrix import (
    MatrixHandle,
    as_handle,
    matrix_rank,
    pseudo_inverse_apply,
    symmetric_eig,
    thin_svd,
)
from .sketch import SketchOperator, SketchSpec, apply_left, apply_right, realize


@dataclass(frozen=True, eq=False)
class GmrProblem:
    """A regression instance: data A, left factor C, right factor R."""

    a: MatrixHandle
    c: MatrixHandle
    r: MatrixHandle

    def __post_init__(self):
        a, c, r = as_handle(self.a), as_handle(self.c), as_handle(self.r)
        if c.rows != a.rows:
            raise DimensionMismatch(f"C has {c.rows} rows, A has {a.rows}")
        if r.cols != a.cols:
            raise DimensionMismatch(f"R has {r.cols} cols, A has {a.cols}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True, eq=False)
class GmrSolution:
    """A core X with (optionally) its exact Frobenius residual."""

    core: np.ndarray
    residual_fro: float | None
    exact: bool


@dataclass(frozen=True, eq=False)
class RhoDiagnostic:
    """rho = residual / (column-miss + row-miss); small is favorable."""

    rho: float
    numerator: float
    denominator: float


def _as_operator(s) -> SketchOperator:
    return realize(s) if isinstance(s, SketchSpec) else s


def residual_fro(a, c, x, r) -> float:
    """Exact ||A - C X R||_F, densifying A (desk-scale paths only)."""
    a, c, r = as_handle(a), as_handle(c), as_handle(r)
    approx = c.dense() @ x @ r.dense()
    return float(np.linalg.norm(a.dense() - approx))


def solve_exact(problem: GmrProblem, compute_residual: bool = True) -> GmrSolution:
    """X* = pinv(C) A pinv(R), via thin SVDs of C and R."""
    a, c, r = problem.a, problem.c, problem.r
    fc = thin_svd(c)
    fr = thin_svd(r)
    if fc.rank == 0 or fr.rank == 0:
        core = np.zeros((c.cols, r.rows))
    else:
        mid = fc.u.T @ (a.data @ fr.v)
        mid = mid / fc.s[:, None] / fr.s[None, :]
        core = fc.v @ mid @ fr.u.T
    res = residual_fro(a, c, core, r) if compute_residual else None
    return GmrSolution(core=core, residual_fro=res, exact=True)


def solve_fast(
    problem: GmrProblem,
    sketch_c,
    sketch_r,
    compute_residual: bool = True,
) -> GmrSolution:
    """Sketched core pinv(S_C C) (S_C A S_R^T) pinv(R S_R^T).

    ``sketch_c`` / ``sketch_r`` are SketchSpecs or already-realized operators;
    S_C reads A's rows, S_R reads A's columns. Raises RankCollapse when a
    sketched factor loses rank relative to its source.
    """
    a, c, r = problem.a, problem.c, problem.r
    sc = _as_operator(sketch_c)
    sr = _as_operator(sketch_r)
    if sc.source_dim != a.rows:
        raise DimensionMismatch(f"S_C reads dim {sc.source_dim}, A has {a.rows} rows")
    if sr.source_dim != a.cols:
        raise DimensionMismatch(f"S_R reads dim {sr.source_dim}, A has {a.cols} cols")

    scc = apply_left(sc, c).dense()
    rsr = apply_right(r, sr).dense()
    sas = apply_right(apply_left(sc, a), sr).dense()

    # Rank checks are lazy: a full-column-rank sketched factor cannot have
    # collapsed, so the expensive source-rank SVD only runs on deficiency.
    rank_scc = matrix_rank(scc)
    if rank_scc < c.cols and rank_scc < matrix_rank(c):
        raise RankCollapse(
            f"S_C C has rank {rank_scc}, below rank(C); resketch with more rows"
        )
    rank_rsr = matrix_rank(rsr)
    if rank_rsr < r.rows and rank_rsr < matrix_rank(r):
        raise RankCollapse(
            f"R S_R^T has rank {rank_rsr}, below rank(R); resketch with more rows"
        )

    mid = pseudo_inverse_apply(scc, sas, side="left")
    core = pseudo_inverse_apply(rsr, mid, side="right")
    res = residual_fro(a, c, core, r) if compute_residual else None
    return GmrSolution(core=core, residual_fro=res, exact=False)


def rho(problem: GmrProblem) -> RhoDiagnostic:
    """Residual-vs-miss diagnostic of the (A, C, R) geometry.

    numerator   = ||A - P_C A P_R||_F  (the optimal GMR residual),
    denominator = ||(I - P_C) A P_R||_F + ||P_C A (I - P_R)||_F,
    with P_C / P_R the orthogonal projectors onto range(C) / rowspace(R).
    Returns rho = 0 when the numerator vanishes and +inf when only the
    denominator does.
    """
    a, c, r = problem.a, problem.c, problem.r
    u = thin_svd(c).u
    v = thin_svd(r).v
    a_fro = a.fro()
    ua = u.T @ a.data if u.shape[1] else np.zeros((0, a.cols))
    av = a.data @ v if v.shape[1] else np.zeros((a.rows, 0))
    mid = ua @ v if u.shape[1] and v.shape[1] else np.zeros((u.shape[1], v.shape[1]))

    num = float(np.linalg.norm(a.dense() - u @ mid @ v.T))
    col_miss = float(np.linalg.norm(np.asarray(av) - u @ mid))
    row_miss = float(np.linalg.norm(np.asarray(ua) - mid @ v.T))
    den = col_miss + row_miss

    if num <= 1e-12 * max(1.0, a_fro):
        value = 0.0
    elif den <= 1e-12 * max(1.0, a_fro):
        value = float("inf")
    else:
        value = num / den
    return RhoDiagnostic(rho=value, numerator=num, denominator=den)


def project_symmetric(x) -> np.ndarray:
    """Nearest symmetric matrix, (X + X^T) / 2."""
    x = as_handle(x).dense()
    if x.shape[0] != x.shape[1]:
        raise NotSquare(f"cannot symmetrize a {x.shape[0]}x{x.shape[1]} matrix")
    return (x + x.T) / 2.0


def project_psd(x) -> np.ndarray:
    """Nearest PSD matrix: symmetrize, then clamp negative eigenvalues."""
    sym = project_symmetric(x)
    v, d = symmetric_eig(sym)
    y = (v * np.maximum(d, 0.0)) @ v.T
    return (y + y.T) / 2.0


def solve_fast_symmetric(
    a,
    c,
    sketch_1,
    sketch_2,
    cone: str = "psd",
    compute_residual: bool = True,
) -> GmrSolution:
    """Sketched symmetric regression min_X ||A - C X C^T|| with a cone projection.

    Uses two independent sketches of A's rows and columns,
    X^ = pinv(S_1 C) (S_1 A S_2^T) pinv(C^T S_2^T), then projects X^ onto the
    symmetric or PSD cone. Specs must carry distinct seeds; the estimator's
    unbiasedness argument needs the two sketches independent.
    """
    a, c = as_handle(a), as_handle(c)
    n = a.rows
    if a.cols != n:
        raise NotSquare(f"expected square A, got {n}x{a.cols}")
    asym = float(np.linalg.norm(a.dense() - a.dense().T))
    if asym > 1e-8 * max(1.0, a.fro()):
        raise NotSymmetric(f"A asymmetry {asym:.3e} too large for the symmetric solver")
    if c.rows != n:
        raise DimensionMismatch(f"C has {c.rows} rows, A has {n}")
    if cone not in ("psd", "symmetric"):
        raise InvalidSpec(f"cone must be 'psd' or 'symmetric', got {cone!r}")
    if (
        isinstance(sketch_1, SketchSpec)
        and isinstance(sketch_2, SketchSpec)
        and sketch_1.seed == sketch_2.seed
    ):
        raise InvalidSpec("the two sketches must use distinct seeds")
    s1 = _as_operator(sketch_1)
    s2 = _as_operator(sketch_2)
    if s1.source_dim != n or s2.source_dim != n:
        raise DimensionMismatch("both sketches must read A's dimension")

    s1c = apply_left(s1, c).dense()
    s2c = apply_left(s2, c).dense()
    s1as2 = apply_right(apply_left(s1, a), s2).dense()

    rank_c = None
    for name, sk in (("S_1 C", s1c), ("S_2 C", s2c)):
        rk = matrix_rank(sk)
        if rk < c.cols:
            rank_c = matrix_rank(c) if rank_c is None else rank_c
            if rk < rank_c:
                raise RankCollapse(f"{name} has rank {rk}, below rank(C)")

    mid = pseudo_inverse_apply(s1c, s1as2, side="left")
    raw = pseudo_inverse_apply(s2c.T, mid, side="right")
    core = project_psd(raw) if cone == "psd" else project_symmetric(raw)
    res = residual_fro(a, c, core, c.transpose()) if compute_residual else None
    return GmrSolution(core=core, residual_fro=res, exact=False)


def suggested_sketch_rows(c: int, r: int, a: int = 10) -> int:
    """Rule-of-thumb sketch size s = a * max(c, r); a = 10 mirrors the regime
    where the sketched solver's residual lands within a few percent of optimal."""
    return a * max(c, r)
