"""Regression solver: exactness, optimality, diagnostics, cone projections."""

import numpy as np
import pytest

from sketchla import (
    DimensionMismatch,
    GmrProblem,
    InvalidSpec,
    NotSymmetric,
    RankCollapse,
    SketchSpec,
    identity_validation_spec,
    project_psd,
    project_symmetric,
    residual_fro,
    rho,
    solve_exact,
    solve_fast,
    solve_fast_symmetric,
    suggested_sketch_rows,
)

from oracles import gmr_core_normal_eq


def _instance(seed, m=20, n=16, c=5, r=4, rank=None):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(m, n))
    if rank is not None:
        a = rng.normal(size=(m, rank)) @ rng.normal(size=(rank, n))
    cmat = a @ rng.normal(size=(n, c))
    rmat = rng.normal(size=(r, m)) @ a
    return a, cmat, rmat


def test_solve_exact_matches_normal_equation_oracle():
    for seed in range(8):
        a, c, r = _instance(seed)
        sol = solve_exact(GmrProblem(a, c, r))
        want = gmr_core_normal_eq(a, c, r)
        assert np.allclose(sol.core, want, atol=1e-8)
        assert sol.residual_fro == pytest.approx(
            np.linalg.norm(a - c @ want @ r), abs=1e-10
        )
        assert sol.exact


def test_solve_exact_is_a_minimizer():
    a, c, r = _instance(3)
    sol = solve_exact(GmrProblem(a, c, r))
    rng = np.random.default_rng(0)
    for _ in range(25):
        perturbed = sol.core + rng.normal(scale=0.1, size=sol.core.shape)
        assert residual_fro(a, c, perturbed, r) >= sol.residual_fro - 1e-12


def test_solve_fast_with_identity_sketches_equals_exact():
    for seed in range(8):
        a, c, r = _instance(seed, m=24, n=18, c=6, r=5)
        prob = GmrProblem(a, c, r)
        exact = solve_exact(prob)
        fast = solve_fast(
            prob, identity_validation_spec(24), identity_validation_spec(18)
        )
        assert np.allclose(fast.core, exact.core, atol=1e-10)
        assert fast.residual_fro == pytest.approx(exact.residual_fro, abs=1e-10)
        assert not fast.exact


def test_solve_fast_accepts_prerealized_operators():
    from sketchla import realize

    a, c, r = _instance(5)
    prob = GmrProblem(a, c, r)
    op_c = realize(SketchSpec("gaussian", 15, 20, 1))
    op_r = realize(SketchSpec("gaussian", 13, 16, 2))
    s1 = solve_fast(prob, op_c, op_r)
    s2 = solve_fast(prob, SketchSpec("gaussian", 15, 20, 1), SketchSpec("gaussian", 13, 16, 2))
    assert np.array_equal(s1.core, s2.core)


def test_fast_residual_never_beats_exact():
    for seed in range(10):
        a, c, r = _instance(seed, m=30, n=25, c=6, r=6)
        prob = GmrProblem(a, c, r)
        exact = solve_exact(prob)
        fast = solve_fast(
            prob,
            SketchSpec("gaussian", 24, 30, seed + 100),
            SketchSpec("gaussian", 20, 25, seed + 200),
        )
        assert fast.residual_fro >= exact.residual_fro - 1e-10


def test_problem_shape_validation():
    a, c, r = _instance(0)
    with pytest.raises(DimensionMismatch):
        GmrProblem(a, c[:-1], r)
    with pytest.raises(DimensionMismatch):
        GmrProblem(a, c, r[:, :-1])


def test_rank_collapse_detected_and_reported():
    m, n = 50, 40
    a = np.zeros((m, n))
    a[0, :] = np.linspace(1, 2, n)
    c = np.zeros((m, 2))
    c[0] = [1.0, 2.0]
    r = a[:1, :]
    prob = GmrProblem(a, c, r)
    with pytest.raises(RankCollapse):
        solve_fast(prob, SketchSpec("uniform", 3, m, 0), identity_validation_spec(n))
    # leverage sampling aimed at the loaded row does not collapse
    scores = np.zeros(m)
    scores[0] = 1.0
    sol = solve_fast(
        prob,
        SketchSpec("leverage", 3, m, 0, scores=scores),
        identity_validation_spec(n),
    )
    assert np.isfinite(sol.core).all()


def test_rho_zero_when_residual_vanishes():
    rng = np.random.default_rng(1)
    c = rng.normal(size=(18, 4))
    r = rng.normal(size=(3, 15))
    x = rng.normal(size=(4, 3))
    a = c @ x @ r  # optimal residual is exactly zero
    d = rho(GmrProblem(a, c, r))
    assert d.rho == 0.0
    assert d.numerator == pytest.approx(0.0, abs=1e-8)


def test_rho_regular_case_matches_direct_projectors():
    for seed in range(5):
        a, c, r = _instance(seed, m=22, n=17, c=5, r=4)
        d = rho(GmrProblem(a, c, r))
        pc = np.linalg.qr(c)[0]
        pr = np.linalg.qr(r.T)[0]
        p_ca = pc @ (pc.T @ a)
        a_pr = (a @ pr) @ pr.T
        num = np.linalg.norm(a - pc @ (pc.T @ a_pr))
        den = np.linalg.norm(a_pr - pc @ (pc.T @ a_pr)) + np.linalg.norm(p_ca - pc @ (pc.T @ a_pr))
        assert d.numerator == pytest.approx(num, rel=1e-8)
        assert d.denominator == pytest.approx(den, rel=1e-8)
        assert d.rho == pytest.approx(num / den, rel=1e-8)


def test_rho_infinite_when_only_denominator_vanishes():
    # A orthogonal to span(C) and to span(R^T): numerator > 0, denominator = 0
    c = np.zeros((6, 2))
    c[0, 0] = 1.0
    c[1, 1] = 1.0
    r = np.zeros((2, 5))
    r[0, 0] = 1.0
    r[1, 1] = 1.0
    a = np.zeros((6, 5))
    a[4, 4] = 3.0
    d = rho(GmrProblem(a, c, r))
    assert d.rho == np.inf


def test_project_symmetric_and_psd():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(7, 7))
    s = project_symmetric(x)
    assert np.allclose(s, s.T)
    assert np.allclose(s, (x + x.T) / 2)
    p = project_psd(x)
    assert np.allclose(p, p.T)
    assert np.linalg.eigvalsh(p).min() >= -1e-12
    # PSD input is a fixed point
    g = rng.normal(size=(7, 4))
    k = g @ g.T
    assert np.allclose(project_psd(k), k, atol=1e-10)


def test_psd_projection_is_closest_in_frobenius():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 6))
    p = project_psd(x)
    base = np.linalg.norm(x - p)
    for seed in range(20):
        g = np.random.default_rng(seed).normal(size=(6, 3))
        other = g @ g.T  # arbitrary PSD candidate
        assert np.linalg.norm(x - other) >= base - 1e-10


def test_solve_fast_symmetric_produces_psd_core():
    rng = np.random.default_rng(5)
    g = rng.normal(size=(20, 6))
    k = g @ g.T
    c = k[:, :5]
    sol = solve_fast_symmetric(
        k, c, SketchSpec("gaussian", 14, 20, 1), SketchSpec("gaussian", 14, 20, 2)
    )
    vals = np.linalg.eigvalsh((sol.core + sol.core.T) / 2)
    assert vals.min() >= -1e-10 * max(1.0, vals.max())
    assert np.allclose(sol.core, sol.core.T, atol=1e-12)


def test_solve_fast_symmetric_rejects_shared_seeds_and_asymmetry():
    rng = np.random.default_rng(6)
    g = rng.normal(size=(10, 4))
    k = g @ g.T
    c = k[:, :3]
    s1 = SketchSpec("gaussian", 8, 10, 7)
    with pytest.raises(InvalidSpec):
        solve_fast_symmetric(k, c, s1, SketchSpec("gaussian", 8, 10, 7))
    bad = k.copy()
    bad[0, 1] += 1e-3
    with pytest.raises(NotSymmetric):
        solve_fast_symmetric(bad, c, s1, SketchSpec("gaussian", 8, 10, 8))


def test_suggested_sketch_rows_scales_with_a():
    assert suggested_sketch_rows(20, 20, a=10) >= suggested_sketch_rows(20, 20, a=2)
    assert suggested_sketch_rows(20, 20, a=2) > 20
