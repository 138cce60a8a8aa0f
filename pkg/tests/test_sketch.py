"""Sketch operator realization, application, and sizing helpers."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from sketchla import (
    DimensionMismatch,
    InvalidSpec,
    SketchSpec,
    apply_cost,
    apply_left,
    apply_right,
    describe,
    identity_validation_spec,
    leverage_scores,
    property2_deviation,
    realize,
    suggested_embedding_rows,
    suggested_product_rows,
)

from oracles import hadamard_kron, leverage_normal_eq


def _spec(family, s, m, seed, **kw):
    if family == "leverage" and "scores" not in kw:
        kw["scores"] = np.full(m, 1.0 / m)
    return SketchSpec(family, s, m, seed, **kw)


BASIC_FAMILIES = ("uniform", "leverage", "gaussian", "srht", "countsketch", "osnap")


def test_identity_validation_is_exact():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(17, 5))
    op = realize(identity_validation_spec(17))
    assert np.array_equal(op.as_dense(), np.eye(17))
    assert np.array_equal(apply_left(op, a).dense(), a)
    opr = realize(identity_validation_spec(5))
    assert np.array_equal(apply_right(a, opr).dense(), a)


def test_realization_is_deterministic_per_spec():
    for family in BASIC_FAMILIES:
        s1 = realize(_spec(family, 8, 24, seed=5)).as_dense()
        s2 = realize(_spec(family, 8, 24, seed=5)).as_dense()
        s3 = realize(_spec(family, 8, 24, seed=6)).as_dense()
        assert np.array_equal(s1, s2), family
        assert not np.array_equal(s1, s3), family


def test_apply_left_matches_dense_operator():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(24, 10))
    for family in BASIC_FAMILIES:
        for seed in range(4):
            op = realize(_spec(family, 9, 24, seed=seed))
            got = apply_left(op, a).dense()
            want = op.as_dense() @ a
            assert np.allclose(got, want, atol=1e-12), family


def test_apply_right_is_the_exact_adjoint():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(12, 30))
    for family in BASIC_FAMILIES:
        op = realize(_spec(family, 7, 30, seed=3))
        got = apply_right(a, op).dense()
        want = a @ op.as_dense().T
        assert np.allclose(got, want, atol=1e-12), family


def test_apply_left_keeps_sparse_sparse_for_nnz_families():
    rng = np.random.default_rng(3)
    dense = rng.normal(size=(40, 12)) * (rng.random(size=(40, 12)) < 0.15)
    a = sp.csc_array(dense)
    for family in ("uniform", "countsketch", "osnap"):
        op = realize(_spec(family, 10, 40, seed=1))
        out = apply_left(op, a)
        assert out.is_sparse, family
        assert np.allclose(out.dense(), op.as_dense() @ dense, atol=1e-12)


def test_dimension_mismatch_raises():
    op = realize(_spec("gaussian", 6, 20, seed=0))
    with pytest.raises(DimensionMismatch):
        apply_left(op, np.zeros((19, 3)))


def test_sampling_scales_follow_probabilities():
    m, s = 30, 12
    rng = np.random.default_rng(7)
    scores = rng.random(m)
    op = realize(_spec("leverage", s, m, seed=2, scores=scores))
    probs = scores / scores.sum()
    assert np.allclose(op.probs, probs, atol=1e-12)
    assert np.allclose(op.scales, 1.0 / np.sqrt(s * probs[op.indices]), atol=1e-12)
    dense = op.as_dense()
    assert ((dense != 0).sum(axis=1) == 1).all()  # one source row per sketch row


def test_uniform_sampling_scale_is_sqrt_m_over_s():
    op = realize(_spec("uniform", 5, 20, seed=0))
    nz = op.as_dense()[op.as_dense() != 0]
    assert np.allclose(np.abs(nz), math.sqrt(20 / 5))


def test_leverage_probability_floor_keeps_scales_finite():
    scores = np.zeros(16)
    scores[0] = 1.0
    op = realize(_spec("leverage", 8, 16, seed=11, scores=scores))
    assert np.all(np.isfinite(op.scales))
    assert np.all(op.probs > 0)


def test_gaussian_variance_is_one_over_s():
    op = realize(_spec("gaussian", 64, 400, seed=4))
    assert op.gaussian.std() == pytest.approx(1.0 / 8.0, rel=0.05)


def test_srht_matches_kron_hadamard_replay():
    m, s = 24, 10  # pads to 32
    op = realize(_spec("srht", s, m, seed=5))
    assert op.padded_dim == 32
    h = hadamard_kron(5)
    dense = np.zeros((s, m))
    for t, row in enumerate(op.sampled_rows):
        dense[t] = h[row, :m] * op.signs / math.sqrt(s)
    assert np.allclose(op.as_dense(), dense, atol=1e-12)


def test_srht_power_of_two_input_is_not_padded():
    op = realize(_spec("srht", 4, 16, seed=0))
    assert op.padded_dim == 16


def test_srht_expected_gram_is_identity():
    m, s = 16, 8
    acc = np.zeros((m, m))
    trials = 300
    for seed in range(trials):
        sd = realize(_spec("srht", s, m, seed=seed)).as_dense()
        acc += sd.T @ sd
    acc /= trials
    assert np.allclose(acc, np.eye(m), atol=0.15)


def test_countsketch_is_one_signed_entry_per_column():
    op = realize(_spec("countsketch", 9, 40, seed=6))
    dense = op.as_dense()
    assert ((dense != 0).sum(axis=0) == 1).all()
    nz = dense[dense != 0]
    assert set(np.unique(nz)) <= {-1.0, 1.0}


def test_osnap_places_p_distinct_signed_entries_per_column():
    for p in (1, 2, 3):
        op = realize(_spec("osnap", 11, 25, seed=8, p=p))
        dense = op.as_dense()
        assert ((dense != 0).sum(axis=0) == p).all()
        nz = np.abs(dense[dense != 0])
        assert np.allclose(nz, 1.0 / math.sqrt(p))


def test_composed_applies_parts_innermost_first():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(40, 6))
    inner = _spec("countsketch", 20, 40, seed=1)
    outer = _spec("gaussian", 8, 20, seed=2)
    spec = SketchSpec("composed", 8, 40, seed=0, parts=(outer, inner))
    op = realize(spec)
    got = apply_left(op, a).dense()
    want = realize(outer).as_dense() @ (realize(inner).as_dense() @ a)
    assert np.allclose(got, want, atol=1e-12)
    assert np.allclose(op.as_dense(), realize(outer).as_dense() @ realize(inner).as_dense(), atol=1e-12)


def test_invalid_specs_are_rejected():
    with pytest.raises(InvalidSpec):
        realize(_spec("unknown", 4, 8, seed=0))
    with pytest.raises(InvalidSpec):
        realize(_spec("srht", 9, 8, seed=0))  # srht rows cannot exceed dim
    # with-replacement sampling may oversample the source
    over = realize(_spec("uniform", 9, 8, seed=0))
    assert over.as_dense().shape == (9, 8)
    with pytest.raises(InvalidSpec):
        realize(_spec("osnap", 4, 8, seed=0, p=5))
    with pytest.raises(InvalidSpec):
        realize(SketchSpec("leverage", 4, 8, 0))  # missing scores
    with pytest.raises(InvalidSpec):
        realize(SketchSpec("leverage", 4, 8, 0, scores=np.full(7, 0.1)))
    with pytest.raises(InvalidSpec):
        realize(SketchSpec("gaussian", 4, 8, 0, validation=True))
    with pytest.raises(InvalidSpec):
        realize(SketchSpec("uniform", 4, 8, 0, validation=True))  # s != dim
    inner = _spec("countsketch", 20, 40, seed=1)
    outer = _spec("gaussian", 8, 19, seed=2)
    with pytest.raises(InvalidSpec):
        realize(SketchSpec("composed", 8, 40, seed=0, parts=(outer, inner)))


def test_leverage_scores_match_normal_equations_and_sum_to_rank():
    rng = np.random.default_rng(10)
    a = rng.normal(size=(25, 7))
    lev = leverage_scores(a, side="row")
    assert np.allclose(lev.scores, leverage_normal_eq(a), atol=1e-10)
    assert lev.scores.sum() == pytest.approx(7.0, abs=1e-9)
    # rank-deficient: the sum is the rank, not the column count
    b = rng.normal(size=(25, 3)) @ rng.normal(size=(3, 7))
    assert leverage_scores(b, side="row").scores.sum() == pytest.approx(3.0, abs=1e-8)
    col = leverage_scores(a, side="column")
    assert col.scores.shape == (7,)
    assert col.scores.sum() == pytest.approx(7.0, abs=1e-9)


def test_property2_deviation_zero_for_identity():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(18, 4))
    b = rng.normal(size=(18, 3))
    op = realize(identity_validation_spec(18))
    assert property2_deviation(op, a, b) == pytest.approx(0.0, abs=1e-14)


def test_suggested_rows_are_positive_and_monotone():
    for family in ("leverage", "gaussian", "srht", "countsketch", "osnap"):
        lo = suggested_embedding_rows(family, 4, 0.5, 0.05, source_dim=256)
        hi = suggested_embedding_rows(family, 8, 0.5, 0.05, source_dim=256)
        assert 0 < lo <= hi, family
        tight = suggested_embedding_rows(family, 4, 0.25, 0.05, source_dim=256)
        assert tight >= lo, family
        p_lo = suggested_product_rows(family, 0.5, 0.1, dims=(256, 64))
        p_hi = suggested_product_rows(family, 0.25, 0.1, dims=(256, 64))
        assert 0 < p_lo <= p_hi, family


def test_apply_cost_orders_families_sensibly():
    rng = np.random.default_rng(12)
    dense = rng.normal(size=(512, 32)) * (rng.random(size=(512, 32)) < 0.05)
    a = sp.csc_array(dense)
    cs = apply_cost(realize(_spec("countsketch", 64, 512, seed=0)), a)
    os2 = apply_cost(realize(_spec("osnap", 64, 512, seed=0, p=2)), a)
    ga = apply_cost(realize(_spec("gaussian", 64, 512, seed=0)), a)
    assert cs < os2 < ga
    assert cs == a.nnz


def test_describe_reports_family_and_shape():
    op = realize(_spec("osnap", 12, 50, seed=3, p=2))
    info = describe(op)
    assert info["family"] == "osnap"
    assert info["sketch_rows"] == 12
    assert info["source_dim"] == 50
