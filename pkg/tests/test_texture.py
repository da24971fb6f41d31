import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cytoscreen import texture
from cytoscreen.exceptions import InvalidInputError, InvalidParameterError
from cytoscreen.imgproc import rgb_to_gray

from oracles import glcm_oracle, homogeneity_oracle


def checkerboard(n=8, lo=0, hi=255):
    yy, xx = np.indices((n, n))
    return np.where((yy + xx) % 2 == 0, lo, hi).astype(np.uint8)


def test_constant_image_all_mass_on_one_diagonal_entry():
    m = texture.glcm(np.full((8, 8), 100, np.uint8))
    q = 100 * 8 // 256
    assert m[q, q] == pytest.approx(1.0) and np.count_nonzero(m) == 1


def test_checkerboard_mass_on_extreme_off_diagonal():
    cfg = texture.GlcmConfig(offsets=((1, 0),))
    m = texture.glcm(checkerboard(2), cfg)
    assert m[0, 7] == pytest.approx(0.5) and m[7, 0] == pytest.approx(0.5)
    assert np.count_nonzero(m) == 2


def test_glcm_matches_pair_counting_oracle():
    rng = np.random.default_rng(0)
    cfg = texture.GlcmConfig()
    for _ in range(10):
        img = rng.integers(0, 256, (8, 8), dtype=np.uint8)
        np.testing.assert_allclose(texture.glcm(img, cfg), glcm_oracle(img, 8, cfg.offsets), atol=1e-12)


def test_glcm_unnormalized_counts_are_integers():
    img = np.random.default_rng(1).integers(0, 256, (6, 9), dtype=np.uint8)
    cfg = texture.GlcmConfig(levels=4, symmetric=False, normalized=False)
    m = texture.glcm(img, cfg)
    np.testing.assert_array_equal(m, glcm_oracle(img, 4, cfg.offsets, symmetric=False, normalized=False))


def test_glcm_colour_input_uses_luma():
    img = np.random.default_rng(2).integers(0, 256, (10, 10, 3), dtype=np.uint8)
    np.testing.assert_array_equal(texture.glcm(img), texture.glcm(rgb_to_gray(img)))


def test_glcm_too_small_for_offset():
    with pytest.raises(InvalidInputError):
        texture.glcm(np.zeros((1, 1), np.uint8))


def test_glcm_config_validation():
    with pytest.raises(InvalidParameterError):
        texture.GlcmConfig(levels=1)
    with pytest.raises(InvalidParameterError):
        texture.GlcmConfig(offsets=((0, 0),))


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(2, 10), st.integers(2, 10))))
def test_glcm_symmetric_and_homogeneity_in_unit_interval(img):
    m = texture.glcm(img)
    np.testing.assert_array_equal(m, m.T)
    h = texture.homogeneity(m)
    assert 0.0 <= h <= 1.0 + 1e-12
    diagonal_only = np.allclose(m, np.diag(np.diag(m)))
    assert (abs(h - 1.0) < 1e-12) == diagonal_only


def test_homogeneity_closed_forms():
    assert texture.homogeneity(np.eye(8) / 8) == pytest.approx(1.0)
    m = np.zeros((8, 8))
    m[0, 7] = m[7, 0] = 0.5
    assert texture.homogeneity(m) == pytest.approx(0.125)


def test_homogeneity_matches_double_sum():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.random((8, 8))
        m /= m.sum()
        assert texture.homogeneity(m) == pytest.approx(homogeneity_oracle(m), abs=1e-12)


def test_homogeneity_rejects_unnormalized():
    with pytest.raises(InvalidInputError):
        texture.homogeneity(np.ones((4, 4)))
    with pytest.raises(InvalidInputError):
        texture.homogeneity(np.ones((2, 3)) / 6)


def test_route_examples():
    const = np.full((16, 16), 30, np.uint8)
    assert texture.route(const, texture.SeparationRule(0.99)) is texture.Route.PREPROCESS
    board = checkerboard(16)
    axis = texture.GlcmConfig(offsets=((1, 0), (0, 1)))
    assert homogeneity_oracle(glcm_oracle(board, 8, axis.offsets)) < 0.5
    assert texture.route(board, texture.SeparationRule(0.5), axis) is texture.Route.NO_PREPROCESS
    # diagonal neighbours of a checkerboard agree, so the default offsets see it as half uniform
    h = texture.image_homogeneity(board)
    assert h == pytest.approx(homogeneity_oracle(glcm_oracle(board, 8, texture.DEFAULT_OFFSETS)))
    assert texture.route(board, texture.SeparationRule(0.5)) is texture.Route.PREPROCESS
    noise = np.random.default_rng(4).integers(0, 256, (16, 16), dtype=np.uint8)
    assert texture.route(noise, texture.SeparationRule(0.0)) is texture.Route.PREPROCESS


def test_route_monotone_in_threshold():
    img = np.random.default_rng(5).integers(0, 256, (16, 16), dtype=np.uint8)
    routes = [texture.route(img, texture.SeparationRule(t)) for t in np.linspace(0, 1, 21)]
    seen_no = False
    for r in routes:
        if r is texture.Route.NO_PREPROCESS:
            seen_no = True
        assert not (seen_no and r is texture.Route.PREPROCESS)


def test_separation_rule_range():
    with pytest.raises(InvalidParameterError):
        texture.SeparationRule(1.5)


def test_calibrate_threshold_picks_best_then_smallest():
    best, scores = texture.calibrate_threshold(lambda t: -abs(t - 0.42))
    assert best == 0.4 and len(scores) == 19
    best, _ = texture.calibrate_threshold(lambda t: 1.0)
    assert best == 0.05
