import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maskoff.metrics import PSNR_CAP, is_exact_match, l1_metric, psnr, ssim
from oracles import l1_loop, mse_loop, psnr_loop, ssim_loop

unit_images = arrays(np.float64, (12, 12, 3), elements=st.floats(0, 1))


def _pair(seed, shape=(32, 32, 3)):
    rng = np.random.default_rng(seed)
    return rng.random(shape), rng.random(shape)


def test_psnr_identical_is_capped():
    a = np.random.default_rng(0).random((8, 8, 3))
    assert psnr(a, a) == PSNR_CAP == 99.0
    assert is_exact_match(a, a)


def test_psnr_closed_form():
    a = np.zeros((16, 16, 3))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_psnr_l1_match_loop_oracles(seed):
    a, b = _pair(seed, (16, 16, 3))
    assert psnr(a, b) == pytest.approx(psnr_loop(a, b), abs=1e-6)
    assert l1_metric(a, b) == pytest.approx(l1_loop(a, b), abs=1e-9)


def test_l1_extremes():
    assert l1_metric(np.zeros((4, 4, 3)), np.zeros((4, 4, 3))) == 0.0
    assert l1_metric(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == 1.0


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_window_loop(seed):
    a, b = _pair(seed, (20, 20, 3))
    assert ssim(a, b) == pytest.approx(ssim_loop(a, b), abs=1e-6)


def test_ssim_identity_and_inverse():
    rng = np.random.default_rng(7)
    a = np.clip(0.5 + 0.15 * rng.standard_normal((32, 32, 3)), 0, 1)
    assert ssim(a, a) == 1.0
    assert ssim(a, 1 - a) < 0.2


def test_ssim_grayscale_and_too_small():
    a = np.random.default_rng(1).random((16, 16))
    assert ssim(a, a) == 1.0
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        l1_metric(np.zeros((4, 4)), np.zeros((4, 5)))


@settings(max_examples=25, deadline=None)
@given(unit_images, unit_images)
def test_metric_properties(a, b):
    assert l1_metric(a, b) == pytest.approx(l1_metric(b, a))
    assert 0.0 <= l1_metric(a, b) <= 1.0
    s = ssim(a, b)
    assert -1.0 - 1e-9 <= s <= 1.0 + 1e-9
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
    p = psnr(a, b)
    assert p <= PSNR_CAP
    if mse_loop(a, b) > 0:
        assert p == pytest.approx(min(psnr_loop(a, b), PSNR_CAP), abs=1e-6)
