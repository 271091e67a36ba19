import math

import numpy as np
import pytest
from conftest import brute_psnr, brute_ssim

from quartersr.errors import DimensionMismatchError
from quartersr.metrics import gaussian_window, psnr, ssim


class TestPsnr:
    def test_identical_images_are_infinite(self):
        img = np.random.default_rng(0).uniform(0, 255, (8, 8))
        assert math.isinf(psnr(img, img))

    def test_maximal_error_is_zero_db(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 255.0)
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_offset_closed_form(self):
        a = np.full((6, 6), 100.0)
        b = np.full((6, 6), 116.0)
        expected = 10.0 * math.log10(255.0**2 / 16.0**2)
        assert psnr(a, b) == pytest.approx(expected, rel=1e-12)
        assert abs(expected - 24.0484) < 5e-4

    def test_symmetry(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = rng.uniform(0, 255, (7, 9))
            b = rng.uniform(0, 255, (7, 9))
            assert psnr(a, b) == psnr(b, a)

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            a = rng.uniform(0, 255, (12, 10))
            b = rng.uniform(0, 255, (12, 10))
            assert psnr(a, b) == pytest.approx(brute_psnr(a, b), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSsim:
    def test_identical_images_are_one(self):
        img = np.random.default_rng(1).uniform(0, 255, (16, 16))
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_constant_pair_closed_form(self):
        """With zero variance only the luminance term survives."""
        a = np.full((16, 16), 100.0)
        b = np.full((16, 16), 150.0)
        expected = 30006.5025 / 32506.5025
        assert ssim(a, b) == pytest.approx(expected, rel=1e-12)

    def test_anticorrelated_structure_is_negative(self):
        yy, xx = np.mgrid[0:24, 0:24]
        checker = 60.0 * ((xx + yy) % 2)
        a = 100.0 + checker
        b = 160.0 - checker
        assert ssim(a, b) < 0.0

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            a = rng.uniform(0, 255, (15, 13))
            b = rng.uniform(0, 255, (15, 13))
            v = ssim(a, b)
            assert v == pytest.approx(ssim(b, a), rel=1e-12)
            assert -1.0 <= v <= 1.0

    def test_matches_windowed_reference(self):
        rng = np.random.default_rng(13)
        for _ in range(3):
            a = rng.uniform(0, 255, (18, 14))
            b = np.clip(a + rng.normal(0, 25, a.shape), 0, 255)
            assert ssim(a, b) == pytest.approx(brute_ssim(a, b), rel=1e-9)

    def test_image_smaller_than_window(self):
        with pytest.raises(DimensionMismatchError):
            ssim(np.zeros((10, 32)), np.zeros((10, 32)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))


def test_gaussian_window_normalized_and_symmetric():
    win = gaussian_window()
    assert win.shape == (11, 11)
    assert win.sum() == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(win, win.T)
    np.testing.assert_allclose(win, win[::-1, ::-1])
    assert win[5, 5] == win.max()
