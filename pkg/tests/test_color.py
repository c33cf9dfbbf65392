import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risp import tensor as T
from risp.color import (
    GAMMA_GRAD_CAP, GAMMA_NEG_SLOPE, RGB_TO_YUV, YUV_TO_RGB, MaskKind, MaskMode, gamma_correct, luminance,
    overexposure_mask, rgb_to_yuv, yuv_to_rgb,
)
from risp.gradcheck import check_gradients
from risp.tensor import Tensor

GAMMA = 1 / 3.6


def pixel(r, g, b):
    return np.array([r, g, b], dtype=np.float32).reshape(3, 1, 1)


class TestYuv:
    def test_matrix_digits(self):
        expected = [[0.299, 0.587, 0.114], [-0.14713, -0.28886, 0.436], [0.615, -0.51499, -0.10001]]
        assert RGB_TO_YUV.tolist() == expected

    def test_inverse_residual(self):
        assert np.abs(RGB_TO_YUV @ YUV_TO_RGB - np.eye(3)).max() < 1e-10

    def test_black(self):
        np.testing.assert_array_equal(rgb_to_yuv(pixel(0, 0, 0)).data, 0.0)
        np.testing.assert_array_equal(yuv_to_rgb(pixel(0, 0, 0)).data, 0.0)

    def test_white(self):
        y, u, v = rgb_to_yuv(np.ones((3, 1, 1), np.float64)).data.ravel()
        assert y == pytest.approx(1.0, abs=1e-6)
        assert u == pytest.approx(0.00001, abs=1e-6)
        assert v == pytest.approx(0.0, abs=1e-6)

    def test_known_luminance(self):
        y = rgb_to_yuv(pixel(1, 0.97, 0.9)).data[0].item()
        assert y == pytest.approx(0.97099, abs=1e-5)
        assert luminance(pixel(1, 0.97, 0.9)).item() == pytest.approx(0.299 + 0.587 * 0.97 + 0.114 * 0.9, abs=1e-7)

    def test_roundtrip_random(self):
        x = np.random.default_rng(0).random((2, 3, 8, 8)).astype(np.float32)
        np.testing.assert_allclose(yuv_to_rgb(rgb_to_yuv(x)).data, x, atol=1e-5)

    def test_y_only_is_gray(self):
        out = yuv_to_rgb(pixel(0.6, 0, 0)).data.ravel()
        np.testing.assert_allclose(out, 0.6, atol=1e-4)

    def test_channel_count_rejected(self):
        with pytest.raises(ValueError, match="3 channels"):
            rgb_to_yuv(np.zeros((4, 2, 2)))

    def test_gradient(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((3, 4, 4))
        assert check_gradients(lambda x: (yuv_to_rgb(rgb_to_yuv(x) * 1.5) * Tensor(w, dtype=x.dtype)).sum(),
                               [rng.random((3, 4, 4))]) < 1e-3


class TestMask:
    def test_white_all_ones(self):
        m = overexposure_mask(np.ones((3, 5, 6)))
        assert m.shape == (1, 5, 6) and m.dtype == np.float32
        assert (m == 1).all()

    def test_known_pixel_both_modes(self):
        p = pixel(1, 0.97, 0.9)
        assert overexposure_mask(p, MaskMode.luminance_y()).item() == 0.0
        assert overexposure_mask(p, MaskMode.max_rgb()).item() == 1.0

    def test_batched_shape(self):
        assert overexposure_mask(np.zeros((2, 3, 4, 4))).shape == (2, 1, 4, 4)

    def test_inclusive_threshold(self):
        img = pixel(0.8, 0.6, 0.7)
        y = float(luminance(img).item())
        assert overexposure_mask(img, MaskMode.luminance_y(y)).item() == 1.0
        assert overexposure_mask(img, MaskMode.luminance_y(np.nextafter(y, 2.0))).item() == 0.0
        assert overexposure_mask(img, MaskMode.max_rgb(0.8)).item() == 1.0

    def test_single_pixel_flip(self):
        img = np.full((3, 4, 4), 0.979)
        base = overexposure_mask(img)
        img[:, 2, 1] = 0.977
        flipped = overexposure_mask(img)
        diff = base != flipped
        assert diff.sum() == 1 and diff[0, 2, 1]

    def test_idempotent(self):
        img = np.random.default_rng(0).random((3, 16, 16))
        np.testing.assert_array_equal(overexposure_mask(img), overexposure_mask(img.copy()))

    def test_parse(self):
        assert MaskMode.parse("y").kind is MaskKind.LUMINANCE_Y
        assert MaskMode.parse("maxrgb") == MaskMode(MaskKind.MAX_RGB, 0.99)
        with pytest.raises(ValueError):
            MaskMode.parse("hsv")

    @pytest.mark.parametrize("t", [0.0, -0.1, 1.5])
    def test_threshold_range(self, t):
        with pytest.raises(ValueError):
            MaskMode(MaskKind.LUMINANCE_Y, t)


class TestGamma:
    @pytest.mark.parametrize("g", [GAMMA, 0.5, 1.0])
    def test_fixed_points(self, g):
        np.testing.assert_array_equal(gamma_correct(np.array([0.0, 1.0]), g).data, [0.0, 1.0])

    def test_half(self):
        assert gamma_correct(np.array([0.5]), GAMMA).item() == pytest.approx(0.82486, abs=1e-4)

    def test_identity_at_one(self):
        x = Tensor(np.random.default_rng(0).random(5))
        assert gamma_correct(x, 1.0) is x

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=200, deadline=None)
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        ya, yb = gamma_correct(np.array([lo, hi], np.float64), GAMMA).data
        if lo < hi:
            assert ya <= yb
        else:
            assert ya == yb

    def test_gamma_range(self):
        for g in (0.0, 1.2, -1.0):
            with pytest.raises(ValueError):
                gamma_correct(np.ones(2), g)

    def test_checked_mode_negative(self):
        with T.checked_mode():
            with pytest.raises(ValueError, match="negative"):
                gamma_correct(np.array([-0.1, 0.5]), GAMMA)
        assert gamma_correct(np.array([-0.1]), GAMMA).item() == 0.0

    def test_gradient_cap_at_zero(self):
        x = Tensor(np.array([0.0, 1.0, -0.5]), requires_grad=True)
        gamma_correct(x, GAMMA).sum().backward()
        assert x.grad[0] == pytest.approx(GAMMA_GRAD_CAP)
        assert x.grad[1] == pytest.approx(GAMMA)
        assert x.grad[2] == GAMMA_NEG_SLOPE

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.05, 1.0, (2, 5))
        assert check_gradients(lambda t: (gamma_correct(t, GAMMA) ** 2).mean(), [x], eps=1e-4) < 1e-3
