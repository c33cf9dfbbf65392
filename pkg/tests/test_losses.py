import numpy as np
import pytest

from oracles import ref_blur, ref_ms_ssim, ref_ssim
from risp import losses as L
from risp.gradcheck import check_gradients
from risp.tensor import Tensor

SMALL = L.MsSsimL1Config.small(2, 5)
GAMMA = 1 / 3.6


def rand(seed, shape=(1, 3, 32, 32)):
    return np.random.default_rng(seed).random(shape)


def val(t):
    return float(t.data)


class TestPointwise:
    def test_l2_self(self):
        x = rand(0)
        assert val(L.l2(x, x)) == 0.0

    def test_ones_zeros(self):
        assert val(L.l1(np.ones(5), np.zeros(5))) == 1.0
        assert val(L.l2(np.ones(5), np.zeros(5))) == 1.0

    def test_uniform_offset(self):
        x = rand(1, (3, 4))
        assert val(L.l2(Tensor(x + 0.1, dtype=np.float64), Tensor(x, dtype=np.float64))) == pytest.approx(0.01)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            L.l1(np.zeros((2, 3)), np.zeros((3, 2)))


class TestSsim:
    def test_self(self):
        x = rand(2, (3, 24, 24))
        assert val(L.ssim(x, x)) == pytest.approx(1.0, abs=1e-6)
        assert val(L.ms_ssim(rand(3, (1, 3, 48, 48)), rand(3, (1, 3, 48, 48)))) == pytest.approx(1.0, abs=1e-6)

    def test_checkerboard_inverse(self):
        board = (np.indices((32, 32)).sum(axis=0) % 2).astype(np.float64)[None]
        got = val(L.ssim(Tensor(board, dtype=np.float64), Tensor(1 - board, dtype=np.float64)))
        assert got < 0.1
        assert got == pytest.approx(ref_ssim(board, 1 - board), abs=1e-6)

    def test_matches_reference(self):
        a, b = rand(4, (3, 20, 20)), rand(5, (3, 20, 20))
        got = val(L.ssim(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64)))
        assert got == pytest.approx(ref_ssim(a, b), abs=1e-9)

    def test_ms_ssim_reference(self):
        a = rand(6, (1, 2, 48, 48))
        b = np.clip(a + 0.2 * rand(7, (1, 2, 48, 48)) - 0.1, 0, 1)
        cfg = L.MsSsimL1Config()
        got = val(L.ms_ssim(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64), cfg))
        assert got == pytest.approx(ref_ms_ssim(a, b, cfg.scale_weights), abs=1e-9)

    def test_too_small_names_minimum(self):
        with pytest.raises(ValueError, match="44x44"):
            L.ms_ssim(np.zeros((1, 3, 32, 32)), np.zeros((1, 3, 32, 32)))

    def test_truncated_weights(self):
        w = L.truncated_weights(3)
        assert sum(w) == pytest.approx(1.0)
        total = 0.0448 + 0.2856 + 0.3001
        assert w == pytest.approx((0.0448 / total, 0.2856 / total, 0.3001 / total))
        assert L.MsSsimL1Config().scale_weights == pytest.approx(w)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            L.MsSsimL1Config(scale_count=2)
        with pytest.raises(ValueError):
            L.MsSsimL1Config.small(2, 6)


class TestMsSsimL1:
    def test_zero_on_self(self):
        x = rand(8)
        assert abs(val(L.ms_ssim_l1(x, x, SMALL))) < 1e-6

    def test_symmetric(self):
        a, b = rand(9), rand(10)
        assert val(L.ms_ssim_l1(a, b, SMALL)) == pytest.approx(val(L.ms_ssim_l1(b, a, SMALL)), abs=1e-6)

    def test_positive(self):
        assert val(L.ms_ssim_l1(rand(11), rand(12), SMALL)) > 0

    def test_composition(self):
        a, b = rand(13, (1, 3, 48, 48)), rand(14, (1, 3, 48, 48))
        cfg = L.MsSsimL1Config()
        got = val(L.ms_ssim_l1(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64), cfg))
        expected = 0.84 * (1 - ref_ms_ssim(a, b, cfg.scale_weights)) + 0.16 * ref_blur(np.abs(a - b)).mean()
        assert got == pytest.approx(expected, abs=1e-9)

    def test_gradient_32(self):
        a, b = rand(15), rand(16)
        err = check_gradients(lambda x: L.ms_ssim_l1(x, Tensor(b, dtype=x.dtype), SMALL), [a],
                              eps=1e-4, max_coords=40, rng=np.random.default_rng(0))
        assert err < 5e-3


class TestMasked:
    def setup_method(self):
        self.pred = rand(20, (1, 3, 16, 16))
        self.gt = rand(21, (1, 3, 16, 16))
        self.mask = (rand(22, (1, 1, 16, 16)) > 0.6).astype(np.float32)

    def test_all_ones_keep_oe(self):
        full = val(L.l2(self.pred, self.gt))
        assert val(L.masked_loss(L.l2, self.pred, self.gt, np.ones((1, 1, 16, 16)), L.Keep.OVEREXPOSED)) == full

    def test_all_zeros_keep_oe(self):
        zeros = np.zeros((1, 1, 16, 16))
        for base in (L.l1, L.l2):
            assert val(L.masked_loss(base, self.pred, self.gt, zeros, L.Keep.OVEREXPOSED)) == 0.0

    @pytest.mark.parametrize("keep", list(L.Keep))
    def test_outside_invariance(self, keep):
        kept = self.mask if keep is L.Keep.OVEREXPOSED else 1 - self.mask
        noise = rand(23, self.pred.shape) * (1 - kept)
        f = lambda p: val(L.masked_loss(L.l2, p, self.gt, self.mask, keep))  # noqa: E731
        assert f(self.pred + noise) == f(self.pred)
        g = val(L.masked_loss(L.l2, self.pred, self.gt + noise, self.mask, keep))
        assert g == f(self.pred)

    def test_mask_without_channel_axis(self):
        a = val(L.masked_loss(L.l1, self.pred, self.gt, self.mask[:, 0], L.Keep.NON_OVEREXPOSED))
        b = val(L.masked_loss(L.l1, self.pred, self.gt, self.mask, L.Keep.NON_OVEREXPOSED))
        assert a == b

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="mask shape"):
            L.masked_loss(L.l2, self.pred, self.gt, np.ones((1, 1, 8, 8)), L.Keep.OVEREXPOSED)


class TestComposite:
    def test_zero_on_self(self):
        x = rand(30)
        assert abs(val(L.noe_composite(x, x, cfg=SMALL))) < 1e-6

    def test_degenerate_weights(self):
        a, b = rand(31), rand(32)
        w = L.LossWeights(w_lpips=0, w_l2=1, w_msssim_l1=0)
        assert val(L.noe_composite(a, b, w, SMALL)) == val(L.l2(a, b))

    def test_default_recomposition(self):
        a, b = rand(33), rand(34)
        got = val(L.noe_composite(a, b, cfg=SMALL))
        assert got == pytest.approx(0.05 * val(L.l2(a, b)) + 0.75 * val(L.ms_ssim_l1(a, b, SMALL)), rel=1e-6)

    def test_lpips_hook(self):
        a, b = rand(35), rand(36)
        base = val(L.noe_composite(a, b, cfg=SMALL))
        L.register_lpips_backend(lambda p, g: L.l1(p, g))
        try:
            got = val(L.noe_composite(a, b, L.LossWeights(w_lpips=2.0), SMALL))
        finally:
            L.register_lpips_backend(None)
        assert got == pytest.approx(base + 2.0 * val(L.l1(a, b)), rel=1e-6)
        assert L.lpips_backend() is None

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            L.LossWeights(w_l2=-1)


class TestGammaWrapped:
    def test_gamma_one(self):
        a, b = rand(40), rand(41)
        assert val(L.gamma_wrapped(L.l2, a, b, 1.0)) == val(L.l2(a, b))

    def test_self_zero(self):
        x = rand(42)
        assert val(L.gamma_wrapped(L.l1, x, x, GAMMA)) == 0.0

    def test_scalar_oracle(self):
        got = val(L.gamma_wrapped(L.l2, Tensor(np.array([0.25]), dtype=np.float64),
                                  Tensor(np.array([0.5]), dtype=np.float64), GAMMA))
        assert got == pytest.approx((0.25**GAMMA - 0.5**GAMMA) ** 2, rel=1e-12)

    def test_dark_pixels_upweighted(self):
        xs = np.arange(0.05, 0.9001, 0.05)
        gaps = np.abs((xs + 0.01) ** GAMMA - xs**GAMMA)
        assert (np.diff(gaps) < 0).all()
