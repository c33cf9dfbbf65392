import numpy as np
import pytest

from oracles import ref_psnr, ref_ssim
from risp.metrics import PSNR_CAP, EvalReport, bayer_site_mask, evaluate, evaluate_many, psnr, ssim


def pair(seed, shape=(4, 16, 16)):
    rng = np.random.default_rng(seed)
    a = rng.random(shape)
    return a, np.clip(a + 0.1 * rng.standard_normal(shape), 0, 1)


def test_psnr_identical_cap():
    a = np.random.default_rng(0).random((4, 8, 8))
    assert psnr(a, a) == PSNR_CAP == 99.0


def test_psnr_matches_reference():
    for seed in range(20):
        a, b = pair(seed)
        assert abs(psnr(a, b) - ref_psnr(a, b)) < 1e-9


def test_psnr_known_value():
    assert psnr(np.zeros(4), np.full(4, 0.1)) == pytest.approx(20.0, abs=1e-12)
    assert psnr(np.zeros(4), np.full(4, 0.5), max_value=0.5) == pytest.approx(0.0, abs=1e-12)


def test_ssim_matches_reference():
    for seed in range(5):
        a, b = pair(seed, (4, 24, 24))
        assert abs(ssim(a, b) - ref_ssim(a, b)) < 1e-6


def test_ssim_range():
    a, b = pair(3)
    assert -1 <= ssim(a, 1 - b) <= 1
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 2, 2)), np.zeros((4, 2, 3)))
    with pytest.raises(ValueError):
        evaluate(np.zeros((4, 2, 2)), np.zeros((4, 3, 2)))


def test_site_mask_any_rule():
    m = np.zeros((1, 4, 4))
    m[0, 1, 3] = 1
    sites = bayer_site_mask(m)
    assert sites.tolist() == [[False, True], [False, False]]


def test_evaluate_identical():
    a, _ = pair(1)
    r = evaluate(a, a)
    assert r.psnr == [PSNR_CAP] and r.ssim[0] == pytest.approx(1.0)


def test_region_mse_recombines():
    a, b = pair(2)
    mask = (np.random.default_rng(5).random((1, 32, 32)) > 0.8).astype(np.float32)
    r = evaluate(a, b, mask)
    sites = bayer_site_mask(mask)
    n_oe, n_total = sites.sum(), sites.size
    mse_oe = 10 ** (-r.psnr_oe[0] / 10)
    mse_noe = 10 ** (-r.psnr_noe[0] / 10)
    mse = 10 ** (-r.psnr[0] / 10)
    assert (n_oe * mse_oe + (n_total - n_oe) * mse_noe) / n_total == pytest.approx(mse, rel=1e-9)


def test_empty_region_absent():
    a, b = pair(3)
    r = evaluate(a, b, np.zeros((1, 32, 32)))
    assert r.psnr_oe == [None] and r.psnr_noe[0] is not None
    assert "psnr_oe_db" not in r.summary()
    assert r.mean_psnr_oe is None


def test_summary_format():
    a, b = pair(4)
    line = evaluate_many([a, a], [b, a]).summary()
    head = line.split()
    assert head[0].startswith("psnr_db=") and head[1].startswith("ssim=")
    assert float(head[0].split("=")[1]) == pytest.approx(np.mean([psnr(a, b), PSNR_CAP]), abs=1e-4)


def test_batched_evaluate():
    a, b = pair(5, (3, 4, 8, 8))
    r = evaluate(a, b)
    assert len(r.psnr) == 3
    assert r.mean_psnr == pytest.approx(np.mean([psnr(x, y) for x, y in zip(a, b)]))


def test_empty_report_nan():
    assert np.isnan(EvalReport().mean_psnr)
