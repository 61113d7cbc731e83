import math

import numpy as np
import pytest

from rldenoise.metrics import (EvalWindow, SOFT_TISSUE_WINDOW, gssim,
                               objective_reward, psnr, reward_target, ssim,
                               ssim_volume)

from helpers import naive_ssim


def test_window_properties():
    w = SOFT_TISSUE_WINDOW
    assert (w.lo, w.hi) == (-160.0, 240.0)
    assert w.width == 400.0
    with pytest.raises(ValueError):
        EvalWindow(10.0, 10.0)


def test_psnr_identical_is_inf():
    img = np.random.default_rng(0).normal(40.0, 30.0, size=(20, 20))
    assert psnr(img, img) == math.inf


def test_psnr_direct_formula():
    rng = np.random.default_rng(1)
    ref = rng.uniform(-160.0, 240.0, size=(16, 16))
    test = ref + rng.normal(0, 10.0, size=ref.shape)
    w = SOFT_TISSUE_WINDOW
    a, b = w.clip(test), w.clip(ref)
    expect = 10.0 * math.log10(400.0 ** 2 / np.mean((a - b) ** 2))
    assert abs(psnr(test, ref) - expect) < 1e-12


def test_psnr_window_clips_outliers():
    ref = np.zeros((12, 12))
    test = np.zeros((12, 12))
    test[0, 0] = 10000.0  # clipped to 240
    direct = 10.0 * math.log10(400.0 ** 2 / (240.0 ** 2 / 144.0))
    assert abs(psnr(test, ref) - direct) < 1e-12


def test_psnr_mask():
    ref = np.zeros((10, 10))
    test = np.zeros((10, 10))
    test[0, :] = 100.0
    mask = np.zeros((10, 10), dtype=bool)
    mask[5:, :] = True
    assert psnr(test, ref, mask=mask) == math.inf
    with pytest.raises(ValueError):
        psnr(test, ref, mask=np.zeros((10, 10), dtype=bool))


def test_ssim_matches_naive_sliding_window():
    rng = np.random.default_rng(2)
    ref = rng.uniform(-160, 240, size=(15, 14))
    test = ref + rng.normal(0, 20, size=ref.shape)
    w = SOFT_TISSUE_WINDOW
    fast = ssim(test, ref)
    slow = naive_ssim(w.clip(test), w.clip(ref), w.width)
    assert abs(fast - slow) < 1e-9


def test_ssim_identical_is_one():
    img = np.random.default_rng(3).uniform(-100, 200, size=(16, 16))
    assert abs(ssim(img, img) - 1.0) < 1e-12


def test_ssim_degrades_with_noise():
    rng = np.random.default_rng(4)
    ref = rng.uniform(-160, 240, size=(32, 32))
    s1 = ssim(ref + rng.normal(0, 5, ref.shape), ref)
    s2 = ssim(ref + rng.normal(0, 50, ref.shape), ref)
    assert s2 < s1 < 1.0


def test_ssim_volume_is_slice_mean():
    rng = np.random.default_rng(5)
    ref = rng.uniform(-160, 240, size=(14, 14, 3))
    test = ref + rng.normal(0, 15, size=ref.shape)
    per_slice = [ssim(test[:, :, z], ref[:, :, z]) for z in range(3)]
    assert abs(ssim_volume(test, ref) - np.mean(per_slice)) < 1e-12


def test_ssim_too_small_raises():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_gssim_constant_images():
    a = np.full((16, 16), 100.0)
    assert gssim(a, a) == 1.0


def test_gssim_penalizes_smoothed_edges():
    img = np.zeros((24, 24))
    img[:, 12:] = 200.0
    from scipy.ndimage import gaussian_filter
    blurred = gaussian_filter(img, 2.0)
    assert gssim(blurred, img) < 0.9
    assert gssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_reward_target_identical_is_exactly_two():
    img = np.random.default_rng(6).uniform(-160, 240, size=(20, 20))
    assert reward_target(img, img) == 2.0


def test_reward_target_direct_formula():
    rng = np.random.default_rng(7)
    clean = rng.uniform(-160, 240, size=(18, 18))
    noisy = clean + rng.normal(0, 25, size=clean.shape)
    w = SOFT_TISSUE_WINDOW
    a, b = w.clip(noisy), w.clip(clean)
    mse = float(np.mean((a - b) ** 2))
    expect = gssim(a, b) + 1.0 / (mse / 81.0 + 1.0)
    assert abs(reward_target(noisy, clean) - expect) < 1e-9


def test_reward_target_decreases_with_noise():
    rng = np.random.default_rng(8)
    clean = rng.uniform(-160, 240, size=(24, 24))
    r1 = reward_target(clean + rng.normal(0, 5, clean.shape), clean)
    r2 = reward_target(clean + rng.normal(0, 60, clean.shape), clean)
    assert r2 < r1 < 2.0


def test_objective_reward_direct_formula():
    rng = np.random.default_rng(9)
    truth = rng.normal(0, 50, size=(10, 10, 4))
    prev = truth + rng.normal(0, 20, size=truth.shape)
    nxt = truth + rng.normal(0, 10, size=truth.shape)
    tn = np.linalg.norm(truth)
    expect = (min(tn / np.linalg.norm(nxt - truth), 1e6)
              - min(tn / np.linalg.norm(prev - truth), 1e6))
    got = objective_reward(prev, nxt, truth)
    assert abs(got - expect) < 1e-9
    assert got > 0.0


def test_objective_reward_zero_when_unchanged():
    rng = np.random.default_rng(10)
    truth = rng.normal(0, 50, size=(8, 8))
    prev = truth + rng.normal(0, 10, size=truth.shape)
    assert objective_reward(prev, prev, truth) == 0.0


def test_objective_reward_capped_on_exact_hit():
    truth = np.ones((6, 6))
    prev = truth + 0.5
    got = objective_reward(prev, truth.copy(), truth)
    assert got == pytest.approx(1e6 - np.linalg.norm(truth)
                                / np.linalg.norm(prev - truth))
