import numpy as np
import pytest
from skimage.metrics import structural_similarity

from splatslam.losses import l1_loss, planar_regularizer, ssim


def test_identical_images_zero_photometric_loss():
    a = np.random.default_rng(0).uniform(0, 1, (20, 20, 3))
    assert l1_loss(a, a) == 0.0
    assert abs(1.0 - ssim(a, a)) < 1e-12


def test_ssim_matches_skimage():
    rng = np.random.default_rng(1)
    a = rng.uniform(0, 1, (28, 36, 3))
    b = np.clip(a + rng.normal(0, 0.08, a.shape), 0, 1)
    ref = structural_similarity(a, b, win_size=11, sigma=1.5,
                                gaussian_weights=True,
                                use_sample_covariance=False,
                                data_range=1.0, channel_axis=-1)
    assert abs(ssim(a, b) - ref) < 1e-12


def test_ssim_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    a = rng.uniform(0.2, 0.8, (18, 18, 3))
    b = rng.uniform(0.2, 0.8, (18, 18, 3))
    _, grad = ssim(a, b, with_grad=True)
    h = 1e-6
    for _ in range(40):
        i, j, c = rng.integers(0, 18), rng.integers(0, 18), rng.integers(0, 3)
        old = a[i, j, c]
        a[i, j, c] = old + h
        vp = ssim(a, b)
        a[i, j, c] = old - h
        vm = ssim(a, b)
        a[i, j, c] = old
        fd = (vp - vm) / (2 * h)
        assert abs(fd - grad[i, j, c]) < 2e-4 * max(1.0, abs(fd))


def test_l1_gradient():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 1, (8, 8, 3))
    b = rng.uniform(0, 1, (8, 8, 3))
    v, g = l1_loss(a, b, with_grad=True)
    h = 1e-7
    for _ in range(20):
        i, j, c = rng.integers(0, 8), rng.integers(0, 8), rng.integers(0, 3)
        old = a[i, j, c]
        a[i, j, c] = old + h
        vp = l1_loss(a, b)
        a[i, j, c] = old - h
        vm = l1_loss(a, b)
        a[i, j, c] = old
        assert abs((vp - vm) / (2 * h) - g[i, j, c]) < 1e-9


def test_planar_regularizer_clamp_values():
    # min scales 0.005 (clamped to 0.01) and 0.05 (free)
    ls = np.log([[0.5, 0.2, 0.005], [0.5, 0.2, 0.05]])
    vis = np.ones(2, dtype=bool)
    v = planar_regularizer(ls, vis)
    assert abs(v - 0.5 * (0.01 + 0.05)) < 1e-12


def test_planar_regularizer_gradient_zero_below_clamp():
    ls = np.log([[0.5, 0.2, 0.004]])
    _, g = planar_regularizer(ls, np.ones(1, dtype=bool), with_grad=True)
    assert np.all(g == 0.0)


def test_planar_regularizer_gradient_fd_above_clamp():
    rng = np.random.default_rng(4)
    ls = np.log(rng.uniform(0.02, 0.8, (6, 3)))
    vis = np.array([True, True, False, True, True, True])
    _, g = planar_regularizer(ls, vis, with_grad=True)
    assert np.all(g[2] == 0.0)  # invisible row contributes nothing
    h = 1e-7
    worst = 0.0
    for i in range(6):
        for k in range(3):
            old = ls[i, k]
            ls[i, k] = old + h
            vp = planar_regularizer(ls, vis)
            ls[i, k] = old - h
            vm = planar_regularizer(ls, vis)
            ls[i, k] = old
            fd = (vp - vm) / (2 * h)
            rel = abs(fd - g[i, k]) / max(abs(fd), abs(g[i, k]), 1e-9)
            worst = max(worst, rel)
    assert worst < 1e-4


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        l1_loss(np.zeros((4, 4)), np.zeros((4, 5)))
