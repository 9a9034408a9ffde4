import numpy as np

from conftest import fd_safe_scene, make_camera, random_map
from splatslam.scene import GaussianMap
from splatslam.splat import render, render_backward

CAM = make_camera(32, 32, fx=40.0, fy=42.0)

PARAM_GROUPS = [
    ("mean", lambda m: m.means, lambda g: g.mean),
    ("rotation", lambda m: m.quats, lambda g: g.rotation),
    ("log_scale", lambda m: m.log_scales, lambda g: g.log_scale),
    ("opacity_logit", lambda m: m.opacity_logits, lambda g: g.opacity_logit),
    ("color", lambda m: m.colors, lambda g: g.color),
]


def quadratic_loss(m, cam, bg, target):
    out = render(m, cam, bg, dtype=np.float64)
    resid = out.color - target
    return float(np.sum(resid ** 2)), 2.0 * resid


def max_fd_error(m, bg, cam, seed, h=1e-4):
    """Worst relative FD error across every parameter of every Gaussian."""
    rng = np.random.default_rng(seed + 555)
    base = render(m, cam, bg, dtype=np.float64).color
    target = np.clip(base + rng.normal(0, 0.15, base.shape), 0, 1)
    _, upstream = quadratic_loss(m, cam, bg, target)
    grads = render_backward(m, cam, upstream, bg, dtype=np.float64)
    worst = 0.0
    for _, get_arr, get_grad in PARAM_GROUPS:
        arr = get_arr(m)
        ana = get_grad(grads)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            lp, _ = quadratic_loss(m, cam, bg, target)
            arr[idx] = old - h
            lm, _ = quadratic_loss(m, cam, bg, target)
            arr[idx] = old
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(ana[idx] - fd) / max(abs(ana[idx]), abs(fd), 1e-6))
            it.iternext()
    return worst


def test_zero_upstream_gives_zero_gradients():
    rng = np.random.default_rng(40)
    m = random_map(8, rng)
    g = render_backward(m, CAM, np.zeros((32, 32, 3)), dtype=np.float64)
    for _, _, get_grad in PARAM_GROUPS:
        assert np.all(get_grad(g) == 0.0)


def test_culled_gaussian_gets_exactly_zero_gradient():
    m = GaussianMap()
    m.add([[0, 0, 2.0], [0, 0, -3.0]], [[1, 0, 0, 0]] * 2, [[0.2] * 3] * 2,
          [0.7, 0.7], [[1, 0, 0], [0, 1, 0]])
    up = np.ones((32, 32, 3))
    g = render_backward(m, CAM, up, dtype=np.float64)
    assert np.all(g.mean[1] == 0.0)
    assert np.all(g.rotation[1] == 0.0)
    assert np.all(g.log_scale[1] == 0.0)
    assert g.opacity_logit[1] == 0.0
    assert np.all(g.color[1] == 0.0)
    assert not g.visible[1] and g.visible[0]


def test_gradients_match_finite_differences_single():
    for seed in range(5):
        m, bg = fd_safe_scene(1, seed, CAM)
        assert max_fd_error(m, bg, CAM, seed) < 1e-3


def test_gradients_match_finite_differences_multi():
    m, bg = fd_safe_scene(10, 500, CAM)
    assert max_fd_error(m, bg, CAM, 500) < 1e-3


def test_upstream_must_be_finite():
    import pytest
    m = random_map(2, np.random.default_rng(41))
    bad = np.full((32, 32, 3), np.nan)
    with pytest.raises(ValueError):
        render_backward(m, CAM, bad)
