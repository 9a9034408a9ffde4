import numpy as np
import pytest

from conftest import make_camera
from splatslam.scene import CameraFrame
from splatslam.track import sample_patches


def frame_with(image):
    h, w = image.shape[:2]
    img = np.dstack([image] * 3) if image.ndim == 2 else image
    return CameraFrame(fx=50, fy=50, cx=(w - 1) / 2, cy=(h - 1) / 2,
                       width=w, height=h, pose=np.eye(4), image=img,
                       frame_id=0)


def test_count_zero_gives_empty():
    frame = frame_with(np.random.default_rng(0).uniform(0, 1, (48, 48)))
    ps = sample_patches(frame, 0)
    assert len(ps) == 0


def test_constant_image_falls_back_to_uniform():
    frame = frame_with(np.full((48, 48), 0.5))
    ps = sample_patches(frame, 24, rng=np.random.default_rng(1))
    assert len(ps) == 24
    # centers spread out rather than erroring on zero weights
    assert np.ptp(ps.centers[:, 0]) > 4


def test_checkerboard_centers_on_edges():
    # gradient energy lives on the tile boundaries; every sampled center
    # must sit within 2 px of one
    tile = 8
    v, u = np.mgrid[0:64, 0:64]
    board = (((u // tile) + (v // tile)) % 2).astype(np.float64)
    frame = frame_with(board)
    ps = sample_patches(frame, 40, rng=np.random.default_rng(2))
    for u0, v0 in ps.centers:
        du = min(u0 % tile, tile - (u0 % tile))
        dv = min(v0 % tile, tile - (v0 % tile))
        assert min(du, dv) <= 2.0


def test_requested_count_and_nms():
    rng = np.random.default_rng(3)
    frame = frame_with(rng.uniform(0, 1, (96, 96)))
    ps = sample_patches(frame, 50, rng=rng, nms_radius=8)
    assert len(ps) == 50
    d = np.linalg.norm(ps.centers[:, None, :] - ps.centers[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    # most pairs respect the suppression radius (fill-in may relax a few)
    assert np.sum(d.min(axis=1) < 8) <= 10


def test_centers_respect_border_margin():
    rng = np.random.default_rng(4)
    frame = frame_with(rng.uniform(0, 1, (64, 64)))
    ps = sample_patches(frame, 32, rng=rng, size=3)
    p_half = 1.5
    assert np.all(ps.centers[:, 0] >= p_half)
    assert np.all(ps.centers[:, 0] <= 63 - p_half)
    assert np.all(ps.centers[:, 1] >= p_half)
    assert np.all(ps.centers[:, 1] <= 63 - p_half)


def test_templates_match_image_pixels():
    rng = np.random.default_rng(5)
    img = rng.uniform(0, 1, (64, 64))
    frame = frame_with(img)
    ps = sample_patches(frame, 10, rng=rng, size=3)
    from splatslam.images import to_gray
    gray = to_gray(frame.image)
    for k in range(10):
        u, v = ps.centers[k].astype(int)
        np.testing.assert_allclose(ps.templates[k],
                                   gray[v - 1:v + 2, u - 1:u + 2])


def test_inv_depth_initialization():
    frame = frame_with(np.random.default_rng(6).uniform(0, 1, (48, 48)))
    ps = sample_patches(frame, 8, rng=np.random.default_rng(0),
                        init_inv_depth=0.37)
    assert np.all(ps.inv_depths == 0.37)


def test_too_small_image_rejected():
    frame = frame_with(np.zeros((6, 6)))
    with pytest.raises(ValueError):
        sample_patches(frame, 4, size=3)


def test_patch_view():
    rng = np.random.default_rng(7)
    frame = frame_with(rng.uniform(0, 1, (48, 48)))
    ps = sample_patches(frame, 5, rng=rng)
    p = ps[2]
    assert p.index == 2
    assert p.size == 3
    assert p.template.shape == (3, 3)
