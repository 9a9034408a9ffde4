import numpy as np
import pytest

from splatslam.scene import CameraFrame, GaussianMap


def make_camera(width=64, height=64, fx=None, fy=None, pose=None):
    fx = fx if fx is not None else 0.9 * width
    fy = fy if fy is not None else 0.9 * width
    return CameraFrame(fx=fx, fy=fy, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                       width=width, height=height,
                       pose=np.eye(4) if pose is None else pose)


def random_map(n, rng, depth=2.5, spread=0.35, scale_range=(0.08, 0.3),
               opacity_range=(0.3, 0.8)):
    m = GaussianMap()
    if n == 0:
        return m
    means = rng.normal([0.0, 0.0, depth], [spread, spread, 0.3], size=(n, 3))
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    scales = rng.uniform(*scale_range, size=(n, 3))
    opacities = rng.uniform(*opacity_range, size=n)
    colors = rng.uniform(0.1, 0.9, size=(n, 3))
    m.add(means, quats, scales, opacities, colors)
    return m


def fd_safe_scene(n_gauss, seed, cam, q_margin=0.1, t_floor=1e-3,
                  depth_gap=1e-3, max_tries=400):
    """Random scene valid for central differences with h = 1e-4.

    The rasterizer's footprint cutoff (q = 9), transmittance stop and
    frustum culls are step discontinuities; central differences are only
    meaningful when the +-h neighborhood stays on one side of each of
    them. Single-Gaussian scenes are resampled until every pixel clears
    the q = 9 ring by a margin; multi-Gaussian scenes use footprints that
    enclose the whole image so the ring never meets a pixel center.
    """
    from splatslam.splat.forward import TilePlan

    for trial in range(max_tries):
        rng = np.random.default_rng(seed + 7919 * trial)
        if n_gauss == 1:
            m = random_map(1, rng, scale_range=(0.12, 0.3))
        else:
            m = random_map(n_gauss, rng, spread=0.6,
                           scale_range=(0.9, 1.6), opacity_range=(0.15, 0.45))
        bg = rng.uniform(0.2, 0.8, size=3)
        plan = TilePlan(m, cam, np.float64)
        if len(plan.mean2d) != n_gauss:
            continue  # someone got culled; keep everyone on screen
        vs, us = np.mgrid[0:cam.height, 0:cam.width]
        pix = np.stack([us.ravel(), vs.ravel()], axis=1).astype(np.float64)
        d = pix[None, :, :] - plan.mean2d[:, None, :]
        q = (plan.inv00[:, None] * d[..., 0] ** 2
             + 2 * plan.inv01[:, None] * d[..., 0] * d[..., 1]
             + plan.inv11[:, None] * d[..., 1] ** 2)
        if n_gauss == 1:
            if np.any(np.abs(q - 9.0) < q_margin):
                continue
        elif np.any(q > 9.0 - 3 * q_margin):
            continue  # the whole image must sit inside every footprint
        alpha = plan.opacity[:, None] * np.where(q <= 9.0, np.exp(-0.5 * q), 0.0)
        if np.any(np.prod(1.0 - alpha, axis=0) < 10 * t_floor):
            continue
        z = np.sort(m.means[:, 2])
        if n_gauss > 1 and np.min(np.diff(z)) < depth_gap:
            continue
        # stay clear of the screen-edge cull boundary
        r = plan.radius.astype(float)
        u, v = plan.mean2d[:, 0], plan.mean2d[:, 1]
        slack = np.minimum.reduce([u + r, cam.width - 1 - (u - r),
                                   v + r, cam.height - 1 - (v - r)])
        if np.any(slack < 0.5):
            continue
        return m, bg
    raise RuntimeError("could not sample an FD-safe scene")


@pytest.fixture
def rng():
    return np.random.default_rng(42)
