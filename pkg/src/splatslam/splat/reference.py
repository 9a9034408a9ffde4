"""Brute-force per-pixel compositing reference, used to verify the tiled path.

Loops over every visible Gaussian in the global sort order and evaluates it
at every pixel of the image: no tiles, no screen-space bounding boxes, no
per-tile gathering. Implements the same documented blending semantics as
the tiled rasterizer (3-sigma footprint, degenerate-covariance skip, 1e-4
transmittance stop) through an entirely separate code path.
"""

import numpy as np

from ..scene import covariance_from_params
from .forward import RenderOutput


def render_reference(gmap, cam, background=(0.0, 0.0, 0.0), dtype=np.float64):
    H, W = cam.height, cam.width
    dtype = np.dtype(dtype)
    background = np.asarray(background, dtype=dtype)

    canvas = np.zeros((H, W, 3), dtype=dtype)
    T = np.ones((H, W), dtype=dtype)
    stopped = np.zeros((H, W), dtype=bool)
    best_w = np.zeros((H, W), dtype=dtype)
    dominant = np.full((H, W), -1, dtype=np.int64)
    counts = np.zeros(len(gmap), dtype=np.int64)
    radii = np.zeros(len(gmap), dtype=np.int32)

    n = len(gmap)
    if n == 0:
        canvas[:] = background
        return RenderOutput(canvas, 1.0 - T, dominant, counts, radii)

    Rw = cam.pose[:3, :3]
    tw = cam.pose[:3, 3]
    t_cam = gmap.means @ Rw.T + tw
    depth = t_cam[:, 2]
    visible = depth > 0.01
    order = [i for i in np.lexsort((np.arange(n), depth)) if visible[i]]

    vs, us = np.mgrid[0:H, 0:W]
    us = us.astype(dtype)
    vs = vs.astype(dtype)
    opacities = gmap.opacities
    colors = gmap.colors

    for i in order:
        x, y, z = t_cam[i]
        u0 = cam.fx * x / z + cam.cx
        v0 = cam.fy * y / z + cam.cy
        J = np.array([[cam.fx / z, 0.0, -cam.fx * x / z ** 2],
                      [0.0, cam.fy / z, -cam.fy * y / z ** 2]])
        M = J @ Rw
        cov3d = covariance_from_params(gmap.quats[i], gmap.scales[i])
        cov = M @ cov3d @ M.T + 0.3 * np.eye(2)
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
        if det < 1e-12:
            continue
        inv = np.array([[cov[1, 1], -cov[0, 1]],
                        [-cov[0, 1], cov[0, 0]]]) / det
        dx = us - dtype.type(u0)
        dy = vs - dtype.type(v0)
        q = (inv[0, 0] * dx * dx + 2 * inv[0, 1] * dx * dy
             + inv[1, 1] * dy * dy).astype(dtype)
        alpha = np.where(q <= 9.0, opacities[i] * np.exp(-0.5 * q), 0.0)
        alpha = alpha.astype(dtype)

        live = ~stopped
        w = np.where(live, alpha * T, 0.0)
        canvas += w[:, :, None] * colors[i].astype(dtype)
        T = np.where(live, T * (1.0 - alpha), T)
        better = w > best_w
        dominant = np.where(better, i, dominant)
        best_w = np.where(better, w, best_w)
        stopped |= T < 1e-4

    canvas += T[:, :, None] * background
    ids, cnt = np.unique(dominant[dominant >= 0], return_counts=True)
    counts[ids] = cnt
    return RenderOutput(canvas, 1.0 - T, dominant, counts, radii)
