"""Perspective projection of 3D Gaussians to screen space.

Covariances map through the local affine approximation cov2d = M cov3d M^T
with M = J W, where W is the camera rotation and J the Jacobian of the
pinhole projection at the Gaussian center. A 0.3 * I dilation acts as the
rasterizer's low-pass filter.
"""

from dataclasses import dataclass

import numpy as np

from ..scene import covariance_from_params

NEAR_PLANE = 0.01
COV2D_DILATION = 0.3
FOOTPRINT_SIGMA = 3.0


@dataclass
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    source_id: int


class ProjectedGaussians:
    """Column-wise list of visible projected Gaussians (front is not sorted)."""

    def __init__(self, mean2d, cov2d, depth, source_id, radius, total):
        self.mean2d = mean2d          # (M, 2) pixels
        self.cov2d = cov2d            # (M, 2, 2) pixels^2, dilated
        self.depth = depth            # (M,) camera z
        self.source_id = source_id    # (M,) indices into the map
        self.radius = radius          # (M,) integer 3-sigma screen radius
        self.total = total            # map size, for per-Gaussian outputs

    def __len__(self):
        return len(self.depth)

    def __getitem__(self, i):
        return ProjectedGaussian(self.mean2d[i], self.cov2d[i],
                                 float(self.depth[i]), int(self.source_id[i]))

    def radii_full(self):
        """Per-map-Gaussian screen radius, zero for culled ones."""
        out = np.zeros(self.total, dtype=np.int32)
        out[self.source_id] = self.radius
        return out


def screen_radii(cov2d):
    """Integer ceil of the 3-sigma radius from the larger 2D eigenvalue."""
    a = cov2d[:, 0, 0]
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    mid = 0.5 * (a + c)
    det = a * c - b * b
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    return np.ceil(FOOTPRINT_SIGMA * np.sqrt(np.maximum(lam_max, 0.0))).astype(np.int64)


def project(gmap, cam, dtype=np.float32):
    """Project map Gaussians into `cam`; culls behind-camera and off-screen ones.

    Returns a ProjectedGaussians batch holding only the visible subset.
    """
    n = len(gmap)
    if n == 0:
        return ProjectedGaussians(np.zeros((0, 2), dtype=dtype),
                                  np.zeros((0, 2, 2), dtype=dtype),
                                  np.zeros(0, dtype=dtype),
                                  np.zeros(0, dtype=np.int64),
                                  np.zeros(0, dtype=np.int64), 0)
    Rw = cam.pose[:3, :3]
    tw = cam.pose[:3, 3]
    t = gmap.means @ Rw.T + tw
    in_front = t[:, 2] > NEAR_PLANE

    ids = np.flatnonzero(in_front)
    t = t[ids]
    x, y, z = t[:, 0], t[:, 1], t[:, 2]
    u = cam.fx * x / z + cam.cx
    v = cam.fy * y / z + cam.cy
    mean2d = np.stack([u, v], axis=1)

    cov3d = covariance_from_params(gmap.quats[ids], np.exp(gmap.log_scales[ids]))
    J = np.zeros((len(ids), 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / z ** 2
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * y / z ** 2
    M = J @ Rw
    cov2d = M @ cov3d @ np.swapaxes(M, 1, 2)
    cov2d[:, 0, 0] += COV2D_DILATION
    cov2d[:, 1, 1] += COV2D_DILATION

    radius = screen_radii(cov2d)
    on_screen = ((mean2d[:, 0] + radius >= 0)
                 & (mean2d[:, 0] - radius <= cam.width - 1)
                 & (mean2d[:, 1] + radius >= 0)
                 & (mean2d[:, 1] - radius <= cam.height - 1))

    keep = np.flatnonzero(on_screen)
    return ProjectedGaussians(mean2d[keep].astype(dtype),
                              cov2d[keep].astype(dtype),
                              z[keep].astype(dtype),
                              ids[keep],
                              radius[keep], n)
