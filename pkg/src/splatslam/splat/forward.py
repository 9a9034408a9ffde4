"""Tile-based alpha-compositing rasterizer.

Compositing semantics, shared with the brute-force reference:
  * visible Gaussians sorted front-to-back by depth, ties by source id;
  * a Gaussian with degenerate 2D covariance (det < 1e-12) is skipped;
  * per pixel, alpha = opacity * exp(-q/2) inside the 3-sigma footprint
    (q <= 9), zero outside;
  * a pixel stops compositing once its transmittance drops below 1e-4;
  * remaining transmittance goes to the background color.

Tiles are processed in a fixed row-major order and each tile composites in
the global sort order, so output is bit-identical across runs. All math
runs in the requested dtype (float32 by default, float64 for gradient
checking).
"""

from dataclasses import dataclass

import numpy as np

from .projection import project

TILE = 16
MIN_DET = 1e-12
STOP_TRANSMITTANCE = 1e-4
FOOTPRINT_Q = 9.0
MAX_CONTRIBUTORS = 512


@dataclass
class RenderOutput:
    color: np.ndarray             # (H, W, 3)
    alpha: np.ndarray             # (H, W) accumulated opacity
    dominant_id: np.ndarray       # (H, W) map index or -1
    dominance_count: np.ndarray   # (N,) pixels where each Gaussian dominates
    radii: np.ndarray             # (N,) screen radius, 0 for culled


class TilePlan:
    """Depth-sorted visible Gaussians bucketed into 16x16 screen tiles."""

    def __init__(self, gmap, cam, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        proj = project(gmap, cam, dtype)
        order = np.lexsort((proj.source_id, proj.depth))
        self.mean2d = proj.mean2d[order]
        self.cov2d = proj.cov2d[order]
        self.source_id = proj.source_id[order]
        self.radius = proj.radius[order]
        self.radii_full = proj.radii_full()
        self.total = proj.total
        self.opacity = gmap.opacities[self.source_id].astype(dtype)
        self.color = gmap.colors[self.source_id].astype(dtype)

        a = self.cov2d[:, 0, 0]
        b = self.cov2d[:, 0, 1]
        c = self.cov2d[:, 1, 1]
        det = a * c - b * b
        ok = det >= MIN_DET
        safe = np.where(ok, det, 1.0)
        self.inv00 = np.where(ok, c / safe, 0.0).astype(dtype)
        self.inv01 = np.where(ok, -b / safe, 0.0).astype(dtype)
        self.inv11 = np.where(ok, a / safe, 0.0).astype(dtype)
        self.usable = ok

        self.ntx = (cam.width + TILE - 1) // TILE
        self.nty = (cam.height + TILE - 1) // TILE
        self.tiles = self._bucket()

    def _bucket(self):
        m = len(self.mean2d)
        tiles = {}
        if m == 0:
            return tiles
        u = self.mean2d[:, 0].astype(np.float64)
        v = self.mean2d[:, 1].astype(np.float64)
        r = self.radius
        tx0 = np.clip(np.floor((u - r) / TILE).astype(np.int64), 0, self.ntx - 1)
        tx1 = np.clip(np.floor((u + r) / TILE).astype(np.int64), 0, self.ntx - 1)
        ty0 = np.clip(np.floor((v - r) / TILE).astype(np.int64), 0, self.nty - 1)
        ty1 = np.clip(np.floor((v + r) / TILE).astype(np.int64), 0, self.nty - 1)
        sx = tx1 - tx0 + 1
        sy = ty1 - ty0 + 1
        counts = sx * sy
        gid = np.repeat(np.arange(m), counts)
        starts = np.cumsum(counts) - counts
        local = np.arange(counts.sum()) - np.repeat(starts, counts)
        tx = tx0[gid] + local % sx[gid]
        ty = ty0[gid] + local // sx[gid]
        tile_key = ty * self.ntx + tx
        order = np.lexsort((gid, tile_key))
        tile_key = tile_key[order]
        gid = gid[order]
        bounds = np.flatnonzero(np.diff(tile_key)) + 1
        for chunk, key in zip(np.split(gid, bounds),
                              tile_key[np.concatenate([[0], bounds])]):
            tiles[int(key)] = chunk
        return tiles

    def tile_pixels(self, key, cam):
        ty, tx = divmod(key, self.ntx)
        x0 = tx * TILE
        y0 = ty * TILE
        x1 = min(x0 + TILE, cam.width)
        y1 = min(y0 + TILE, cam.height)
        us, vs = np.meshgrid(np.arange(x0, x1, dtype=self.dtype),
                             np.arange(y0, y1, dtype=self.dtype))
        return (slice(y0, y1), slice(x0, x1)), np.stack([us.ravel(), vs.ravel()], axis=1)

    def footprint(self, rows, pix):
        """Per (Gaussian, pixel) alpha, density and inverse-cov offsets."""
        d = pix[None, :, :] - self.mean2d[rows][:, None, :]
        dx = d[..., 0]
        dy = d[..., 1]
        i00 = self.inv00[rows][:, None]
        i01 = self.inv01[rows][:, None]
        i11 = self.inv11[rows][:, None]
        q = i00 * dx * dx + 2.0 * i01 * dx * dy + i11 * dy * dy
        inside = (q <= FOOTPRINT_Q) & self.usable[rows][:, None]
        gval = np.where(inside, np.exp(-0.5 * q), 0.0).astype(self.dtype)
        alpha = self.opacity[rows][:, None] * gval
        # ux, uy = Sigma^-1 d, reused by the backward pass
        ux = i00 * dx + i01 * dy
        uy = i01 * dx + i11 * dy
        return alpha, gval, ux, uy


def composite_weights(alpha):
    """Blend weights, pre-contribution transmittance, stop mask, final T."""
    one = alpha.dtype.type(1.0)
    trans = np.cumprod(one - alpha, axis=0)
    T = np.concatenate([np.ones((1, alpha.shape[1]), dtype=alpha.dtype),
                        trans[:-1]], axis=0)
    active = T >= STOP_TRANSMITTANCE
    w = alpha * T * active
    T_final = np.prod(np.where(active, one - alpha, one), axis=0)
    return w, T, active, T_final


def render(gmap, cam, background=(0.0, 0.0, 0.0), dtype=np.float32):
    """Rasterize the map into `cam`; see module docstring for semantics."""
    gen = gmap.generation
    H, W = cam.height, cam.width
    dtype = np.dtype(dtype)
    background = np.asarray(background, dtype=dtype)
    plan = TilePlan(gmap, cam, dtype)

    color = np.empty((H, W, 3), dtype=dtype)
    color[:] = background
    alpha_map = np.zeros((H, W), dtype=dtype)
    dominant = np.full((H, W), -1, dtype=np.int64)

    for key in sorted(plan.tiles):
        rows = plan.tiles[key]
        (sly, slx), pix = plan.tile_pixels(key, cam)
        alpha, _, _, _ = plan.footprint(rows, pix)
        w, _, _, T_final = composite_weights(alpha)

        tile_color = w.T @ plan.color[rows] + T_final[:, None] * background
        shape = (sly.stop - sly.start, slx.stop - slx.start)
        color[sly, slx] = tile_color.reshape(shape + (3,))
        alpha_map[sly, slx] = (1.0 - T_final).reshape(shape)

        w_best = w.max(axis=0)
        best = np.argmax(w, axis=0)
        dom = np.where(w_best > 0.0, plan.source_id[rows][best], -1)
        dominant[sly, slx] = dom.reshape(shape)

    counts = np.bincount(dominant[dominant >= 0].ravel(), minlength=plan.total)
    if gmap.generation != gen:
        raise RuntimeError("map mutated during render")
    return RenderOutput(color, alpha_map, dominant,
                        counts.astype(np.int64), plan.radii_full)
