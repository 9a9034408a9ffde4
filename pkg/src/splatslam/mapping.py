"""Gaussian map lifecycle: initialization from tracked patches, distance-
gated insertion, clarity and gradient densification, pruning, and windowed
photometric optimization with planar regularization.

The map optimizer minimizes

    total = lambda_color * ((1 - lambda_photo) * L1 + lambda_photo * (1 - SSIM))
          + lambda_reg * mean(max(0.01, min(scale)))

with Adam on unconstrained parameters (log scales, opacity logits).
"""

from dataclasses import dataclass, field

import numpy as np

from .images import sample_bilinear
from .losses import l1_loss, planar_regularizer, ssim
from .optim import Adam
from .scene import GaussianMap
from .splat import render, render_backward
from .voxel_grid import VoxelHashGrid

SCALE_CLAMP = (1e-4, 1.0)
SPLIT_SHRINK = 1.6


@dataclass
class MapperConfig:
    tau: float = None                  # None: 2x median NN distance at init
    sigma_split: float = None          # None: 60 px scaled by resolution
    lambda_photo: float = 0.2
    lambda_color: float = 1.0
    lambda_reg: float = 1.0
    opt_iters_per_keyframe: int = 60
    opt_window: int = 8
    grad_densify_threshold: float = 2e-4
    prune_opacity: float = 0.05
    densify_interval: int = 100
    lr_means: float = 1.6e-4           # times scene extent
    lr_rotations: float = 1e-3
    lr_log_scales: float = 5e-3
    lr_opacity_logits: float = 5e-2
    lr_colors: float = 2.5e-3
    enable_dynamic_insertion: bool = True
    enable_clarity_densify: bool = True
    enable_grad_densify: bool = True
    clone_scale_fraction: float = 0.01  # times scene extent
    background: tuple = (0.0, 0.0, 0.0)
    render_dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.sigma_split is not None and self.sigma_split < 1:
            raise ValueError("sigma_split must be at least 1")
        if not 0.0 <= self.lambda_photo <= 1.0:
            raise ValueError("lambda_photo must lie in [0, 1]")

    def sigma_for(self, width, height):
        if self.sigma_split is not None:
            return self.sigma_split
        return max(1.0, 60.0 * (width * height) / (640.0 * 480.0))


@dataclass
class LossBreakdown:
    l_photo: float
    l_ssim: float
    l_color: float
    l_reg: float
    total: float

    @classmethod
    def combine(cls, l_photo, l_ssim, l_reg, cfg):
        l_color = (1 - cfg.lambda_photo) * l_photo + cfg.lambda_photo * l_ssim
        total = cfg.lambda_color * l_color + cfg.lambda_reg * l_reg
        return cls(l_photo, l_ssim, l_color, l_reg, total)


def backproject_patches(cam, centers, inv_depths):
    """World points and sampled colors of patch centers; drops entries with
    inverse depth at or below 1e-6."""
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    inv_depths = np.asarray(inv_depths, dtype=np.float64)
    keep = inv_depths > 1e-6
    pts = cam.backproject(centers[keep], inv_depths[keep])
    colors = sample_bilinear(cam.image, centers[keep])
    return pts, colors


def _knn_distance(grid, point, k, exclude_self=False):
    d = grid.nearest_distances(point, k=k + (1 if exclude_self else 0))
    if exclude_self and len(d):
        d = d[1:]
    if len(d) == 0:
        return None
    return float(d[min(k, len(d)) - 1])


class Mapper:
    def __init__(self, config=None):
        self.cfg = config or MapperConfig()
        self.map = GaussianMap()
        self.rng = np.random.default_rng(self.cfg.seed)
        self.adam = Adam()
        self.tau = self.cfg.tau
        self.pos_grad_accum = np.zeros(0)
        self.pos_grad_count = np.zeros(0)
        self.loss_rows = []            # (step, l_photo, l_ssim, l_reg, total, n)
        self._global_step = 0
        self._dtype = np.dtype(self.cfg.render_dtype)
        self._lr_scale = 1.0

    # ----- construction -----

    def initialize_map(self, keyframes):
        """Build the map from (camera, patch centers, inverse depths) triples
        of the tracker's initialization keyframes."""
        pts_all = []
        col_all = []
        for cam, centers, inv_depths in keyframes:
            pts, cols = backproject_patches(cam, centers, inv_depths)
            pts_all.append(pts)
            col_all.append(cols)
        pts = np.concatenate(pts_all)
        cols = np.concatenate(col_all)
        if len(pts) == 0:
            raise ValueError("no valid patches to initialize from")

        extent = np.linalg.norm(pts - pts.mean(axis=0), axis=1).max()
        probe = VoxelHashGrid(max(extent / max(len(pts) ** (1 / 3), 1.0), 1e-6))
        probe.insert(pts)
        nn1 = np.array([_knn_distance(probe, p, 1, exclude_self=True) or 0.1
                        for p in pts])
        scales = np.array([_knn_distance(probe, p, 3, exclude_self=True) or 0.1
                           for p in pts])
        scales = np.clip(scales, *SCALE_CLAMP)

        if self.tau is None:
            med = float(np.median(nn1[nn1 > 0])) if np.any(nn1 > 0) else 0.1
            self.tau = 2.0 * med
        self.map = GaussianMap(cell_size=self.tau)
        self.map.add(pts, np.tile([1.0, 0.0, 0.0, 0.0], (len(pts), 1)),
                     np.repeat(scales[:, None], 3, axis=1),
                     np.full(len(pts), 0.5), cols)
        self._reset_aux()
        return self.map

    def _reset_aux(self):
        n = len(self.map)
        self.pos_grad_accum = np.zeros(n)
        self.pos_grad_count = np.zeros(n)
        self.adam = Adam()

    def _keep_rows(self, keep):
        self.map.remove(~keep)
        self.pos_grad_accum = self.pos_grad_accum[keep]
        self.pos_grad_count = self.pos_grad_count[keep]
        self.adam.keep_rows(keep)

    def _append_rows(self, means, quats, log_scales, logits, colors,
                     rebuild_index=True):
        self.map.means = np.concatenate([self.map.means, means])
        self.map.quats = np.concatenate([self.map.quats, quats])
        self.map.log_scales = np.concatenate([self.map.log_scales, log_scales])
        self.map.opacity_logits = np.concatenate([self.map.opacity_logits, logits])
        self.map.colors = np.concatenate([self.map.colors, colors])
        if rebuild_index:
            self.map.rebuild_index()
        self.map.generation += 1
        n = len(means)
        self.pos_grad_accum = np.concatenate([self.pos_grad_accum, np.zeros(n)])
        self.pos_grad_count = np.concatenate([self.pos_grad_count, np.zeros(n)])
        self.adam.append_rows(n)

    # ----- growth -----

    def insert_points(self, points, colors, tau=None, gated=True):
        """Distance-gated insertion of candidate points into the map.

        A point enters the map only when its distance to every existing
        mean exceeds tau (strict); points accepted earlier in the same
        batch immediately suppress near-duplicates after them. With
        gated=False every point is inserted (the ablation baseline).
        """
        tau = self.tau if tau is None else tau
        if tau is None:
            raise RuntimeError("mapper has no tau; initialize the map first")
        if self.map.index is None:
            self.map.set_cell_size(tau)
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
        accepted = []
        index = self.map.index
        for p, c in zip(points, colors):
            if gated and len(index) and index.any_within(p, tau):
                continue
            scale = _knn_distance(index, p, 3) or 0.1
            scale = float(np.clip(scale, *SCALE_CLAMP))
            accepted.append((p, c, scale))
            index.insert(p)
        if accepted:
            pts = np.stack([a[0] for a in accepted])
            cols = np.clip(np.stack([a[1] for a in accepted]), 0.0, 1.0)
            scales = np.log([[a[2]] * 3 for a in accepted])
            self._append_rows(pts, np.tile([1.0, 0.0, 0.0, 0.0], (len(pts), 1)),
                              scales, np.zeros(len(pts)), cols,
                              rebuild_index=False)
        return len(accepted)

    def insert_dynamic(self, cam, centers, inv_depths, tau=None):
        """insert_points over back-projected patch centers of a keyframe."""
        pts, cols = backproject_patches(cam, centers, inv_depths)
        return self.insert_points(pts, cols, tau)

    def insert_all(self, cam, centers, inv_depths):
        """Unconditional insertion of a keyframe's back-projected points."""
        pts, cols = backproject_patches(cam, centers, inv_depths)
        return self.insert_points(pts, cols, gated=False)

    def _sample_children(self, idx, n_children=2):
        """Two children per parent, means drawn from the parent Gaussian,
        scales shrunk by SPLIT_SHRINK; other parameters copied."""
        from .se3 import quat_to_rotmat

        rep = np.repeat(idx, n_children)
        R = quat_to_rotmat(self.map.quats[rep])
        s = np.exp(self.map.log_scales[rep])
        xi = self.rng.normal(size=(len(rep), 3))
        means = self.map.means[rep] + np.einsum("nij,nj->ni", R, s * xi)
        log_scales = self.map.log_scales[rep] - np.log(SPLIT_SHRINK)
        return (means, self.map.quats[rep].copy(), log_scales,
                self.map.opacity_logits[rep].copy(), self.map.colors[rep].copy())

    def densify_clarity(self, render_out, sigma=None):
        """Split every Gaussian that dominates more than sigma pixels."""
        if sigma is None:
            raise ValueError("sigma threshold required")
        counts = render_out.dominance_count
        mask = counts > sigma
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            return 0
        children = self._sample_children(idx)
        self._keep_rows(~mask)
        self._append_rows(*children)
        return len(idx)

    def densify_gradient_and_prune(self):
        """Clone/split high-gradient Gaussians, prune transparent ones."""
        n = len(self.map)
        if n == 0:
            return 0, 0, 0
        avg = np.where(self.pos_grad_count > 0,
                       self.pos_grad_accum / np.maximum(self.pos_grad_count, 1),
                       0.0)
        big = avg > self.cfg.grad_densify_threshold
        extent = self.map.scene_extent()
        small = np.exp(self.map.log_scales).max(axis=1) \
            < self.cfg.clone_scale_fraction * extent
        clone_mask = big & small
        split_mask = big & ~small

        cloned = int(clone_mask.sum())
        split = int(split_mask.sum())
        if cloned:
            ci = np.flatnonzero(clone_mask)
            self._append_rows(self.map.means[ci].copy(),
                              self.map.quats[ci].copy(),
                              self.map.log_scales[ci].copy(),
                              self.map.opacity_logits[ci].copy(),
                              self.map.colors[ci].copy())
        if split:
            si = np.flatnonzero(split_mask)
            children = self._sample_children(si)
            keep = np.ones(len(self.map), dtype=bool)
            keep[si] = False
            self._keep_rows(keep)
            self._append_rows(*children)

        pruned_mask = self.map.opacities < self.cfg.prune_opacity
        pruned = int(pruned_mask.sum())
        if pruned:
            self._keep_rows(~pruned_mask)
        self.pos_grad_accum[:] = 0.0
        self.pos_grad_count[:] = 0.0
        return cloned, split, pruned

    # ----- loss and optimization -----

    def compute_loss(self, rendered, target, visible):
        lv = l1_loss(rendered, target)
        sv = ssim(rendered, target)
        rv = planar_regularizer(self.map.log_scales, visible)
        return LossBreakdown.combine(lv, 1.0 - sv, rv, self.cfg)

    def optimize_window(self, keyframes, iters):
        """Adam steps over the window, one (round-robin) keyframe per step.

        Returns the final LossBreakdown (computed on the last rendered
        keyframe; the current one when iters == 0).
        """
        cfg = self.cfg
        if len(self.map) == 0 or not keyframes:
            raise ValueError("map and window must be non-empty")
        lrs = {"means": cfg.lr_means * self.map.scene_extent(),
               "quats": cfg.lr_rotations,
               "log_scales": cfg.lr_log_scales,
               "logits": cfg.lr_opacity_logits,
               "colors": cfg.lr_colors}
        bg = np.asarray(cfg.background, dtype=np.float64)

        if iters == 0:
            cam = keyframes[0]
            out = render(self.map, cam, bg, dtype=self._dtype)
            return self.compute_loss(np.asarray(out.color, dtype=np.float64),
                                     cam.image, out.radii > 0)

        breakdown = None
        for _ in range(iters):
            cam = keyframes[self._global_step % len(keyframes)]
            out = render(self.map, cam, bg, dtype=self._dtype)
            rendered = np.asarray(out.color, dtype=np.float64)
            target = cam.image
            visible = out.radii > 0

            lv, g_l1 = l1_loss(rendered, target, with_grad=True)
            sv, g_ssim = ssim(rendered, target, with_grad=True)
            rv, g_reg = planar_regularizer(self.map.log_scales, visible,
                                           with_grad=True)
            breakdown = LossBreakdown.combine(lv, 1.0 - sv, rv, cfg)
            self._global_step += 1
            self.loss_rows.append((self._global_step, breakdown.l_photo,
                                   breakdown.l_ssim, breakdown.l_reg,
                                   breakdown.total, len(self.map)))
            if not np.isfinite(breakdown.total):
                self._lr_scale *= 0.5
                continue

            upstream = cfg.lambda_color * ((1 - cfg.lambda_photo) * g_l1
                                           + cfg.lambda_photo * (-g_ssim))
            pg = render_backward(self.map, cam, upstream, bg,
                                 dtype=self._dtype)

            s = self._lr_scale
            self.map.means -= self.adam.step("means", pg.mean, lrs["means"] * s)
            self.map.quats -= self.adam.step("quats", pg.rotation,
                                             lrs["quats"] * s)
            g_ls = pg.log_scale + cfg.lambda_reg * g_reg
            self.map.log_scales -= self.adam.step("log_scales", g_ls,
                                                  lrs["log_scales"] * s)
            self.map.opacity_logits -= self.adam.step(
                "logits", pg.opacity_logit, lrs["logits"] * s)
            self.map.colors -= self.adam.step("colors", pg.color,
                                              lrs["colors"] * s)
            self.map.quats /= np.linalg.norm(self.map.quats, axis=1,
                                             keepdims=True)
            np.clip(self.map.colors, 0.0, 1.0, out=self.map.colors)
            self.map.generation += 1

            self.pos_grad_accum += pg.mean2d_norm
            self.pos_grad_count += pg.visible

            if (cfg.enable_grad_densify
                    and self._global_step % cfg.densify_interval == 0):
                self.densify_gradient_and_prune()
        self.map.rebuild_index()
        return breakdown
