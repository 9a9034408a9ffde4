"""Trajectory and image-quality metrics: ATE-RMSE, PSNR, SSIM."""

import math
from dataclasses import dataclass

import numpy as np

from .losses import ssim as _ssim_value

ASSOCIATION_WINDOW = 0.02  # seconds


@dataclass
class SimilarityTransform:
    scale: float
    rotation: np.ndarray      # (3, 3)
    translation: np.ndarray   # (3,)
    degenerate: bool = False  # source points were (near) collinear

    def apply(self, points):
        return self.scale * (points @ self.rotation.T) + self.translation


def associate(times_a, times_b, max_dt=ASSOCIATION_WINDOW):
    """Nearest-timestamp pairs (i, j) with |ta - tb| <= max_dt."""
    times_a = np.asarray(times_a, dtype=np.float64)
    times_b = np.asarray(times_b, dtype=np.float64)
    pairs = []
    if len(times_a) == 0 or len(times_b) == 0:
        return pairs
    for i, t in enumerate(times_a):
        j = int(np.argmin(np.abs(times_b - t)))
        if abs(times_b[j] - t) <= max_dt:
            pairs.append((i, j))
    return pairs


def umeyama(src, dst, with_scale=True):
    """Least-squares similarity aligning src onto dst (closed form)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.shape[0] < 3:
        raise ValueError("need at least 3 paired points")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    X = src - mu_s
    Y = dst - mu_d
    cov = Y.T @ X / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_s = (X ** 2).sum() / len(src)
    if with_scale:
        scale = float(np.trace(np.diag(D) @ S) / var_s) if var_s > 0 else 1.0
    else:
        scale = 1.0
    t = mu_d - scale * R @ mu_s
    degenerate = (D[1] < 1e-12 * max(D[0], 1e-300))
    return SimilarityTransform(scale, R, t, degenerate)


def align_sim3(est_traj, gt_traj, with_scale=True):
    """Similarity transform aligning est onto gt over associated pairs."""
    pairs = associate(est_traj.timestamps, gt_traj.timestamps)
    if len(pairs) < 3:
        raise ValueError("fewer than 3 associated pose pairs")
    est_pts = est_traj.positions()[[i for i, _ in pairs]]
    gt_pts = gt_traj.positions()[[j for _, j in pairs]]
    return umeyama(est_pts, gt_pts, with_scale=with_scale)


def ate_rmse(est_traj, gt_traj, align=True, with_scale=True):
    """RMSE of aligned translation errors, in centimeters."""
    pairs = associate(est_traj.timestamps, gt_traj.timestamps)
    if not pairs:
        raise ValueError("no associated pose pairs")
    est_pts = est_traj.positions()[[i for i, _ in pairs]]
    gt_pts = gt_traj.positions()[[j for _, j in pairs]]
    if align:
        if len(pairs) < 3:
            raise ValueError("alignment needs at least 3 pairs")
        transform = umeyama(est_pts, gt_pts, with_scale=with_scale)
        est_pts = transform.apply(est_pts)
    err = np.linalg.norm(est_pts - gt_pts, axis=1)
    return float(np.sqrt(np.mean(err ** 2)) * 100.0)


def psnr(a, b):
    """10 log10(1 / MSE) for [0, 1] images; +inf when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(a, b):
    """SSIM score in [-1, 1]; see losses.ssim for window parameters."""
    return _ssim_value(a, b)
