"""Sparse square patches sampled on image gradients."""

from dataclasses import dataclass

import numpy as np

from ..images import image_gradients, to_gray


@dataclass
class Patch:
    host_frame: int
    center: np.ndarray     # (u, v) pixels
    size: int
    inv_depth: float
    template: np.ndarray   # (p, p) grayscale
    index: int


class PatchSet:
    """Column-wise patch storage for one host keyframe.

    Alongside the p x p template, a larger alignment window is stored
    (with a one-pixel gradient ring) to give the photometric matcher
    usable support; the patch geometry itself stays p x p.
    """

    def __init__(self, host_frame, size, centers, inv_depths, windows):
        self.host_frame = host_frame
        self.size = int(size)
        self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
        self.inv_depths = np.asarray(inv_depths, dtype=np.float64).copy()
        self.windows = np.asarray(windows, dtype=np.float64)

    def __len__(self):
        return len(self.centers)

    @property
    def templates(self):
        """Inner p x p grayscale templates."""
        w = self.windows.shape[1]
        lo = (w - self.size) // 2
        return self.windows[:, lo:lo + self.size, lo:lo + self.size]

    def __getitem__(self, k):
        return Patch(self.host_frame, self.centers[k], self.size,
                     float(self.inv_depths[k]), self.templates[k], k)


def sample_patches(frame, count, rng=None, init_inv_depth=0.5, size=3,
                   nms_radius=8, align_halfwin=3):
    """Sample `count` patches at gradient-magnitude-weighted pixel positions.

    Non-maximum suppression keeps centers at least `nms_radius` pixels
    apart; when the image cannot host `count` suppressed centers the
    remainder is filled from the highest-weight leftovers. A constant
    image falls back to uniform random sampling.
    """
    if size % 2 != 1:
        raise ValueError("patch size must be odd")
    if frame.image is None:
        raise ValueError("frame has no image")
    if frame.width <= 2 * size or frame.height <= 2 * size:
        raise ValueError("image too small for patch sampling")
    rng = rng if rng is not None else np.random.default_rng(0)
    gray = to_gray(frame.image)
    fit = (min(frame.width, frame.height) - 5) // 2  # largest window that fits
    halfwin = max(size // 2, min(align_halfwin, fit))
    win = 2 * halfwin + 3  # window plus gradient ring
    if count == 0:
        return PatchSet(frame.frame_id, size, np.zeros((0, 2)), np.zeros(0),
                        np.zeros((0, win, win)))

    gx, gy = image_gradients(gray)
    weights = np.hypot(gx, gy)
    margin = halfwin + 2
    mask = np.zeros_like(weights, dtype=bool)
    mask[margin:frame.height - margin, margin:frame.width - margin] = True
    weights = np.where(mask, weights, 0.0)

    flat = weights.ravel()
    total = flat.sum()
    if total <= 0.0:
        flat = mask.ravel().astype(np.float64)
        total = flat.sum()
    prob = flat / total

    n_candidates = max(8 * count, 64)
    candidates = rng.choice(len(flat), size=n_candidates, p=prob)
    vs, us = np.unravel_index(candidates, weights.shape)

    chosen = []
    r2 = nms_radius ** 2
    for u, v in zip(us, vs):
        if any((u - cu) ** 2 + (v - cv) ** 2 < r2 for cu, cv in chosen):
            continue
        chosen.append((u, v))
        if len(chosen) == count:
            break
    if len(chosen) < count:
        seen = set(chosen)
        for u, v in zip(us, vs):  # relax suppression, keep distinct pixels
            if (u, v) in seen:
                continue
            seen.add((u, v))
            chosen.append((u, v))
            if len(chosen) == count:
                break
    while len(chosen) < count:  # degenerate small images: allow duplicates
        idx = rng.choice(len(flat), p=prob)
        v, u = np.unravel_index(idx, weights.shape)
        chosen.append((u, v))

    centers = np.array(chosen, dtype=np.float64)
    r = halfwin + 1
    windows = np.stack([gray[v - r:v + r + 1, u - r:u + r + 1]
                        for u, v in chosen])
    inv_depths = np.full(count, float(init_inv_depth))
    return PatchSet(frame.frame_id, size, centers, inv_depths, windows)
