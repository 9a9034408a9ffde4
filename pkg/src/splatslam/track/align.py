"""Photometric patch alignment: coarse search plus inverse-compositional
refinement, with ZNCC / structure-tensor confidences.

Fills the correspondence interface a learned matcher would otherwise
provide: given a patch template and a predicted location in the target
frame, returns a refined observation and a diagonal confidence weight.
Rejected edges (divergence, low ZNCC, flat texture) get weight (0, 0).
"""

import numpy as np

from ..images import cubic_coeffs, sample_bilinear, sample_cubic

SEARCH_RADIUS = 8
SEARCH_STEP = 2
MAX_ITERS = 15
CONVERGENCE_PX = 0.03
ZNCC_MIN = 0.3


class TargetImage:
    """Grayscale target with cached cubic interpolation coefficients.

    Subpixel refinement samples the cubic surface (bilinear sampling
    carries a systematic bias that accumulates as pose drift); the coarse
    search uses plain bilinear lookups.
    """

    def __init__(self, gray):
        self.gray = np.asarray(gray, dtype=np.float64)
        self.coeffs = cubic_coeffs(self.gray)

    @property
    def shape(self):
        return self.gray.shape


def _patch_grid(size):
    r = size // 2
    off = np.arange(-r, r + 1, dtype=np.float64)
    ou, ov = np.meshgrid(off, off)
    return np.stack([ou.ravel(), ov.ravel()], axis=1)  # (p*p, 2)


def template_system(windows):
    """Per-patch gradient rows, inverse Hessian and conditioning.

    `windows` is (E, p+2, p+2); gradients are central differences on the
    inner p x p region, which doubles as the structure tensor.
    """
    tx = 0.5 * (windows[:, 1:-1, 2:] - windows[:, 1:-1, :-2])
    ty = 0.5 * (windows[:, 2:, 1:-1] - windows[:, :-2, 1:-1])
    E = len(windows)
    J = np.stack([tx.reshape(E, -1), ty.reshape(E, -1)], axis=2)  # (E, n, 2)
    H = np.einsum("eni,enj->eij", J, J)
    det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
    ok = det > 1e-12
    inv = np.zeros_like(H)
    safe = np.where(ok, det, 1.0)
    inv[:, 0, 0] = H[:, 1, 1] / safe
    inv[:, 1, 1] = H[:, 0, 0] / safe
    inv[:, 0, 1] = -H[:, 0, 1] / safe
    inv[:, 1, 0] = -H[:, 0, 1] / safe
    tr = H[:, 0, 0] + H[:, 1, 1]
    disc = np.sqrt(np.maximum(0.25 * tr ** 2 - det, 0.0))
    lam_max = 0.5 * tr + disc
    lam_min = 0.5 * tr - disc
    cond = np.where(lam_max > 1e-12, np.clip(lam_min / lam_max, 0.0, 1.0), 0.0)
    return J, inv, ok, cond


def zncc_scores(a, b):
    """Zero-normalized cross-correlation of flattened patch pairs (E, n)."""
    am = a - a.mean(axis=1, keepdims=True)
    bm = b - b.mean(axis=1, keepdims=True)
    num = np.sum(am * bm, axis=1)
    den = np.sqrt(np.sum(am ** 2, axis=1) * np.sum(bm ** 2, axis=1))
    return np.where(den > 1e-12, num / np.maximum(den, 1e-300), 0.0)


def compute_correspondences(windows, target, predictions,
                            search_radius=SEARCH_RADIUS, iters=MAX_ITERS,
                            tol=CONVERGENCE_PX, zncc_min=ZNCC_MIN,
                            presearch=True, affine=None):
    """Align patch templates near `predictions` in the target frame.

    windows: (E, w, w) templates with gradient ring
    target: TargetImage or raw grayscale array
    predictions: (E, 2) predicted centers in target pixels
    affine: optional (E, 2, 2) local warps (host pixel offsets to target
        pixel offsets, from the current scene geometry); target patches
        are sampled pre-warped so viewpoint-induced shear does not bias
        the alignment
    Returns (observations (E, 2), weights (E, 2)).
    """
    if not isinstance(target, TargetImage):
        target = TargetImage(target)
    windows = np.asarray(windows, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    E = len(windows)
    if E == 0:
        return np.zeros((0, 2)), np.zeros((0, 2))
    size = windows.shape[1] - 2
    grid = _patch_grid(size)
    if affine is None:
        warped_grid = np.broadcast_to(grid, (E,) + grid.shape)
    else:
        warped_grid = np.einsum("eij,nj->eni", np.asarray(affine), grid)

    tpl = windows[:, 1:-1, 1:-1].reshape(E, -1)
    J, Hinv, ok, cond = template_system(windows)

    H, W = target.shape
    margin = size // 2 + 1
    inside = ((predictions[:, 0] >= margin)
              & (predictions[:, 0] <= W - 1 - margin)
              & (predictions[:, 1] >= margin)
              & (predictions[:, 1] <= H - 1 - margin))

    centers = predictions.copy()
    if presearch:
        steps = np.arange(-search_radius, search_radius + 1, SEARCH_STEP,
                          dtype=np.float64)
        ou, ov = np.meshgrid(steps, steps)
        offsets = np.stack([ou.ravel(), ov.ravel()], axis=1)  # (S, 2)
        cand = predictions[:, None, :] + offsets[None, :, :]  # (E, S, 2)
        pts = cand[:, :, None, :] + warped_grid[:, None, :, :]
        samples = sample_bilinear(target.gray, pts)  # (E, S, n)
        ssd = np.sum((samples - tpl[:, None, :]) ** 2, axis=2)
        best = np.argmin(ssd, axis=1)
        centers = cand[np.arange(E), best]

    live = ok & inside
    for _ in range(iters):
        if not live.any():
            break
        pts = centers[:, None, :] + warped_grid
        cur = sample_cubic(target.coeffs, pts)
        err = cur - tpl
        b = np.einsum("eni,en->ei", J, err)
        delta = np.einsum("eij,ej->ei", Hinv, b)
        if affine is not None:
            # template-space increment mapped through the local warp
            delta = np.einsum("eij,ej->ei", np.asarray(affine), delta)
        step = np.where(live[:, None], delta, 0.0)
        centers -= step
        live = live & (np.linalg.norm(delta, axis=1) >= tol)

    drift = np.linalg.norm(centers - predictions, axis=1)
    diverged = drift > search_radius + 2.0
    in_bounds = ((centers[:, 0] >= margin) & (centers[:, 0] <= W - 1 - margin)
                 & (centers[:, 1] >= margin) & (centers[:, 1] <= H - 1 - margin))

    final = sample_cubic(target.coeffs, centers[:, None, :] + warped_grid)
    zncc = zncc_scores(final, tpl)
    w = np.clip(zncc, 0.0, 1.0) * cond
    valid = ok & inside & in_bounds & ~diverged & (zncc >= zncc_min)
    w = np.where(valid, w, 0.0)
    weights = np.stack([w, w], axis=1)
    return centers, weights
