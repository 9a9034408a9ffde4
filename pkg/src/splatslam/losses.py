"""Photometric and geometric losses with analytic image-space gradients.

SSIM uses an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03 and
dynamic range 1, averaged over the interior region where the window has
full support (border of 5 pixels cropped), matching the standard
formulation. Gradients are exact on that region.
"""

import numpy as np
from scipy.ndimage import convolve1d

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
_PAD = SSIM_WIN // 2

_offsets = np.arange(SSIM_WIN) - _PAD
_KERNEL = np.exp(-0.5 * (_offsets / SSIM_SIGMA) ** 2)
_KERNEL /= _KERNEL.sum()


def _blur(img):
    out = convolve1d(img, _KERNEL, axis=0, mode="constant")
    return convolve1d(out, _KERNEL, axis=1, mode="constant")


def l1_loss(rendered, target, with_grad=False):
    """Mean absolute error; gradient is w.r.t. `rendered`."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ValueError("image shapes differ")
    diff = rendered - target
    value = float(np.mean(np.abs(diff)))
    if not with_grad:
        return value
    return value, np.sign(diff) / diff.size


def ssim(a, b, with_grad=False):
    """Structural similarity of two [0, 1] images, optionally with dSSIM/da.

    Accepts (H, W) or (H, W, C); the score averages over pixels and
    channels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    H, W, C = a.shape
    if H < SSIM_WIN or W < SSIM_WIN:
        raise ValueError("image smaller than the SSIM window")
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    interior = np.zeros((H, W))
    interior[_PAD:H - _PAD, _PAD:W - _PAD] = 1.0
    n_valid = (H - 2 * _PAD) * (W - 2 * _PAD) * C

    total = 0.0
    grad = np.zeros_like(a) if with_grad else None
    for ch in range(C):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mux = _blur(x)
        muy = _blur(y)
        vx = _blur(x * x) - mux * mux
        vy = _blur(y * y) - muy * muy
        cxy = _blur(x * y) - mux * muy
        A1 = 2 * mux * muy + c1
        A2 = 2 * cxy + c2
        B1 = mux * mux + muy * muy + c1
        B2 = vx + vy + c2
        smap = (A1 * A2) / (B1 * B2)
        total += float(np.sum(smap * interior))
        if not with_grad:
            continue
        # Per-pixel partials of the masked mean w.r.t. the filtered moments.
        w = interior / n_valid
        p_mu = w * (2 * A2 / (B1 * B2)) * (muy - mux * A1 / B1)
        p_v = w * (-smap / B2)
        p_c = w * (2 * A1 / (B1 * B2))
        grad[:, :, ch] = (_blur(p_mu)
                          + 2 * x * _blur(p_v) - 2 * _blur(p_v * mux)
                          + y * _blur(p_c) - _blur(p_c * muy))
    value = total / n_valid
    if with_grad:
        return value, grad if a.shape[2] > 1 else grad[:, :, 0]
    return value


def planar_regularizer(log_scales, visible, with_grad=False):
    """Mean over visible Gaussians of max(0.01, min(scale)).

    The 0.01 floor is applied literally, so Gaussians already flatter than
    0.01 contribute a constant and receive exactly zero gradient.
    """
    log_scales = np.asarray(log_scales, dtype=np.float64)
    visible = np.asarray(visible, dtype=bool)
    n_vis = int(np.count_nonzero(visible))
    if n_vis == 0:
        if with_grad:
            return 0.0, np.zeros_like(log_scales)
        return 0.0
    scales = np.exp(log_scales[visible])
    smin = scales.min(axis=1)
    terms = np.maximum(0.01, smin)
    value = float(terms.mean())
    if not with_grad:
        return value
    grad = np.zeros_like(log_scales)
    rows = np.flatnonzero(visible)
    free = smin > 0.01
    argmin = np.argmin(scales, axis=1)
    # d max(0.01, min s)/d log s_k = s_min at the argmin when unclamped
    grad[rows[free], argmin[free]] = smin[free] / n_vis
    return value, grad
