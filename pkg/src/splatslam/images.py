"""Image buffers and sampling helpers.

Images are float arrays in [0, 1], shape (H, W) or (H, W, 3), with pixel
centers at integer coordinates (u = column, v = row).
"""

import numpy as np
from PIL import Image


def to_gray(image):
    """Luma of an (H, W, 3) image; passes (H, W) through."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image
    return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114


def sample_bilinear(image, uv):
    """Bilinearly sample image at points uv of shape (..., 2).

    Coordinates outside the image are clamped to the border. Works for
    (H, W) and (H, W, C) images; output shape is uv.shape[:-1] (+ (C,)).
    """
    image = np.asarray(image)
    uv = np.asarray(uv, dtype=np.float64)
    H, W = image.shape[:2]
    u = np.clip(uv[..., 0], 0.0, W - 1.0)
    v = np.clip(uv[..., 1], 0.0, H - 1.0)
    u0 = np.floor(u).astype(np.intp)
    v0 = np.floor(v).astype(np.intp)
    u1 = np.minimum(u0 + 1, W - 1)
    v1 = np.minimum(v0 + 1, H - 1)
    fu = u - u0
    fv = v - v0
    if image.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    top = image[v0, u0] * (1 - fu) + image[v0, u1] * fu
    bot = image[v1, u0] * (1 - fu) + image[v1, u1] * fu
    return top * (1 - fv) + bot * fv


def cubic_coeffs(gray):
    """B-spline coefficient image for sample_cubic."""
    from scipy.ndimage import spline_filter
    return spline_filter(np.asarray(gray, dtype=np.float64), order=3,
                         mode="mirror")


def sample_cubic(coeffs, uv):
    """Cubic B-spline sampling at uv (..., 2); pass cubic_coeffs output."""
    from scipy.ndimage import map_coordinates
    uv = np.asarray(uv, dtype=np.float64)
    shape = uv.shape[:-1]
    flat = uv.reshape(-1, 2)
    out = map_coordinates(coeffs, [flat[:, 1], flat[:, 0]], order=3,
                          prefilter=False, mode="mirror")
    return out.reshape(shape)


def image_gradients(gray):
    """Central-difference gradients (gx, gy); one-sided at the borders."""
    gray = np.asarray(gray, dtype=np.float64)
    gx = np.empty_like(gray)
    gy = np.empty_like(gray)
    gx[:, 1:-1] = 0.5 * (gray[:, 2:] - gray[:, :-2])
    gx[:, 0] = gray[:, 1] - gray[:, 0]
    gx[:, -1] = gray[:, -1] - gray[:, -2]
    gy[1:-1] = 0.5 * (gray[2:] - gray[:-2])
    gy[0] = gray[1] - gray[0]
    gy[-1] = gray[-1] - gray[-2]
    return gx, gy


def write_png(image, path):
    """Write a [0, 1] float image as 8-bit PNG (clamped and scaled, no gamma)."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    arr = (arr * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_image(path):
    """Load an image file as float RGB in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr
