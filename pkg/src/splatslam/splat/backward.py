"""Analytic gradients of the rasterizer with respect to Gaussian parameters.

Recomputes the forward tile decomposition and differentiates the full chain
pixel blending -> 2D footprint -> screen-space projection -> 3D covariance
-> (mean, quaternion, log-scale, opacity logit, color). The blending
derivative at contribution i is dC/da_i = T_i * (c_i - S_i) with the
back-to-front suffix recurrence

    S_i = c_{i+1} a_{i+1} + (1 - a_{i+1}) S_{i+1},   S_last = background,

which needs no division and therefore tolerates alpha = 1 exactly.
Quaternion gradients include the normalization Jacobian, so finite
differences on raw quaternion entries match. Culled Gaussians receive
exactly zero gradient. Per pixel, at most MAX_CONTRIBUTORS front-most
contributions carry gradient (the forward composite is unaffected).
"""

from dataclasses import dataclass

import numpy as np

from ..scene import covariance_from_params
from ..se3 import quat_to_rotmat
from .forward import MAX_CONTRIBUTORS, TilePlan, composite_weights


@dataclass
class ParamGradients:
    mean: np.ndarray            # (N, 3)
    rotation: np.ndarray        # (N, 4) w.r.t. raw quaternion entries
    log_scale: np.ndarray       # (N, 3)
    opacity_logit: np.ndarray   # (N,)
    color: np.ndarray           # (N, 3)
    mean2d_norm: np.ndarray     # (N,) screen-space positional gradient norm
    visible: np.ndarray         # (N,) bool, survived frustum/footprint culling

    def scaled(self, factor):
        return ParamGradients(self.mean * factor, self.rotation * factor,
                              self.log_scale * factor,
                              self.opacity_logit * factor,
                              self.color * factor,
                              self.mean2d_norm * abs(factor), self.visible)


def _quat_backward(quats, grad_R):
    """Pull rotation-matrix gradients back to raw quaternion entries."""
    norms = np.linalg.norm(quats, axis=1, keepdims=True)
    qh = quats / norms
    w, x, y, z = qh[:, 0], qh[:, 1], qh[:, 2], qh[:, 3]
    A = grad_R
    gw = 2 * (-A[:, 0, 1] * z + A[:, 0, 2] * y + A[:, 1, 0] * z
              - A[:, 1, 2] * x - A[:, 2, 0] * y + A[:, 2, 1] * x)
    gx = 2 * (A[:, 0, 1] * y + A[:, 0, 2] * z + A[:, 1, 0] * y
              - 2 * A[:, 1, 1] * x - A[:, 1, 2] * w + A[:, 2, 0] * z
              + A[:, 2, 1] * w - 2 * A[:, 2, 2] * x)
    gy = 2 * (-2 * A[:, 0, 0] * y + A[:, 0, 1] * x + A[:, 0, 2] * w
              + A[:, 1, 0] * x + A[:, 1, 2] * z - A[:, 2, 0] * w
              + A[:, 2, 1] * z - 2 * A[:, 2, 2] * y)
    gz = 2 * (-2 * A[:, 0, 0] * z - A[:, 0, 1] * w + A[:, 0, 2] * x
              + A[:, 1, 0] * w - 2 * A[:, 1, 1] * z + A[:, 1, 2] * y
              + A[:, 2, 0] * x + A[:, 2, 1] * y)
    ghat = np.stack([gw, gx, gy, gz], axis=1)
    # d(q / |q|)/dq = (I - qh qh^T) / |q|
    return (ghat - qh * np.sum(ghat * qh, axis=1, keepdims=True)) / norms


def render_backward(gmap, cam, upstream, background=(0.0, 0.0, 0.0),
                    dtype=np.float32):
    """Gradients of sum(upstream * rendered_color) w.r.t. all map parameters.

    `background` must match the value passed to the forward render: the
    blending derivative includes the background seen through each Gaussian.
    """
    n = len(gmap)
    dtype = np.dtype(dtype)
    grads = ParamGradients(np.zeros((n, 3)), np.zeros((n, 4)),
                           np.zeros((n, 3)), np.zeros(n), np.zeros((n, 3)),
                           np.zeros(n), np.zeros(n, dtype=bool))
    upstream = np.asarray(upstream, dtype=np.float64)
    if not np.all(np.isfinite(upstream)):
        raise ValueError("upstream gradient must be finite")
    if n == 0:
        return grads

    plan = TilePlan(gmap, cam, dtype)
    m = len(plan.mean2d)
    if m == 0:
        return grads
    grads.visible[plan.source_id] = True

    background = np.asarray(background, dtype=np.float64)
    g_mean2d = np.zeros((m, 2))
    g_cov2d = np.zeros((m, 2, 2))
    g_opacity = np.zeros(m)
    g_color = np.zeros((m, 3))

    for key in sorted(plan.tiles):
        rows = plan.tiles[key]
        (sly, slx), pix = plan.tile_pixels(key, cam)
        alpha, gval, ux, uy = plan.footprint(rows, pix)
        alpha = alpha.astype(np.float64)
        gval = gval.astype(np.float64)
        w, T, active, _ = composite_weights(alpha)
        G = len(rows)
        P = alpha.shape[1]
        colors = plan.color[rows].astype(np.float64)
        up = upstream[sly, slx].reshape(P, 3)

        contributing = (alpha > 0) & active
        capped = np.cumsum(contributing, axis=0) <= MAX_CONTRIBUTORS

        # Suffix colors S_i per row, back-to-front recurrence.
        a_eff = alpha * active
        S = np.empty((G, P, 3))
        suffix = np.broadcast_to(background, (P, 3)).copy()
        for i in range(G - 1, -1, -1):
            S[i] = suffix
            suffix = colors[i][None, :] * a_eff[i][:, None] \
                + (1.0 - a_eff[i])[:, None] * suffix

        g_alpha = ((colors @ up.T) - np.einsum("gpc,pc->gp", S, up)) * T
        g_alpha *= active & capped

        g_color[rows] += np.einsum("gp,pc->gc", w * capped, up)
        g_opacity[rows] += np.sum(g_alpha * gval, axis=1)
        ga = g_alpha * alpha
        g_mean2d[rows, 0] += np.sum(ga * ux, axis=1)
        g_mean2d[rows, 1] += np.sum(ga * uy, axis=1)
        half = 0.5 * ga
        g_cov2d[rows, 0, 0] += np.sum(half * ux * ux, axis=1)
        g_cov2d[rows, 0, 1] += np.sum(half * ux * uy, axis=1)
        g_cov2d[rows, 1, 0] += np.sum(half * uy * ux, axis=1)
        g_cov2d[rows, 1, 1] += np.sum(half * uy * uy, axis=1)

    # Chain from screen space back to 3D parameters, all in float64.
    sid = plan.source_id
    Rw = cam.pose[:3, :3]
    tw = cam.pose[:3, 3]
    t = gmap.means[sid] @ Rw.T + tw
    x, y, z = t[:, 0], t[:, 1], t[:, 2]
    quats = gmap.quats[sid]
    scales = np.exp(gmap.log_scales[sid])
    cov3d = covariance_from_params(quats, scales)
    J = np.zeros((m, 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / z ** 2
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * y / z ** 2
    M = J @ Rw

    g_sigma = np.swapaxes(M, 1, 2) @ g_cov2d @ M
    gM = (g_cov2d + np.swapaxes(g_cov2d, 1, 2)) @ M @ cov3d
    gJ = gM @ Rw.T

    gt = np.einsum("nij,ni->nj", J, g_mean2d)
    gt[:, 0] += gJ[:, 0, 2] * (-cam.fx / z ** 2)
    gt[:, 1] += gJ[:, 1, 2] * (-cam.fy / z ** 2)
    gt[:, 2] += (gJ[:, 0, 0] * (-cam.fx / z ** 2)
                 + gJ[:, 1, 1] * (-cam.fy / z ** 2)
                 + gJ[:, 0, 2] * (2 * cam.fx * x / z ** 3)
                 + gJ[:, 1, 2] * (2 * cam.fy * y / z ** 3))
    grads.mean[sid] = gt @ Rw

    R = quat_to_rotmat(quats)
    N = R * scales[:, None, :]
    g_sym = g_sigma + np.swapaxes(g_sigma, 1, 2)
    gN = g_sym @ N
    g_s = np.einsum("nik,nik->nk", R, gN)
    grads.log_scale[sid] = g_s * scales
    gR = gN * scales[:, None, :]
    grads.rotation[sid] = _quat_backward(quats, gR)

    opac = gmap.opacities[sid]
    grads.opacity_logit[sid] = g_opacity * opac * (1.0 - opac)
    grads.color[sid] = g_color
    grads.mean2d_norm[sid] = np.linalg.norm(g_mean2d, axis=1)
    return grads
