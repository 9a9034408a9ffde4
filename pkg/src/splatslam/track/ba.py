"""Windowed bundle adjustment over keyframe poses and patch inverse depths.

Minimizes the weighted reprojection objective

    sum_edges || project(K T_t T_h^-1 K^-1 P) - observation ||^2_W

by damped Gauss-Newton. Inverse depths are eliminated through the Schur
complement (their Hessian block is diagonal), poses update with left-
multiplied se(3) increments. The first pose is held fixed and the global
scale gauge is pinned by rescaling the solution about the first camera
center so the first-to-second baseline keeps its entry value.

Reprojection uses scaled camera coordinates y = R_rel * ray + d * t_rel
(the image of the homogeneous patch [ray; d]); projection is scale
invariant, so d = 0 (points at infinity) needs no special casing.
"""

from dataclasses import dataclass, field

import numpy as np

from ..se3 import se3_exp, se3_inverse

DAMPING_INIT = 1e-4
DAMPING_MAX = 1e2
MIN_DEPTH_INFO = 1e-12


@dataclass
class BAEdges:
    """Flat edge arrays; pose indices refer to the window pose list."""

    host: np.ndarray        # (E,) int
    target: np.ndarray      # (E,) int
    depth_idx: np.ndarray   # (E,) int, into the shared inverse-depth vector
    ray: np.ndarray         # (E, 3) K^-1 [u, v, 1] in the host frame
    obs: np.ndarray         # (E, 2) measured centers in the target frame
    weight: np.ndarray      # (E, 2) diagonal confidence in [0, 1]

    def __len__(self):
        return len(self.host)


@dataclass
class BAReport:
    initial_cost: float
    final_cost: float
    mean_residual_px2: float
    iterations_accepted: int = 0
    aborted_singular: bool = False


def _hat_batch(v):
    E = len(v)
    out = np.zeros((E, 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def reproject_points(rays, inv_depths, T_host, T_target, intr):
    """Project host-frame patch rays into the target frame.

    Returns (uv (N, 2), y (N, 3) scaled camera points); entries with
    y_z <= 0 are behind the camera and must be dropped by the caller.
    """
    T_rel = T_target @ se3_inverse(T_host)
    y = rays @ T_rel[:3, :3].T + inv_depths[:, None] * T_rel[:3, 3]
    fx, fy, cx, cy = intr
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([fx * y[:, 0] / y[:, 2] + cx,
                       fy * y[:, 1] / y[:, 2] + cy], axis=1)
    return uv, y


def _residuals(poses, depths, edges, intr, rel_cache=None):
    fx, fy, cx, cy = intr
    E = len(edges)
    if rel_cache is None:
        rel_cache = {}
        pairs = set(zip(edges.host.tolist(), edges.target.tolist()))
        for h, t in pairs:
            rel_cache[(h, t)] = poses[t] @ se3_inverse(poses[h])
    R_rel = np.stack([rel_cache[(h, t)][:3, :3]
                      for h, t in zip(edges.host, edges.target)]) if E else np.zeros((0, 3, 3))
    t_rel = np.stack([rel_cache[(h, t)][:3, 3]
                      for h, t in zip(edges.host, edges.target)]) if E else np.zeros((0, 3))
    d = depths[edges.depth_idx]
    y = np.einsum("eij,ej->ei", R_rel, edges.ray) + d[:, None] * t_rel
    valid = (y[:, 2] > 1e-8) & (edges.weight.max(axis=1) > 0)
    z = np.where(valid, y[:, 2], 1.0)
    uv = np.stack([fx * y[:, 0] / z + cx, fy * y[:, 1] / z + cy], axis=1)
    r = np.where(valid[:, None], uv - edges.obs, 0.0)
    w = np.where(valid[:, None], edges.weight, 0.0)
    cost = float(np.sum(w * r * r))
    return r, w, y, R_rel, t_rel, valid, cost


def _camera_centers(poses):
    return [-p[:3, :3].T @ p[:3, 3] for p in poses]


def _apply_scale_gauge(poses, depths, target_baseline):
    """Rescale the world about camera 0 so |C1 - C0| = target_baseline.

    This is an exact symmetry of the reprojection objective; pose 0 is
    left untouched (bit-identical).
    """
    if len(poses) < 2 or target_baseline <= 0:
        return
    C = _camera_centers(poses)
    base = np.linalg.norm(C[1] - C[0])
    if base < 1e-12:
        return
    s = target_baseline / base
    if abs(s - 1.0) < 1e-15:
        return
    for i in range(1, len(poses)):
        Ci = C[0] + s * (C[i] - C[0])
        poses[i][:3, 3] = -poses[i][:3, :3] @ Ci
    depths /= s


def bundle_adjust(poses, depths, edges, intr, iterations=2,
                  damping=DAMPING_INIT, fix_scale=True):
    """Damped Gauss-Newton over window poses and inverse depths (in place).

    poses: list of (4, 4) world-to-camera arrays; poses[0] stays fixed.
    depths: (D,) inverse depths shared by the edge set.
    Never accepts a step that raises the weighted cost; on a singular
    reduced system the damping grows tenfold up to DAMPING_MAX, then the
    call aborts leaving the state unchanged.
    """
    P = len(poses)
    V = P - 1
    D = len(depths)
    r, w, y, R_rel, t_rel, valid, cost = _residuals(poses, depths, edges, intr)
    report = BAReport(initial_cost=cost, final_cost=cost,
                      mean_residual_px2=_mean_residual(r, w))
    if len(edges) == 0 or V < 1 or iterations == 0:
        return report
    fx, fy, cx, cy = intr

    baseline = 0.0
    if fix_scale and P >= 2:
        C = _camera_centers(poses)
        baseline = float(np.linalg.norm(C[1] - C[0]))

    lam = damping
    it = 0
    while it < iterations:
        d = depths[edges.depth_idx]
        z = np.where(valid, y[:, 2], 1.0)
        Jproj = np.zeros((len(edges), 2, 3))
        Jproj[:, 0, 0] = fx / z
        Jproj[:, 0, 2] = -fx * y[:, 0] / z ** 2
        Jproj[:, 1, 1] = fy / z
        Jproj[:, 1, 2] = -fy * y[:, 1] / z ** 2
        Jproj *= valid[:, None, None]

        # target pose: y lives in its frame; left-increment acts directly
        Bt = np.concatenate([d[:, None, None] * np.broadcast_to(np.eye(3), (len(edges), 3, 3)),
                             -_hat_batch(y)], axis=2)            # (E, 3, 6)
        J_t = Jproj @ Bt
        # host pose: increment acts on [ray; d] before the relative motion
        Bh = np.concatenate([d[:, None, None] * np.broadcast_to(np.eye(3), (len(edges), 3, 3)),
                             -_hat_batch(edges.ray)], axis=2)
        J_h = -(Jproj @ R_rel) @ Bh
        J_d = np.einsum("eij,ej->ei", Jproj, t_rel)              # (E, 2)

        Hb = np.zeros((V, V, 6, 6))
        gb = np.zeros((V, 6))
        C_diag = np.zeros(D)
        Epd = np.zeros((V, D, 6))
        g_d = np.zeros(D)

        host_var = edges.host - 1
        tgt_var = edges.target - 1
        hm = host_var >= 0
        tm = tgt_var >= 0

        JtW = w[:, :, None] * J_t
        JhW = w[:, :, None] * J_h
        if tm.any():
            np.add.at(Hb, (tgt_var[tm], tgt_var[tm]),
                      np.einsum("eai,eaj->eij", JtW[tm], J_t[tm]))
            np.add.at(gb, tgt_var[tm],
                      np.einsum("eai,ea->ei", JtW[tm], r[tm]))
            np.add.at(Epd, (tgt_var[tm], edges.depth_idx[tm]),
                      np.einsum("eai,ea->ei", JtW[tm], J_d[tm]))
        if hm.any():
            np.add.at(Hb, (host_var[hm], host_var[hm]),
                      np.einsum("eai,eaj->eij", JhW[hm], J_h[hm]))
            np.add.at(gb, host_var[hm],
                      np.einsum("eai,ea->ei", JhW[hm], r[hm]))
            np.add.at(Epd, (host_var[hm], edges.depth_idx[hm]),
                      np.einsum("eai,ea->ei", JhW[hm], J_d[hm]))
        both = hm & tm
        if both.any():
            cross = np.einsum("eai,eaj->eij", JhW[both], J_t[both])
            np.add.at(Hb, (host_var[both], tgt_var[both]), cross)
            np.add.at(Hb, (tgt_var[both], host_var[both]),
                      np.swapaxes(cross, 1, 2))
        np.add.at(C_diag, edges.depth_idx,
                  np.einsum("ea,ea->e", w * J_d, J_d))
        np.add.at(g_d, edges.depth_idx, np.einsum("ea,ea->e", w * J_d, r))

        H = Hb.transpose(0, 2, 1, 3).reshape(6 * V, 6 * V)
        g = gb.reshape(6 * V)

        accepted = False
        while lam <= DAMPING_MAX:
            Hd = H + lam * np.eye(6 * V)
            act = C_diag > MIN_DEPTH_INFO
            Emat = Epd.transpose(0, 2, 1).reshape(6 * V, D)
            Cinv = np.where(act, 1.0 / np.where(act, C_diag, 1.0), 0.0)
            S = Hd - (Emat * Cinv[None, :]) @ Emat.T
            rhs = -(g - Emat @ (Cinv * g_d))
            try:
                dp = np.linalg.solve(S, rhs)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            if not np.all(np.isfinite(dp)):
                lam *= 10
                continue
            dd = -Cinv * (g_d + Emat.T @ dp)

            new_poses = [poses[0]] + [se3_exp(dp[6 * v:6 * v + 6]) @ poses[v + 1]
                                      for v in range(V)]
            new_depths = np.maximum(depths + dd, 0.0)
            r2, w2, y2, R2, t2, valid2, new_cost = _residuals(
                new_poses, new_depths, edges, intr)
            if new_cost <= cost * (1 + 1e-12):
                for i in range(1, P):
                    poses[i][:] = new_poses[i]
                depths[:] = new_depths
                if fix_scale:
                    _apply_scale_gauge(poses, depths, baseline)
                    r2, w2, y2, R2, t2, valid2, new_cost = _residuals(
                        poses, depths, edges, intr)
                r, w, y, R_rel, t_rel, valid, cost = r2, w2, y2, R2, t2, valid2, new_cost
                report.iterations_accepted += 1
                accepted = True
                lam = damping
                break
            lam *= 10
        if not accepted:
            report.aborted_singular = True
            break
        it += 1

    report.final_cost = cost
    report.mean_residual_px2 = _mean_residual(r, w)
    return report


def _mean_residual(r, w):
    active = w.max(axis=1) > 0
    if not active.any():
        return 0.0
    return float(np.mean(np.sum(r[active] ** 2, axis=1)))
