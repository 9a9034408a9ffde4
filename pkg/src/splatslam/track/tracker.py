"""Online patch-graph visual odometry.

Every incoming frame is seeded by a constant-velocity model, matched
against the patches of the keyframe window, and bundle-adjusted together
with the window. Frames whose mean patch flow since the last keyframe
exceeds a threshold become keyframes and contribute new patches; others
only receive a pose.

Initialization is incremental: the first `init_frames` frames are all
keyframes tracked by the same measure-then-adjust loop (predictions stay
small that way), followed by polish rounds over the whole window, after
which the first-to-second keyframe baseline is normalized to 1 to pin the
monocular scale. Stored measurements are re-aligned whenever their
predictions drift and are soft-gated out of the optimization while their
reprojection residual exceeds `outlier_px`.
"""

from dataclasses import dataclass

import numpy as np

from ..images import to_gray
from ..se3 import se3_inverse
from .align import TargetImage, compute_correspondences
from .ba import BAEdges, bundle_adjust, reproject_points
from .patches import sample_patches


@dataclass
class TrackerConfig:
    patch_count: int = 96
    patch_size: int = 3
    align_halfwin: int = 3
    window: int = 10
    init_frames: int = 8
    keyframe_flow_px: float = 2.5
    search_radius: int = 8
    align_iters: int = 15
    align_tol: float = 0.03
    zncc_min: float = 0.3
    min_active_edges: int = 8
    ba_iters: int = 2
    init_rounds: int = 8
    init_flow_px: float = 2.0   # parallax gate for accepting init keyframes
    refresh_px: float = 1.0
    outlier_px: float = 4.0
    max_edge_gap: int = 3   # patch lifetime: max keyframe separation of edges
    seed: int = 0


@dataclass
class TrackResult:
    pose: np.ndarray
    is_keyframe: bool
    lost: bool = False
    initialized: bool = False


@dataclass
class Keyframe:
    frame_id: int
    timestamp: float
    cam: object                  # CameraFrame (holds image + intrinsics)
    target: object               # TargetImage (grayscale + cubic coeffs)
    pose: np.ndarray             # (4, 4) world-to-camera, live estimate
    patches: object              # PatchSet
    rays: np.ndarray             # (K, 3) K^-1 [u, v, 1]

    @property
    def gray(self):
        return self.target.gray


def pixel_rays(centers, cam):
    return np.stack([(centers[:, 0] - cam.cx) / cam.fx,
                     (centers[:, 1] - cam.cy) / cam.fy,
                     np.ones(len(centers))], axis=1)


class Tracker:
    def __init__(self, config=None):
        self.cfg = config or TrackerConfig()
        self.rng = np.random.default_rng(self.cfg.seed)
        self.keyframes = []          # window, oldest first
        self.obs = {}                # (host_fid, tgt_fid) -> [obs, w, pred]
        self.initialized = False
        self._last_pose = np.eye(4)
        self._prev_pose = np.eye(4)
        self._records = []           # ("kf", fid, ts) | ("rel", ref, ts, T_rel)
        self._frozen = {}            # fid -> final pose of evicted keyframes
        self.lost_frames = 0
        self.frames_seen = 0

    # ----- bookkeeping -----

    def _kf_index(self, fid):
        for i, kf in enumerate(self.keyframes):
            if kf.frame_id == fid:
                return i
        return None

    def _intrinsics(self):
        cam = self.keyframes[0].cam
        return (cam.fx, cam.fy, cam.cx, cam.cy)

    def _median_inv_depth(self):
        if not self.keyframes:
            return 0.5
        d = self.keyframes[-1].patches.inv_depths
        d = d[d > 0]
        return float(np.median(d)) if len(d) else 0.5

    def _make_keyframe(self, frame, pose):
        patches = sample_patches(frame, self.cfg.patch_count, rng=self.rng,
                                 init_inv_depth=self._median_inv_depth(),
                                 size=self.cfg.patch_size,
                                 align_halfwin=self.cfg.align_halfwin)
        target = TargetImage(to_gray(frame.image))
        return Keyframe(frame.frame_id, frame.timestamp, frame, target,
                        np.array(pose, dtype=np.float64), patches,
                        pixel_rays(patches.centers, frame))

    def _evict_oldest(self):
        old = self.keyframes.pop(0)
        self._frozen[old.frame_id] = old.pose.copy()
        for k in [k for k in self.obs
                  if old.frame_id in (k[0], k[1])]:
            del self.obs[k]

    # ----- correspondence management -----

    def _predictions(self, host, target_pose, target_cam):
        intr = (target_cam.fx, target_cam.fy, target_cam.cx, target_cam.cy)
        uv, y = reproject_points(host.rays, host.patches.inv_depths,
                                 host.pose, target_pose, intr)
        return uv, y[:, 2] > 1e-8

    def _local_affines(self, host, target_pose, target_cam, eps=1.0):
        """Host-to-target pixel warps of each patch neighborhood, from the
        current geometry (central differences of the reprojection)."""
        intr = (target_cam.fx, target_cam.fy, target_cam.cx, target_cam.cy)
        K = len(host.patches)
        A = np.zeros((K, 2, 2))
        d = host.patches.inv_depths
        for col, axis in ((0, np.array([eps, 0.0])), (1, np.array([0.0, eps]))):
            rp = pixel_rays(host.patches.centers + axis, host.cam)
            rm = pixel_rays(host.patches.centers - axis, host.cam)
            up, yp = reproject_points(rp, d, host.pose, target_pose, intr)
            um, ym = reproject_points(rm, d, host.pose, target_pose, intr)
            A[:, :, col] = (up - um) / (2 * eps)
            bad = (yp[:, 2] <= 1e-8) | (ym[:, 2] <= 1e-8)
            A[bad] = np.eye(2)
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        wild = ~np.isfinite(det) | (det < 0.2) | (det > 5.0) \
            | (np.abs(A).max(axis=(1, 2)) > 3.0)
        A[wild] = np.eye(2)
        return A

    def _measure(self, host, target_image, target_pose, target_cam):
        pred, in_front = self._predictions(host, target_pose, target_cam)
        safe_pred = np.where(in_front[:, None], pred, 0.0)
        affine = self._local_affines(host, target_pose, target_cam)
        obs, w = compute_correspondences(
            host.patches.windows, target_image, safe_pred,
            search_radius=self.cfg.search_radius, iters=self.cfg.align_iters,
            tol=self.cfg.align_tol, zncc_min=self.cfg.zncc_min, affine=affine)
        w = np.where(in_front[:, None], w, 0.0)
        return obs, w, pred

    def _measure_pair(self, host, target):
        self.obs[(host.frame_id, target.frame_id)] = list(
            self._measure(host, target.target, target.pose, target.cam))

    def _maintain_edges(self):
        """Re-align stored measurements whose predictions moved or whose
        reprojection residual exceeds the outlier gate."""
        for (hf, tf), entry in list(self.obs.items()):
            hi = self._kf_index(hf)
            ti = self._kf_index(tf)
            if hi is None or ti is None:
                continue
            host, target = self.keyframes[hi], self.keyframes[ti]
            obs, w, pred0 = entry
            pred, in_front = self._predictions(host, target.pose, target.cam)
            active = in_front & (w.max(axis=1) > 0)
            drift = np.linalg.norm(pred - pred0, axis=1)
            resid = np.linalg.norm(pred - obs, axis=1)
            if np.any(in_front & (drift > self.cfg.refresh_px)) \
                    or np.any(active & (resid > self.cfg.outlier_px)):
                self._measure_pair(host, target)

    # ----- bundle adjustment assembly -----

    def _build_edges(self, poses_order, extra=None):
        """Edge arrays for the keyframes listed in poses_order (frame ids).

        Stored measurements whose current reprojection residual exceeds the
        outlier gate contribute zero weight (non-destructively). `extra`
        appends fresh measurements into a tentative frame:
        (frame_id, {host_fid: (obs, w)}).
        """
        index_of = {fid: i for i, fid in enumerate(poses_order)}
        K = self.cfg.patch_count
        hosts, tgts, didx, rays, obs, wts = [], [], [], [], [], []
        depth_base = {kf.frame_id: i * K for i, kf in enumerate(self.keyframes)}
        for (hf, tf), (o, w, _) in self.obs.items():
            if hf not in index_of or tf not in index_of:
                continue
            host = self.keyframes[self._kf_index(hf)]
            target = self.keyframes[self._kf_index(tf)]
            pred, in_front = self._predictions(host, target.pose, target.cam)
            resid = np.linalg.norm(pred - o, axis=1)
            gate = (in_front & (resid <= self.cfg.outlier_px))[:, None]
            n = len(host.patches)
            hosts.append(np.full(n, index_of[hf]))
            tgts.append(np.full(n, index_of[tf]))
            didx.append(depth_base[hf] + np.arange(n))
            rays.append(host.rays)
            obs.append(o)
            wts.append(w * gate)
        if extra is not None:
            t_fid, measures = extra
            for hf, (o, w) in measures.items():
                host = self.keyframes[self._kf_index(hf)]
                n = len(host.patches)
                hosts.append(np.full(n, index_of[hf]))
                tgts.append(np.full(n, index_of[t_fid]))
                didx.append(depth_base[hf] + np.arange(n))
                rays.append(host.rays)
                obs.append(o)
                wts.append(w)
        if not hosts:
            z = np.zeros(0, dtype=int)
            return BAEdges(z, z, z, np.zeros((0, 3)), np.zeros((0, 2)),
                           np.zeros((0, 2)))
        return BAEdges(np.concatenate(hosts).astype(int),
                       np.concatenate(tgts).astype(int),
                       np.concatenate(didx).astype(int),
                       np.concatenate(rays), np.concatenate(obs),
                       np.concatenate(wts))

    def _gather_depths(self):
        return np.concatenate([kf.patches.inv_depths for kf in self.keyframes])

    def _scatter_depths(self, depths):
        K = self.cfg.patch_count
        for i, kf in enumerate(self.keyframes):
            kf.patches.inv_depths[:] = depths[i * K:(i + 1) * K]

    def _window_ba(self, iterations, extra_frame=None):
        """Bundle-adjust the window, optionally with a tentative extra pose.

        Returns the optimized extra pose (or None) and the BA report.
        """
        order = [kf.frame_id for kf in self.keyframes]
        poses = [kf.pose.copy() for kf in self.keyframes]
        extra = None
        if extra_frame is not None:
            fid, pose, measures = extra_frame
            order.append(fid)
            poses.append(np.array(pose, dtype=np.float64))
            extra = (fid, measures)
        edges = self._build_edges(order, extra)
        depths = self._gather_depths()
        report = bundle_adjust(poses, depths, edges, self._intrinsics(),
                               iterations=iterations)
        for kf, pose in zip(self.keyframes, poses):
            kf.pose[:] = pose
        self._scatter_depths(depths)
        return (poses[-1] if extra_frame is not None else None), report

    # ----- keyframe acceptance -----

    def _accept_keyframe(self, frame, pose, measures):
        kf = self._make_keyframe(frame, pose)
        self.keyframes.append(kf)
        for hf, (obs_a, w_a) in measures.items():
            host = self.keyframes[self._kf_index(hf)]
            pred, _ = self._predictions(host, kf.pose, kf.cam)
            self.obs[(hf, kf.frame_id)] = [obs_a, w_a, pred]
        # backward edges from the new patches, within the lifetime span
        for other in self.keyframes[-1 - self.cfg.max_edge_gap:-1]:
            self._measure_pair(kf, other)
        if len(self.keyframes) > self.cfg.window:
            self._evict_oldest()
        self._records.append(("kf", frame.frame_id, frame.timestamp))
        self._push_pose(kf.pose)
        return kf

    def _finish_initialization(self):
        for _ in range(self.cfg.init_rounds):
            self._maintain_edges()
            self._window_ba(self.cfg.ba_iters)
        # pin the monocular scale: first-to-second baseline = 1
        C0 = -self.keyframes[0].pose[:3, :3].T @ self.keyframes[0].pose[:3, 3]
        C1 = -self.keyframes[1].pose[:3, :3].T @ self.keyframes[1].pose[:3, 3]
        base = np.linalg.norm(C1 - C0)
        if base > 1e-9:
            s = 1.0 / base
            for kf in self.keyframes[1:]:
                C = -kf.pose[:3, :3].T @ kf.pose[:3, 3]
                kf.pose[:3, 3] = -kf.pose[:3, :3] @ (C0 + s * (C - C0))
            for kf in self.keyframes:
                kf.patches.inv_depths[:] = kf.patches.inv_depths / s
        # the motion model must live in the rescaled world
        self._last_pose = self.keyframes[-1].pose.copy()
        self._prev_pose = self.keyframes[-2].pose.copy()
        self.initialized = True

    # ----- main entry -----

    def track_frame(self, frame):
        """Process one frame; returns its pose and keyframe/lost flags."""
        self.frames_seen += 1

        if not self.keyframes:
            kf = self._make_keyframe(frame, np.eye(4))
            self.keyframes.append(kf)
            self._records.append(("kf", frame.frame_id, frame.timestamp))
            self._push_pose(kf.pose)
            return TrackResult(kf.pose.copy(), True, False, False)

        cv_pose = self._constant_velocity()
        timg = TargetImage(to_gray(frame.image))
        measures = {}
        active = 0
        for host in self.keyframes[-self.cfg.max_edge_gap:]:
            o, w, _ = self._measure(host, timg, cv_pose, frame)
            measures[host.frame_id] = (o, w)
            active += int(np.count_nonzero(w.max(axis=1) > 0))

        if active < self.cfg.min_active_edges:
            self.lost_frames += 1
            last_kf = self.keyframes[-1]
            rel = cv_pose @ se3_inverse(last_kf.pose)
            self._records.append(("rel", last_kf.frame_id, frame.timestamp, rel))
            self._push_pose(cv_pose)
            return TrackResult(cv_pose.copy(), False, True, self.initialized)

        new_pose, _ = self._window_ba(
            self.cfg.ba_iters,
            extra_frame=(frame.frame_id, cv_pose, measures))

        if not self.initialized:
            self._accept_keyframe(frame, new_pose, measures)
            if len(self.keyframes) == self.cfg.init_frames:
                self._finish_initialization()
            pose = self.keyframes[-1].pose
            return TrackResult(pose.copy(), True, False, self.initialized)

        last_kf = self.keyframes[-1]
        o, w = measures[last_kf.frame_id]
        good = w.max(axis=1) > 0
        if np.count_nonzero(good) >= 4:
            flow = float(np.mean(np.linalg.norm(
                o[good] - last_kf.patches.centers[good], axis=1)))
        else:
            flow = np.inf  # nothing to compare against; force a keyframe

        if flow > self.cfg.keyframe_flow_px:
            kf = self._accept_keyframe(frame, new_pose, measures)
            self._maintain_edges()
            self._window_ba(self.cfg.ba_iters)
            return TrackResult(kf.pose.copy(), True, False, True)

        rel = new_pose @ se3_inverse(last_kf.pose)
        self._records.append(("rel", last_kf.frame_id, frame.timestamp, rel))
        self._push_pose(new_pose)
        return TrackResult(new_pose.copy(), False, False, True)

    def _constant_velocity(self):
        return self._last_pose @ se3_inverse(self._prev_pose) @ self._last_pose

    def _push_pose(self, pose):
        self._prev_pose = self._last_pose
        self._last_pose = np.array(pose, dtype=np.float64)

    # ----- outputs -----

    def keyframe_pose(self, fid):
        i = self._kf_index(fid)
        if i is not None:
            return self.keyframes[i].pose.copy()
        return self._frozen[fid].copy()

    def trajectory_world_to_camera(self):
        """Per-frame (timestamp, world-to-camera pose), keyframes resolved
        against their latest estimates."""
        out = []
        for rec in self._records:
            if rec[0] == "kf":
                _, fid, ts = rec
                out.append((ts, self.keyframe_pose(fid)))
            else:
                _, ref_fid, ts, rel = rec
                out.append((ts, rel @ self.keyframe_pose(ref_fid)))
        return out
