"""End-to-end run: track every frame; on keyframes grow and optimize the
Gaussian map; write trajectory, map, metrics and diagnostic artifacts.

Tracking and mapping run in a single process, interleaved per frame.
"""

import json
import os
import time

import numpy as np

from .images import write_png
from .mapping import Mapper
from .metrics import ate_rmse, psnr, ssim
from .se3 import se3_inverse
from .splat import render
from .track import Tracker
from .trajectory import Trajectory, write_tum


def _map_window(tracker, size):
    kfs = tracker.keyframes[-size:]
    return [kf.cam.with_pose(kf.pose) for kf in kfs]


def run_slam(seq, cfg, out_dir=None, progress=None):
    """Run the tracker+mapper over a SequenceSpec; returns the metrics dict.

    When out_dir is given, writes traj_est.txt, map.ply, metrics.json,
    loss.csv and periodic keyframe renders.
    """
    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    renders_dir = os.path.join(out_dir, "renders")
    os.makedirs(renders_dir, exist_ok=True)

    if len(seq) == 0:
        raise ValueError("dataset contains no frames")

    tracker = Tracker(cfg.tracker)
    mapper = Mapper(cfg.mapper)
    map_ready = False
    keyframe_count = 0
    bg = np.asarray(cfg.mapper.background, dtype=np.float64)

    track_time = 0.0
    map_time = 0.0
    t_start = time.perf_counter()

    for i in range(len(seq)):
        frame = seq.camera_frame(i)
        t0 = time.perf_counter()
        res = tracker.track_frame(frame)
        track_time += time.perf_counter() - t0

        if not (res.is_keyframe and tracker.initialized):
            continue
        t0 = time.perf_counter()
        keyframe_count += 1
        if not map_ready:
            mapper.initialize_map(
                [(kf.cam.with_pose(kf.pose), kf.patches.centers,
                  kf.patches.inv_depths) for kf in tracker.keyframes])
            map_ready = True
        elif cfg.mapper.enable_dynamic_insertion:
            # offer the window points (newest keyframe's fresh patches have
            # not been bundle-adjusted yet, so they wait one keyframe)
            for kf in tracker.keyframes[:-1]:
                mapper.insert_dynamic(kf.cam.with_pose(kf.pose),
                                      kf.patches.centers,
                                      kf.patches.inv_depths)
        else:
            for kf in tracker.keyframes[-2:-1]:
                pts_cam = kf.cam.with_pose(kf.pose)
                mapper.insert_all(pts_cam, kf.patches.centers,
                                  kf.patches.inv_depths)

        current = tracker.keyframes[-1]
        cam_now = current.cam.with_pose(current.pose)
        if cfg.mapper.enable_clarity_densify and len(mapper.map):
            out = render(mapper.map, cam_now, bg, dtype=mapper._dtype)
            sigma = cfg.mapper.sigma_for(cam_now.width, cam_now.height)
            mapper.densify_clarity(out, sigma)
        if len(mapper.map):
            mapper.optimize_window(_map_window(tracker, cfg.mapper.opt_window),
                                   cfg.mapper.opt_iters_per_keyframe)
        map_time += time.perf_counter() - t0

        if out_dir and cfg.render_every > 0 \
                and keyframe_count % cfg.render_every == 0 and len(mapper.map):
            shot = render(mapper.map, cam_now, bg, dtype=mapper._dtype)
            write_png(shot.color, os.path.join(
                renders_dir, f"kf_{current.frame_id:06d}.png"))
        if progress:
            progress(i, res, mapper)

    total_time = time.perf_counter() - t_start

    # trajectory (camera-to-world, TUM convention)
    recs = tracker.trajectory_world_to_camera()
    est = Trajectory([t for t, _ in recs], [se3_inverse(p) for _, p in recs])

    # rendering quality over the retained keyframes, against observations
    psnrs = []
    ssims = []
    if map_ready:
        for kf in tracker.keyframes:
            cam = kf.cam.with_pose(kf.pose)
            out = render(mapper.map, cam, bg, dtype=mapper._dtype)
            rendered = np.asarray(out.color, dtype=np.float64)
            psnrs.append(psnr(rendered, cam.image))
            ssims.append(ssim(rendered, cam.image))

    metrics = {
        "num_frames": len(seq),
        "num_keyframes": keyframe_count,
        "num_gaussians": int(len(mapper.map)),
        "fps": len(seq) / total_time if total_time > 0 else 0.0,
        "tracking_per_frame_s": track_time / len(seq),
        "mapping_per_frame_s": map_time / len(seq),
        "total_s": total_time,
        "tracking_lost_frames": tracker.lost_frames,
        "psnr_db": float(np.mean([p for p in psnrs if np.isfinite(p)]))
        if psnrs else None,
        "ssim": float(np.mean(ssims)) if ssims else None,
        "ate_rmse_cm": None,
    }
    if seq.groundtruth is not None and len(seq.groundtruth) >= 3 and len(est) >= 3:
        try:
            metrics["ate_rmse_cm"] = ate_rmse(est, seq.groundtruth, align=True)
        except ValueError:
            pass

    if out_dir:
        write_tum(est, os.path.join(out_dir, "traj_est.txt"))
        if map_ready:
            mapper.map.save_ply(os.path.join(out_dir, "map.ply"))
        with open(os.path.join(out_dir, "loss.csv"), "w") as f:
            f.write("step,l_photo,l_ssim,l_reg,total,num_gaussians\n")
            for row in mapper.loss_rows:
                f.write("%d,%.8f,%.8f,%.8f,%.8f,%d\n" % row)
        with open(os.path.join(out_dir, "metrics.json"), "w") as f:
            json.dump(metrics, f, indent=2, sort_keys=True)
            f.write("\n")
    return metrics


def format_timing_table(metrics):
    """Per-stage timing summary in the runtime-table layout."""
    lines = [
        f"{'':<14}{'Tracking / Frame':>18}{'Mapping / Frame':>18}{'FPS':>8}",
        f"{'this run':<14}"
        f"{metrics['tracking_per_frame_s']:>17.3f}s"
        f"{metrics['mapping_per_frame_s']:>17.3f}s"
        f"{metrics['fps']:>8.3f}",
    ]
    return "\n".join(lines)
