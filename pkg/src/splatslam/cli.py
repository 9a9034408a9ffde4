"""Command-line entry points: run, eval, synth."""

import argparse
import os
import sys

import numpy as np

from .config import load_config, write_metadata
from .datasets import (SyntheticScene, generate_synthetic, load_replica,
                       load_tum, Intrinsics)
from .images import read_image, write_png
from .metrics import ate_rmse, psnr, ssim
from .pipeline import format_timing_table, run_slam
from .trajectory import read_tum, write_tum


def _load_sequence(cfg):
    if cfg.format == "tum":
        return load_tum(cfg.dataset)
    if cfg.format == "synthetic":
        intr_file = os.path.join(cfg.dataset, "intrinsics.txt")
        intr = None
        if os.path.isfile(intr_file):
            vals = [float(v) for v in open(intr_file).read().split()]
            intr = Intrinsics(vals[0], vals[1], vals[2], vals[3],
                              int(vals[4]), int(vals[5]))
        return load_tum(cfg.dataset, intrinsics=intr)
    if cfg.format == "replica":
        intr_file = os.path.join(cfg.dataset, "intrinsics.txt")
        if not os.path.isfile(intr_file):
            raise FileNotFoundError(
                "replica format needs an intrinsics.txt "
                "(fx fy cx cy width height)")
        vals = [float(v) for v in open(intr_file).read().split()]
        intr = Intrinsics(vals[0], vals[1], vals[2], vals[3],
                          int(vals[4]), int(vals[5]))
        return load_replica(cfg.dataset, intr)
    raise ValueError(f"unknown dataset format {cfg.format!r}")


def cmd_run(args):
    overrides = {"dataset": args.dataset, "format": args.format,
                 "out": args.out, "seed": args.seed,
                 "render_every": args.render_every}
    cfg = load_config(args.config, overrides)
    if not cfg.dataset:
        print("error: no dataset given", file=sys.stderr)
        return 2
    try:
        seq = _load_sequence(cfg)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if len(seq) == 0:
        print("error: dataset contains no frames", file=sys.stderr)
        return 2
    os.makedirs(cfg.out, exist_ok=True)
    write_metadata(cfg, os.path.join(cfg.out, "metadata.json"),
                   extra={"sequence": seq.name, "frames": len(seq)})
    metrics = run_slam(seq, cfg, cfg.out)
    print(format_timing_table(metrics))
    if metrics["ate_rmse_cm"] is not None:
        print(f"ATE-RMSE: {metrics['ate_rmse_cm']:.3f} cm")
    if metrics["psnr_db"] is not None:
        print(f"PSNR: {metrics['psnr_db']:.2f} dB  SSIM: {metrics['ssim']:.4f}")
    print(f"Gaussians: {metrics['num_gaussians']}  "
          f"keyframes: {metrics['num_keyframes']}  "
          f"lost: {metrics['tracking_lost_frames']}")
    return 0


def cmd_eval(args):
    try:
        if args.est and args.gt:
            est = read_tum(args.est)
            gt = read_tum(args.gt)
            align = args.align != "none"
            with_scale = args.align == "sim3"
            value = ate_rmse(est, gt, align=align, with_scale=with_scale)
            print(f"ATE-RMSE: {value:.6f} cm ({len(est)} poses, "
                  f"align={args.align})")
            return 0
        if args.render_dir and args.gt_dir:
            names = sorted(os.listdir(args.render_dir))
            ps, ss = [], []
            for n in names:
                a = read_image(os.path.join(args.render_dir, n))
                b = read_image(os.path.join(args.gt_dir, n))
                ps.append(psnr(a, b))
                ss.append(ssim(a, b))
            finite = [p for p in ps if np.isfinite(p)]
            mean_psnr = float(np.mean(finite)) if finite else float("inf")
            print(f"PSNR: {mean_psnr:.3f} dB  SSIM: {float(np.mean(ss)):.4f} "
                  f"({len(names)} images)")
            return 0
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print("error: pass --est/--gt or --render-dir/--gt-dir", file=sys.stderr)
    return 2


def cmd_synth(args):
    spec = SyntheticScene(seed=args.seed, n_gaussians=args.n_gaussians,
                          n_frames=args.n_frames, width=args.width,
                          height=args.height, trajectory=args.trajectory)
    try:
        os.makedirs(args.out, exist_ok=True)
        rgb_dir = os.path.join(args.out, "rgb")
        os.makedirs(rgb_dir, exist_ok=True)
        seq = generate_synthetic(spec)
        from .datasets import build_scene_map
        build_scene_map(spec).save_ply(os.path.join(args.out, "gt_map.ply"))
        write_tum(seq.groundtruth, os.path.join(args.out, "groundtruth.txt"))
        k = spec.intrinsics()
        with open(os.path.join(args.out, "intrinsics.txt"), "w") as f:
            f.write(f"{k.fx} {k.fy} {k.cx} {k.cy} {k.width} {k.height}\n")
        with open(os.path.join(args.out, "rgb.txt"), "w") as f:
            f.write("# timestamp filename\n")
            for rec in seq.frames:
                name = f"rgb/{rec.frame_id:06d}.png"
                write_png(rec.image, os.path.join(args.out, name))
                f.write(f"{rec.timestamp:.6f} {name}\n")
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {len(seq)} frames to {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="splatslam",
                                description="Monocular Gaussian-splatting SLAM")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="track and map a sequence")
    r.add_argument("--dataset", required=True)
    r.add_argument("--format", choices=["tum", "replica", "synthetic"],
                   default=None)
    r.add_argument("--config", default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--render-every", type=int, default=None)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="evaluate trajectories or renders")
    e.add_argument("--est")
    e.add_argument("--gt")
    e.add_argument("--render-dir")
    e.add_argument("--gt-dir")
    e.add_argument("--align", choices=["sim3", "se3", "none"], default="sim3")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="materialize a synthetic sequence")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-gaussians", type=int, default=220)
    s.add_argument("--n-frames", type=int, default=30)
    s.add_argument("--width", type=int, default=96)
    s.add_argument("--height", type=int, default=96)
    s.add_argument("--trajectory", choices=["orbit", "line"], default="orbit")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
