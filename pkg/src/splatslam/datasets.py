"""Dataset ingestion: TUM-RGBD, Replica-style folders, and synthetic scenes.

Only RGB streams are read; depth files in TUM folders are ignored. Ground
truth trajectories follow the TUM camera-to-world convention.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .images import read_image
from .scene import CameraFrame, GaussianMap
from .se3 import make_se3, se3_inverse
from .trajectory import Trajectory, read_tum

GT_ASSOCIATION_WINDOW = 0.02  # seconds

TUM_INTRINSICS = {
    "freiburg1": (517.3, 516.5, 318.6, 255.3),
    "freiburg2": (520.9, 521.0, 325.1, 249.7),
    "freiburg3": (535.4, 539.2, 320.1, 247.6),
}
TUM_DEFAULT = (525.0, 525.0, 319.5, 239.5)


@dataclass
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


@dataclass
class FrameRecord:
    timestamp: float
    frame_id: int
    path: str = None
    image: np.ndarray = None


@dataclass
class SequenceSpec:
    fmt: str
    frames: list
    intrinsics: Intrinsics
    groundtruth: Trajectory = None
    name: str = ""

    def __post_init__(self):
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frame timestamps must be strictly increasing")

    def __len__(self):
        return len(self.frames)

    def camera_frame(self, i):
        rec = self.frames[i]
        image = rec.image if rec.image is not None else read_image(rec.path)
        k = self.intrinsics
        return CameraFrame(fx=k.fx, fy=k.fy, cx=k.cx, cy=k.cy,
                           width=k.width, height=k.height, pose=np.eye(4),
                           image=image, timestamp=rec.timestamp,
                           frame_id=rec.frame_id)

    def associated_groundtruth(self):
        """frame_id -> nearest ground-truth pose within the 0.02 s window."""
        out = {}
        if self.groundtruth is None or len(self.groundtruth) == 0:
            return out
        gt_ts = np.asarray(self.groundtruth.timestamps)
        for rec in self.frames:
            j = int(np.argmin(np.abs(gt_ts - rec.timestamp)))
            if abs(gt_ts[j] - rec.timestamp) <= GT_ASSOCIATION_WINDOW:
                out[rec.frame_id] = self.groundtruth.poses[j]
        return out


def load_tum(root, intrinsics=None):
    """Load a TUM-RGBD sequence folder (rgb.txt + rgb/ + groundtruth.txt)."""
    rgb_file = os.path.join(root, "rgb.txt")
    if not os.path.isfile(rgb_file):
        raise FileNotFoundError(f"missing rgb.txt under {root}")
    frames = []
    with open(rgb_file) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"bad rgb.txt line: {line!r}")
            t, rel = float(parts[0]), parts[1]
            frames.append(FrameRecord(t, len(frames), path=os.path.join(root, rel)))
    frames.sort(key=lambda r: r.timestamp)
    for i, rec in enumerate(frames):
        rec.frame_id = i

    if intrinsics is None:
        fam = next((k for k in TUM_INTRINSICS if k in str(root)), None)
        fx, fy, cx, cy = TUM_INTRINSICS.get(fam, TUM_DEFAULT)
        intrinsics = Intrinsics(fx, fy, cx, cy, 640, 480)

    gt = None
    gt_file = os.path.join(root, "groundtruth.txt")
    if os.path.isfile(gt_file):
        gt = read_tum(gt_file)
    return SequenceSpec("tum", frames, intrinsics, gt,
                        name=os.path.basename(os.path.normpath(root)))


def load_replica(root, intrinsics):
    """Flat image directory plus traj.txt rows of 16 camera-to-world values."""
    exts = (".png", ".jpg", ".jpeg")
    names = sorted(n for n in os.listdir(root)
                   if n.lower().endswith(exts))
    if not names:
        raise FileNotFoundError(f"no images under {root}")
    frames = [FrameRecord(i / 30.0, i, path=os.path.join(root, n))
              for i, n in enumerate(names)]
    gt = None
    traj_file = os.path.join(root, "traj.txt")
    if os.path.isfile(traj_file):
        poses = []
        with open(traj_file) as f:
            for line in f:
                vals = [float(v) for v in line.split()]
                if not vals:
                    continue
                if len(vals) != 16:
                    raise ValueError("traj.txt rows must have 16 values")
                poses.append(np.array(vals).reshape(4, 4))
        gt = Trajectory([i / 30.0 for i in range(len(poses))], poses)
    return SequenceSpec("replica", frames, intrinsics, gt,
                        name=os.path.basename(os.path.normpath(root)))


# ----- synthetic scenes -----

@dataclass
class SyntheticScene:
    seed: int = 0
    n_gaussians: int = 220
    n_frames: int = 30
    width: int = 96
    height: int = 96
    trajectory: str = "orbit"        # "orbit" or "line"
    background: tuple = (0.05, 0.05, 0.07)
    orbit_radius: float = 2.5
    orbit_span_deg: float = 70.0
    line_length: float = 1.0
    fps: float = 10.0
    focal: float = None              # defaults to 0.95 * width

    def intrinsics(self):
        f = self.focal if self.focal else 0.95 * self.width
        return Intrinsics(f, f, (self.width - 1) / 2.0,
                          (self.height - 1) / 2.0, self.width, self.height)


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-to-camera pose of a camera at `eye` looking at `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(up, z)) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R_c2w = np.stack([x, y, z], axis=1)
    return se3_inverse(make_se3(R_c2w, eye))


def build_scene_map(spec):
    """Ground-truth Gaussian cloud: opaque speckle on a gently waving slab.

    The flattened Gaussians hug an analytic relief, so the rendered
    texture moves like a painted surface: dense image gradients for the
    tracker without see-through parallax.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_gaussians
    x = rng.uniform(-1.1, 1.1, n)
    y = rng.uniform(-0.9, 0.9, n)
    z = 0.10 * np.sin(2.3 * x) * np.cos(1.9 * y)
    means = np.stack([x, y, z], axis=1)
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    scales = np.concatenate([rng.uniform(0.025, 0.07, size=(n, 2)),
                             np.full((n, 1), 0.01)], axis=1)
    opacities = rng.uniform(0.92, 0.995, size=n)
    colors = rng.uniform(0.08, 0.95, size=(n, 3))
    gmap = GaussianMap()
    gmap.add(means, quats, scales, opacities, colors)
    return gmap


def scene_poses(spec):
    """World-to-camera pose per frame along the configured trajectory."""
    poses = []
    n = max(spec.n_frames, 1)
    if spec.trajectory == "orbit":
        span = np.deg2rad(spec.orbit_span_deg)
        for i in range(spec.n_frames):
            ang = -span / 2 + span * (i / max(n - 1, 1))
            eye = np.array([spec.orbit_radius * np.sin(ang),
                            0.35 * np.sin(2.2 * ang),
                            -spec.orbit_radius * np.cos(ang)])
            poses.append(look_at(eye, [0.0, 0.0, 0.0]))
    elif spec.trajectory == "line":
        for i in range(spec.n_frames):
            s = i / max(n - 1, 1)
            eye = np.array([-spec.line_length / 2 + spec.line_length * s,
                            0.05 * s, -spec.orbit_radius])
            poses.append(look_at(eye, [0.0, 0.0, 0.0]))
    else:
        raise ValueError(f"unknown trajectory kind {spec.trajectory!r}")
    return poses


def generate_synthetic(spec):
    """Render the scene along its trajectory into an in-memory sequence."""
    from .splat import render

    gmap = build_scene_map(spec)
    poses = scene_poses(spec)
    k = spec.intrinsics()
    frames = []
    for i, pose in enumerate(poses):
        cam = CameraFrame(fx=k.fx, fy=k.fy, cx=k.cx, cy=k.cy, width=k.width,
                          height=k.height, pose=pose, timestamp=i / spec.fps,
                          frame_id=i)
        out = render(gmap, cam, spec.background, dtype=np.float32)
        frames.append(FrameRecord(i / spec.fps, i,
                                  image=out.color.astype(np.float64)))
    gt = Trajectory([i / spec.fps for i in range(len(poses))],
                    [se3_inverse(p) for p in poses])
    seq = SequenceSpec("synthetic", frames, k,
                       gt if len(poses) else Trajectory(), name="synthetic")
    return seq
