"""Scene types: 3D Gaussians, cameras, and the growable Gaussian map.

The map stores parameters column-wise in unconstrained form (log scales,
logit opacities) so optimization needs no projection steps. Linear values
are exposed through properties.
"""

from dataclasses import dataclass

import numpy as np

from .se3 import is_rotation, quat_to_rotmat
from .voxel_grid import VoxelHashGrid

OPACITY_LOGIT_MAX = 16.0  # keeps sigmoid away from exact 0/1


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def logit(p):
    p = np.clip(np.asarray(p, dtype=np.float64), sigmoid(-OPACITY_LOGIT_MAX),
                sigmoid(OPACITY_LOGIT_MAX))
    return np.log(p) - np.log1p(-p)


@dataclass
class Gaussian3D:
    """A single anisotropic 3D Gaussian with linear-valued parameters."""

    mean: np.ndarray       # (3,) world position
    rotation: np.ndarray   # (4,) unit quaternion (w, x, y, z)
    scale: np.ndarray      # (3,) positive axis lengths
    opacity: float         # in [0, 1]
    color: np.ndarray      # (3,) RGB in [0, 1]

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-6:
            raise ValueError("rotation quaternion must have unit norm")
        if np.any(self.scale <= 0):
            raise ValueError("scale components must be positive")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must lie in [0, 1]")


def covariance_from_params(rotation, scale):
    """R S S^T R^T without validation; normalizes the quaternion internally.

    Used by the render path, where parameters may be mid-optimization and
    slightly off the unit sphere.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    single = rotation.ndim == 1
    if single:
        rotation = rotation[None]
        scale = scale[None]
    R = quat_to_rotmat(rotation)
    M = R * scale[:, None, :]  # R @ diag(s)
    cov = M @ np.swapaxes(M, -1, -2)
    return cov[0] if single else cov


def build_covariance(rotation, scale):
    """Covariance R S S^T R^T of a unit quaternion and positive scale vector.

    Accepts a single (4,)/(3,) pair or batched (N, 4)/(N, 3) arrays.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    norms = np.linalg.norm(rotation, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("rotation quaternion must have unit norm")
    if np.any(scale <= 0):
        raise ValueError("scale components must be positive")
    return covariance_from_params(rotation, scale)


@dataclass
class CameraFrame:
    """Pinhole camera with a world-to-camera pose and an RGB image buffer."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: np.ndarray             # (4, 4) world-to-camera
    image: np.ndarray = None     # (H, W, 3) in [0, 1], optional
    timestamp: float = 0.0
    frame_id: int = -1

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if not is_rotation(self.pose[:3, :3]):
            raise ValueError("pose rotation must be orthonormal with det +1")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def with_pose(self, pose):
        return CameraFrame(self.fx, self.fy, self.cx, self.cy, self.width,
                           self.height, pose, self.image, self.timestamp,
                           self.frame_id)

    def backproject(self, uv, inv_depth):
        """World points of pixels uv (N, 2) with inverse depths (N,).

        Entries with inv_depth <= 1e-6 yield NaN rows (callers skip them).
        """
        uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
        d = np.atleast_1d(np.asarray(inv_depth, dtype=np.float64))
        rays = np.stack([(uv[:, 0] - self.cx) / self.fx,
                         (uv[:, 1] - self.cy) / self.fy,
                         np.ones(len(uv))], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            pts_cam = np.where(d[:, None] > 1e-6, rays / d[:, None], np.nan)
        R = self.pose[:3, :3]
        t = self.pose[:3, 3]
        return (pts_cam - t) @ R


PLY_PROPERTIES = ["x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                  "scale_0", "scale_1", "scale_2", "opacity",
                  "red", "green", "blue"]


class GaussianMap:
    """Column-wise store of Gaussian parameters plus a voxel-hash index.

    Single-writer, multiple-reader: mutation happens between render calls,
    and each mutation bumps `generation` so readers can detect mid-read
    changes in debug paths.
    """

    def __init__(self, cell_size=None):
        self.means = np.zeros((0, 3))
        self.quats = np.zeros((0, 4))
        self.log_scales = np.zeros((0, 3))
        self.opacity_logits = np.zeros(0)
        self.colors = np.zeros((0, 3))
        self.generation = 0
        self._index = VoxelHashGrid(cell_size) if cell_size else None

    def __len__(self):
        return len(self.means)

    @property
    def scales(self):
        return np.exp(self.log_scales)

    @property
    def opacities(self):
        return sigmoid(self.opacity_logits)

    @property
    def index(self):
        return self._index

    def set_cell_size(self, cell_size):
        self._index = VoxelHashGrid(cell_size)
        if len(self) > 0:
            self._index.insert(self.means)

    def add(self, means, quats, scales, opacities, colors):
        """Append Gaussians given linear-valued parameters."""
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        quats = np.atleast_2d(np.asarray(quats, dtype=np.float64))
        quats = quats / np.linalg.norm(quats, axis=1, keepdims=True)
        scales = np.atleast_2d(np.asarray(scales, dtype=np.float64))
        opac = np.atleast_1d(np.asarray(opacities, dtype=np.float64))
        colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
        if np.any(scales <= 0):
            raise ValueError("scale components must be positive")
        self.means = np.concatenate([self.means, means])
        self.quats = np.concatenate([self.quats, quats])
        self.log_scales = np.concatenate([self.log_scales, np.log(scales)])
        self.opacity_logits = np.concatenate([self.opacity_logits, logit(opac)])
        self.colors = np.concatenate([self.colors, np.clip(colors, 0.0, 1.0)])
        if self._index is not None:
            self._index.insert(means)
        self.generation += 1
        return np.arange(len(self) - len(means), len(self))

    def remove(self, mask):
        """Drop Gaussians where mask is True; rebuilds the spatial index."""
        keep = ~np.asarray(mask, dtype=bool)
        self.means = self.means[keep]
        self.quats = self.quats[keep]
        self.log_scales = self.log_scales[keep]
        self.opacity_logits = self.opacity_logits[keep]
        self.colors = self.colors[keep]
        self.rebuild_index()
        self.generation += 1
        return keep

    def rebuild_index(self):
        if self._index is not None:
            self._index = VoxelHashGrid(self._index.cell_size)
            if len(self) > 0:
                self._index.insert(self.means)

    def gaussian(self, i):
        return Gaussian3D(self.means[i], self.quats[i], self.scales[i],
                          float(self.opacities[i]), self.colors[i])

    def scene_extent(self):
        """Radius of the bounding sphere of the means about their centroid."""
        if len(self) == 0:
            return 1.0
        center = self.means.mean(axis=0)
        return max(float(np.linalg.norm(self.means - center, axis=1).max()), 1e-6)

    def save_ply(self, path):
        """Binary little-endian PLY; scales stay in log and opacity in logit."""
        n = len(self)
        header = "\n".join(
            ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
            + [f"property float {p}" for p in PLY_PROPERTIES]
            + ["end_header", ""])
        data = np.concatenate([
            self.means, self.quats, self.log_scales,
            self.opacity_logits[:, None], self.colors], axis=1)
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(data.astype("<f4").tobytes())

    @classmethod
    def load_ply(cls, path):
        with open(path, "rb") as f:
            n = None
            props = []
            while True:
                line = f.readline().decode("ascii").strip()
                if line.startswith("element vertex"):
                    n = int(line.split()[-1])
                elif line.startswith("property float"):
                    props.append(line.split()[-1])
                elif line == "end_header":
                    break
                elif line == "":
                    raise ValueError("truncated PLY header")
            if n is None or props != PLY_PROPERTIES:
                raise ValueError("unexpected PLY layout")
            data = np.frombuffer(f.read(4 * len(props) * n),
                                 dtype="<f4").reshape(n, len(props))
        m = cls()
        m.means = data[:, 0:3].astype(np.float64)
        quats = data[:, 3:7].astype(np.float64)
        m.quats = quats / np.linalg.norm(quats, axis=1, keepdims=True)
        m.log_scales = data[:, 7:10].astype(np.float64)
        m.opacity_logits = data[:, 10].astype(np.float64)
        m.colors = data[:, 11:14].astype(np.float64)
        return m
