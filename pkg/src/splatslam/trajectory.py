"""Timestamped pose sequences and the TUM text format.

Trajectory poses are camera-to-world (the TUM convention): the translation
column is the camera center in world coordinates.
"""

import numpy as np

from .se3 import make_se3, quat_to_rotmat, rotmat_to_quat


class Trajectory:
    def __init__(self, timestamps=(), poses=()):
        self.timestamps = [float(t) for t in timestamps]
        self.poses = [np.asarray(p, dtype=np.float64) for p in poses]
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamp/pose count mismatch")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.timestamps)

    def append(self, timestamp, pose):
        if self.timestamps and timestamp <= self.timestamps[-1]:
            raise ValueError("timestamps must be strictly increasing")
        self.timestamps.append(float(timestamp))
        self.poses.append(np.asarray(pose, dtype=np.float64))

    def positions(self):
        """(N, 3) camera centers."""
        if not self.poses:
            return np.zeros((0, 3))
        return np.stack([p[:3, 3] for p in self.poses])


def write_tum(traj, path):
    """One 'timestamp tx ty tz qx qy qz qw' line per pose, 6 decimals.

    An empty trajectory produces an empty file (no header).
    """
    with open(path, "w") as f:
        for t, pose in zip(traj.timestamps, traj.poses):
            q = rotmat_to_quat(pose[:3, :3])  # (w, x, y, z)
            tx, ty, tz = pose[:3, 3]
            f.write(f"{t:.6f} {tx:.6f} {ty:.6f} {tz:.6f} "
                    f"{q[1]:.6f} {q[2]:.6f} {q[3]:.6f} {q[0]:.6f}\n")


def read_tum(path):
    """Parse a TUM trajectory file; '#' comment lines are skipped."""
    timestamps = []
    poses = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(v) for v in line.split()]
            if len(vals) != 8:
                raise ValueError(f"bad trajectory line: {line!r}")
            t, tx, ty, tz, qx, qy, qz, qw = vals
            R = quat_to_rotmat([qw, qx, qy, qz])
            timestamps.append(t)
            poses.append(make_se3(R, [tx, ty, tz]))
    return Trajectory(timestamps, poses)
