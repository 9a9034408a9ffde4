import numpy as np
import pytest

from splatslam.se3 import make_se3, quat_to_rotmat, random_quat
from splatslam.trajectory import Trajectory, read_tum, write_tum


def test_round_trip_within_quantization(tmp_path):
    rng = np.random.default_rng(0)
    poses = [make_se3(quat_to_rotmat(random_quat(rng)), rng.normal(size=3))
             for _ in range(12)]
    traj = Trajectory([1000.0 + 0.25 * i for i in range(12)], poses)
    path = tmp_path / "traj.txt"
    write_tum(traj, path)
    back = read_tum(path)
    assert len(back) == 12
    assert np.abs(np.array(back.timestamps) - np.array(traj.timestamps)).max() < 1e-6
    for a, b in zip(traj.poses, back.poses):
        assert np.abs(a[:3, 3] - b[:3, 3]).max() < 1e-6
        assert np.abs(a[:3, :3] - b[:3, :3]).max() < 1e-5


def test_empty_trajectory_writes_empty_file(tmp_path):
    path = tmp_path / "empty.txt"
    write_tum(Trajectory(), path)
    assert path.read_text() == ""
    assert len(read_tum(path)) == 0


def test_comments_skipped(tmp_path):
    path = tmp_path / "traj.txt"
    path.write_text("# header\n1.0 0 0 0 0 0 0 1\n")
    traj = read_tum(path)
    assert len(traj) == 1
    assert np.allclose(traj.poses[0], np.eye(4))


def test_strictly_increasing_timestamps_enforced():
    with pytest.raises(ValueError):
        Trajectory([1.0, 1.0], [np.eye(4), np.eye(4)])
    t = Trajectory([1.0], [np.eye(4)])
    with pytest.raises(ValueError):
        t.append(0.5, np.eye(4))
