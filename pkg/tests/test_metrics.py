import math

import numpy as np
import pytest

from splatslam.metrics import ate_rmse, align_sim3, psnr, ssim, umeyama
from splatslam.se3 import make_se3, quat_to_rotmat, random_quat
from splatslam.trajectory import Trajectory


def make_traj(positions, t0=0.0):
    poses = [make_se3(np.eye(3), p) for p in positions]
    return Trajectory([t0 + i * 0.1 for i in range(len(poses))], poses)


class TestAlign:
    def test_identity_when_equal(self):
        rng = np.random.default_rng(0)
        traj = make_traj(rng.normal(size=(10, 3)))
        T = align_sim3(traj, traj)
        assert abs(T.scale - 1.0) < 1e-12
        assert np.abs(T.rotation - np.eye(3)).max() < 1e-9
        assert np.abs(T.translation).max() < 1e-9

    def test_recovers_rotation_and_scale(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(12, 3))
        Rz = quat_to_rotmat([np.sqrt(0.5), 0, 0, np.sqrt(0.5)])  # 90 deg z
        gt = make_traj(2.0 * pts @ Rz.T)
        est = make_traj(pts)
        assert ate_rmse(est, gt, align=True) < 1e-9

    def test_random_similarity_residual(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            pts = rng.normal(size=(8, 3))
            R = quat_to_rotmat(random_quat(rng))
            s = rng.uniform(0.2, 5.0)
            t = rng.normal(size=3)
            dst = s * pts @ R.T + t
            T = umeyama(pts, dst)
            resid = np.abs(T.apply(pts) - dst).max()
            assert resid < 1e-9

    def test_too_few_pairs(self):
        est = make_traj([[0, 0, 0], [1, 0, 0]])
        with pytest.raises(ValueError):
            align_sim3(est, est)

    def test_collinear_flagged(self):
        pts = np.array([[i, 0.0, 0.0] for i in range(5)])
        T = umeyama(pts, pts * 2.0)
        assert T.degenerate
        assert np.isfinite(T.rotation).all()


class TestAte:
    def test_zero_for_identical(self):
        traj = make_traj([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
        assert ate_rmse(traj, traj, align=False) == 0.0

    def test_hand_computed_case(self):
        # gt x-positions 0,1,2; est offset by (0,0,0),(0,0,0),(0,1,0)
        gt = make_traj([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
        est = make_traj([[0, 0, 0], [1, 0, 0], [2, 1, 0]])
        rmse = ate_rmse(est, gt, align=False)
        assert abs(rmse - math.sqrt(1.0 / 3.0) * 100.0) < 1e-9

    def test_alignment_invariance_to_sim3(self):
        rng = np.random.default_rng(3)
        gt = make_traj(rng.normal(size=(15, 3)))
        R = quat_to_rotmat(random_quat(rng))
        s = 3.3
        t = np.array([5.0, -2.0, 1.0])
        est = make_traj(s * gt.positions() @ R.T + t)
        assert ate_rmse(est, gt, align=True) < 1e-9

    def test_no_association_errors(self):
        a = make_traj([[0, 0, 0]] * 3)
        poses = [make_se3(np.eye(3), [0, 0, 0])] * 3
        b = Trajectory([100.0, 100.1, 100.2], poses)
        with pytest.raises(ValueError):
            ate_rmse(a, b)


class TestImageMetrics:
    def test_psnr_identical_is_inf(self):
        a = np.random.default_rng(4).uniform(0, 1, (16, 16, 3))
        assert psnr(a, a) == math.inf

    def test_psnr_closed_form(self):
        a = np.zeros((10, 10))
        b = np.full((10, 10), 0.1)  # MSE = 0.01
        assert abs(psnr(a, b) - 20.0) < 1e-12

    def test_ssim_self_is_one(self):
        a = np.random.default_rng(5).uniform(0, 1, (24, 24, 3))
        assert abs(ssim(a, a) - 1.0) < 1e-12

    def test_ssim_negative_image_far_from_one(self):
        a = np.zeros((24, 24))
        assert ssim(a, 1.0 - a) < 0.01

    def test_psnr_symmetric(self):
        rng = np.random.default_rng(6)
        a = rng.uniform(0, 1, (12, 12))
        b = rng.uniform(0, 1, (12, 12))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((5, 4)))
        with pytest.raises(ValueError):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))
