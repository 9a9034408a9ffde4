import numpy as np

from conftest import make_camera, random_map
from splatslam.scene import GaussianMap
from splatslam.se3 import make_se3, se3_exp
from splatslam.splat import project, render, render_reference


def single_gaussian_map(mean, scale=0.2, opacity=0.8, color=(1, 0, 0),
                        quat=(1, 0, 0, 0)):
    m = GaussianMap()
    m.add([mean], [quat], [[scale] * 3 if np.isscalar(scale) else scale],
          [opacity], [color])
    return m


class TestProject:
    def test_on_axis_gaussian_projects_to_principal_point(self):
        cam = make_camera(64, 64, fx=80.0, fy=70.0)
        z = 2.5
        sigma = 0.3
        m = single_gaussian_map([0, 0, z], scale=sigma)
        proj = project(m, cam, dtype=np.float64)
        assert len(proj) == 1
        assert np.allclose(proj.mean2d[0], [cam.cx, cam.cy], atol=1e-12)
        expected = np.diag([sigma ** 2 * cam.fx ** 2 / z ** 2,
                            sigma ** 2 * cam.fy ** 2 / z ** 2]) + 0.3 * np.eye(2)
        assert np.abs(proj.cov2d[0] - expected).max() < 1e-10

    def test_cov2d_matches_numeric_jacobian(self):
        # Central differences of the pinhole map give J; cov2d must equal
        # (J W) cov3d (J W)^T + 0.3 I for an off-axis anisotropic Gaussian.
        rng = np.random.default_rng(5)
        cam = make_camera(64, 48, fx=75.0, fy=68.0)
        mean = np.array([0.4, -0.3, 2.2])
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        s = np.array([0.3, 0.15, 0.08])
        m = single_gaussian_map(mean, scale=s, quat=q)
        proj = project(m, cam, dtype=np.float64)

        def pinhole(p):
            return np.array([cam.fx * p[0] / p[2] + cam.cx,
                             cam.fy * p[1] / p[2] + cam.cy])

        h = 1e-5
        J = np.zeros((2, 3))
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            J[:, k] = (pinhole(mean + dp) - pinhole(mean - dp)) / (2 * h)
        from splatslam.scene import build_covariance
        cov3d = build_covariance(q, s)
        expected = J @ cov3d @ J.T + 0.3 * np.eye(2)
        assert np.abs(proj.cov2d[0] - expected).max() < 1e-5

    def test_behind_camera_culled(self):
        cam = make_camera(32, 32)
        m = single_gaussian_map([0, 0, -1.0])
        assert len(project(m, cam)) == 0

    def test_relative_pose_invariance(self):
        cam = make_camera(48, 48)
        offset = np.array([0.7, -1.2, 0.4])
        m1 = single_gaussian_map([0.1, 0.2, 3.0])
        m2 = single_gaussian_map([0.1, 0.2, 3.0] + offset)
        moved = make_se3(np.eye(3), -offset)  # camera translated by +offset
        cam2 = cam.with_pose(cam.pose @ moved)
        p1 = project(m1, cam, dtype=np.float64)
        p2 = project(m2, cam2, dtype=np.float64)
        assert np.abs(p1.mean2d - p2.mean2d).max() < 1e-9
        assert np.abs(p1.cov2d - p2.cov2d).max() < 1e-9

    def test_off_screen_culled_with_margin(self):
        cam = make_camera(32, 32, fx=40.0)
        m = single_gaussian_map([50.0, 0.0, 1.0], scale=0.01)
        assert len(project(m, cam)) == 0


class TestRender:
    def test_empty_map(self):
        cam = make_camera(32, 24)
        bg = np.array([0.2, 0.4, 0.6])
        out = render(GaussianMap(), cam, bg)
        assert np.allclose(out.color, bg[None, None, :])
        assert np.all(out.alpha == 0)
        assert np.all(out.dominant_id == -1)

    def test_opaque_giant_covers_center(self):
        cam = make_camera(32, 32)
        color = np.array([0.1, 0.9, 0.3])
        m = single_gaussian_map([0, 0, 2.0], scale=5.0, opacity=1.0, color=color)
        out = render(m, cam, dtype=np.float64)
        center = out.color[16, 16]
        assert np.abs(center - color).max() < 1e-3
        assert out.dominant_id[16, 16] == 0

    def test_two_term_blend_weights(self):
        # Two Gaussians centered exactly on one pixel with point alphas
        # 0.5 (front) and 0.8 (back): weights 0.5 and 0.4, rest background.
        cam = make_camera(33, 33, fx=30.0)
        bg = np.array([1.0, 1.0, 1.0])
        c1 = np.array([1.0, 0.0, 0.0])
        c2 = np.array([0.0, 1.0, 0.0])
        m = GaussianMap()
        pt = cam.backproject([[16.0, 16.0]], [1.0 / 2.0])[0]
        pt2 = cam.backproject([[16.0, 16.0]], [1.0 / 3.0])[0]
        m.add([pt, pt2], [[1, 0, 0, 0]] * 2, [[2.0] * 3] * 2, [0.5, 0.8],
              [c1, c2])
        out = render(m, cam, bg, dtype=np.float64)
        expected = 0.5 * c1 + 0.4 * c2 + 0.1 * bg
        assert np.abs(out.color[16, 16] - expected).max() < 1e-9
        assert out.dominant_id[16, 16] == 0
        assert abs(out.alpha[16, 16] - 0.9) < 1e-9

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(30)
        cam = make_camera(64, 64)
        for _ in range(15):
            m = random_map(int(rng.integers(1, 51)), rng)
            bg = rng.uniform(0, 1, size=3)
            out = render(m, cam, bg, dtype=np.float64)
            ref = render_reference(m, cam, bg, dtype=np.float64)
            assert np.abs(out.color - ref.color).max() < 1e-6
            assert np.abs(out.alpha - ref.alpha).max() < 1e-6
            assert np.array_equal(out.dominant_id, ref.dominant_id)
            assert np.array_equal(out.dominance_count, ref.dominance_count)

    def test_blend_weights_sum_below_one(self):
        rng = np.random.default_rng(31)
        cam = make_camera(48, 48)
        m = random_map(30, rng, opacity_range=(0.5, 1.0))
        out = render(m, cam, dtype=np.float64)
        # sum of weights = alpha map; never exceeds 1
        assert np.all(out.alpha <= 1.0 + 1e-12)

    def test_dominance_count_totals_dominated_pixels(self):
        rng = np.random.default_rng(32)
        cam = make_camera(40, 40)
        m = random_map(20, rng)
        out = render(m, cam)
        assert out.dominance_count.sum() == np.count_nonzero(out.dominant_id >= 0)

    def test_bit_identical_across_runs(self):
        rng = np.random.default_rng(33)
        cam = make_camera(40, 40)
        m = random_map(25, rng)
        a = render(m, cam, (0.1, 0.2, 0.3))
        b = render(m, cam, (0.1, 0.2, 0.3))
        assert np.array_equal(a.color, b.color)
        assert np.array_equal(a.alpha, b.alpha)
        assert np.array_equal(a.dominant_id, b.dominant_id)

    def test_depth_tie_broken_by_index(self):
        cam = make_camera(33, 33, fx=30.0)
        pt = cam.backproject([[16.0, 16.0]], [0.5])[0]
        m = GaussianMap()
        m.add([pt, pt], [[1, 0, 0, 0]] * 2, [[1.0] * 3] * 2, [0.6, 0.6],
              [[1, 0, 0], [0, 1, 0]])
        out = render(m, cam, dtype=np.float64)
        assert out.dominant_id[16, 16] == 0
