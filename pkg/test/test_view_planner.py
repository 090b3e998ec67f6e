"""Tests for src/core/view_planner.py and src/core/scene.py."""

import numpy as np
import numpy.testing as npt
import pytest

from src.config.constants import Policy
from src.core.camera import CameraModel, Viewpoint, lookat
from src.core.errors import DomainError
from src.core.scene import ShapeScene, Wall
from src.core.shape_fitter import FitResult, multi_sq_recover
from src.core.superquadric import SuperquadricParams, PointCloud, sample_surface
from src.core.view_planner import (
    binary_entropy, point_entropy, sample_views, view_entropy, next_best_view, rank_views,
    icp_register, explore_shape, mutual_overlap
)
from src.utils.geometry import RigidGeometry


def _fit(sq, sigma2=1e-5):
    return FitResult(sq=sq, sigma2=sigma2, gamma=np.ones(1), nll=0.0, iterations=1, converged=True)


@pytest.fixture
def ball():
    return SuperquadricParams(1.0, 1.0, 0.05, 0.05, 0.05, x0=0.5, y0=0.0, z0=0.05)


class TestEntropy:

    def test_binary_entropy_extremes(self):
        npt.assert_allclose(binary_entropy([0.0, 0.5, 1.0]), [0.0, np.log(2), 0.0])

    def test_zero_distance(self, ball):
        pts = np.array([[0.5, 0.0, 0.1]])
        H = point_entropy([_fit(ball)], PointCloud(pts), pts)
        npt.assert_allclose(H, 0.0, atol=1e-12)

    def test_self_coverage(self, ball):
        samples = sample_surface(ball, 2000, rng_seed=0)
        H = point_entropy([_fit(ball)], samples, samples.points)
        assert H.mean() < 0.01

    def test_far_points_uncertain(self, ball):
        samples = sample_surface(ball, 200, rng_seed=1).points
        cloud = PointCloud(samples + np.array([5.0, 0.0, 0.0]))
        H = point_entropy([_fit(ball)], cloud, samples)
        assert np.all(H > 0.69)

    def test_empty_cloud(self, ball):
        samples = sample_surface(ball, 50, rng_seed=2).points
        H = point_entropy([_fit(ball)], PointCloud(np.zeros((0, 3))), samples)
        assert np.all(H > 0.69) and np.all(H <= np.log(2))


class TestViews:

    def test_single_view_forbidden(self):
        with pytest.raises(DomainError):
            sample_views([0.0, 0.0], 1.0, 1)

    def test_radius_and_hemisphere(self):
        center = np.array([0.4, 0.1, 0.0])
        views = sample_views(center[:2], 0.5, 100)
        d = np.array([np.linalg.norm(v.position - center) for v in views])
        npt.assert_allclose(d, 0.5, atol=1e-9)
        assert all(v.position[2] >= 0 for v in views)

    def test_uniform_in_cos_zenith(self):
        views = sample_views([0.0, 0.0], 1.0, 100)
        cos_zenith = np.array([v.position[2] for v in views])
        counts, _ = np.histogram(cos_zenith, bins=5, range=(0, 1))
        assert np.all(np.abs(counts - 20) <= 2)

    def test_views_look_at_center(self):
        for v in sample_views([0.2, 0.3], 0.6, 16):
            d = np.array([0.2, 0.3, 0.0]) - v.position
            npt.assert_allclose(v.viewing_direction, d / np.linalg.norm(d), atol=1e-9)


class TestViewEntropy:

    def _top_view(self):
        pos = np.array([0.0, 0.0, 1.0])
        return Viewpoint(pos, lookat(pos, [0.0, 0.0]))

    def test_zero_entropies(self):
        pts = np.random.default_rng(0).uniform(-0.05, 0.05, size=(100, 3))
        assert view_entropy(self._top_view(), CameraModel(), pts, np.zeros(100)) == 0.0

    def test_single_sample(self):
        assert view_entropy(self._top_view(), CameraModel(), np.zeros((1, 3)), [0.5]) == pytest.approx(0.5)

    def test_behind_camera(self):
        pts = np.array([[0.0, 0.0, 2.0]])
        assert view_entropy(self._top_view(), CameraModel(), pts, [0.7]) == 0.0

    def test_bounded_by_total(self, ball):
        samples = sample_surface(ball, 3000, rng_seed=3).points
        H = np.random.default_rng(4).uniform(0, np.log(2), len(samples))
        for v in sample_views([0.5, 0.0], 0.5, 8):
            score = view_entropy(v, CameraModel(), samples, H)
            assert 0.0 <= score <= H.sum() + 1e-9

    def test_unseen_half_preferred(self, ball):
        samples = sample_surface(ball, 4000, rng_seed=5).points
        seen = PointCloud(samples[samples[:, 0] < 0.5])
        fits = [_fit(ball)]
        H = point_entropy(fits, seen, samples)
        cam = CameraModel()
        facing_unseen = np.array([1.0, 0.0, 0.3])
        facing_seen = np.array([0.0, 0.0, 0.3])
        v_unseen = Viewpoint(facing_unseen, lookat(facing_unseen, [0.5, 0.0]))
        v_seen = Viewpoint(facing_seen, lookat(facing_seen, [0.5, 0.0]))
        assert view_entropy(v_unseen, cam, samples, H) > view_entropy(v_seen, cam, samples, H)
        idx, _, _ = next_best_view(fits, seen, [v_seen, v_unseen], cam, sample_points=samples)
        assert idx == 1


class TestNextBestView:

    def test_ties_pick_first(self, ball):
        samples = sample_surface(ball, 500, rng_seed=6).points
        cloud = PointCloud(samples)
        views = sample_views([0.5, 0.0], 0.5, 6)
        idx, _, score = next_best_view([_fit(ball)], cloud, [views[2], views[2]], CameraModel(),
                                       sample_points=samples)
        assert idx == 0

    def test_scaling_invariance(self, ball):
        samples = sample_surface(ball, 1500, rng_seed=7).points
        H = np.random.default_rng(8).uniform(0, 0.6, len(samples))
        views = sample_views([0.5, 0.0], 0.5, 10)
        a = rank_views(views, CameraModel(), samples, H)
        b = rank_views(views, CameraModel(), samples, 3.0 * H)
        assert np.argmax(a) == np.argmax(b)

    def test_no_views(self, ball):
        with pytest.raises(DomainError):
            next_best_view([_fit(ball)], None, [], CameraModel())


class TestIcp:

    @pytest.fixture
    def block_cloud(self):
        sq = SuperquadricParams(0.3, 0.3, 0.06, 0.035, 0.025, x0=0.5, y0=0.1, z0=0.025)
        return sample_surface(sq, 1500, rng_seed=9)

    def test_identity(self, block_cloud):
        res = icp_register(block_cloud, block_cloud)
        npt.assert_allclose(res.R, np.eye(3), atol=1e-9)
        npt.assert_allclose(res.t, 0.0, atol=1e-9)
        assert res.rms == pytest.approx(0.0, abs=1e-9)
        assert not res.failed

    def test_known_transform(self, block_cloud):
        angle = np.deg2rad(5.0)
        R_true = RigidGeometry.rotz(angle)
        c = block_cloud.points.mean(axis=0)
        t_true = c - R_true @ c + np.array([0.01, 0.0, 0.0])
        dst = block_cloud.transformed(R_true, t_true)
        res = icp_register(block_cloud, dst, max_iter=100)
        assert not res.failed
        R_err = res.R @ R_true.T
        err_deg = np.rad2deg(np.arccos(np.clip((np.trace(R_err) - 1) / 2, -1, 1)))
        assert err_deg < 0.1
        moved = block_cloud.points @ res.R.T + res.t
        assert np.abs(moved - dst.points).max() < 5e-4

    def test_rms_non_increasing(self, block_cloud):
        R = RigidGeometry.rotz(0.05)
        c = block_cloud.points.mean(axis=0)
        dst = block_cloud.transformed(R, c - R @ c + np.array([0.005, -0.003, 0.0]))
        res = icp_register(block_cloud, dst)
        assert len(res.rms_history) > 1
        assert np.all(np.diff(res.rms_history) <= 1e-12)

    def test_disjoint(self, block_cloud):
        far = block_cloud.transformed(np.eye(3), np.array([1.0, 0.0, 0.0]))
        res = icp_register(block_cloud, far)
        assert res.failed
        npt.assert_array_equal(res.R, np.eye(3))
        assert mutual_overlap(block_cloud.points, far.points) == 0.0


class TestScene:

    def test_wall_blocks_segment(self):
        wall = Wall(center=(0.0, 0.0), angle=0.0, width=0.4, height=0.2)
        mask = wall.blocks([-1.0, 0.0, 0.1], np.array([[1.0, 0.0, 0.1], [1.0, 0.0, 0.5], [-0.5, 0, 0.1]]))
        npt.assert_array_equal(mask, [True, False, False])

    def test_render_ids_and_outliers(self, ball):
        scene = ShapeScene([ball], seed=0, truth_samples=5000)
        pos = np.array([0.9, 0.0, 0.4])
        cloud = scene.render(Viewpoint(pos, lookat(pos, scene.center_xy)), CameraModel(), 3,
                             np.random.default_rng(0))
        assert not cloud.is_empty
        assert np.all(cloud.view_ids == 3)
        assert cloud.points[:, 0].mean() > 0.5

    def test_wall_hides_side(self, ball):
        wall = Wall(center=(0.62, 0.0), angle=0.0, width=0.4, height=0.3)
        scene = ShapeScene([ball], wall=wall, seed=0, truth_samples=5000)
        pos = np.array([1.0, 0.0, 0.1])
        vp = Viewpoint(pos, lookat(pos, scene.center_xy))
        assert len(scene.visible_points(vp, CameraModel())) == 0


class TestExploration:

    def test_records_per_view(self, ball):
        scene = ShapeScene([ball], seed=1, outlier_ratio=0.0, noise_std=0.001,
                           max_points_per_view=800, truth_samples=6000)
        res = explore_shape(scene, CameraModel(), Policy.ACTIVE, max_views=3, threshold=0.2,
                            n_views=16, rng_seed=0)
        assert 1 <= res.views_used <= 3
        assert len(res.records) == res.views_used
        assert len(res.fits) >= 1
        assert res.records[-1].chamfer < 0.01

    def test_deterministic(self, ball):
        scene = ShapeScene([ball], seed=2, max_points_per_view=500, truth_samples=4000)
        a = explore_shape(scene, CameraModel(), Policy.RANDOM, max_views=2, n_views=8, rng_seed=4)
        b = explore_shape(scene, CameraModel(), Policy.RANDOM, max_views=2, n_views=8, rng_seed=4)
        assert [r.index for r in a.records] == [r.index for r in b.records]
        npt.assert_array_equal(a.cloud.points, b.cloud.points)

    def test_mean_entropy_non_increasing(self, ball):
        scene = ShapeScene([ball], seed=3, max_points_per_view=400, truth_samples=3000)
        res = explore_shape(scene, CameraModel(), Policy.ACTIVE, max_views=3, threshold=0.0,
                            n_views=12, rng_seed=1)
        assert res.views_used == 3
        entropy = [r.mean_entropy for r in res.records]
        for before, after in zip(entropy, entropy[1:]):
            assert after <= before + 1e-3

    def test_rejected_refit_keeps_shapes(self, ball, monkeypatch):
        calls = []

        def worse_after_first(cloud, **kwargs):
            calls.append(len(cloud))
            fits = multi_sq_recover(cloud, **kwargs)
            if len(calls) == 1:
                return fits
            far = SuperquadricParams(1.0, 1.0, 0.05, 0.05, 0.05, x0=2.0, y0=2.0, z0=0.05)
            return [_fit(far)]

        monkeypatch.setattr('src.core.view_planner.multi_sq_recover', worse_after_first)
        scene = ShapeScene([ball], seed=3, max_points_per_view=400, truth_samples=3000)
        res = explore_shape(scene, CameraModel(), Policy.UNIFORM, max_views=3, threshold=0.0,
                            n_views=12, rng_seed=1)
        assert len(calls) == 3
        assert res.fits[0].sq.x0 == pytest.approx(0.5, abs=0.05)
        assert res.records[2].mean_entropy <= res.records[0].mean_entropy + 1e-3
