"""Tests for src/core/observation.py."""

import numpy as np
import numpy.testing as npt
import pytest

from src.core.camera import rasterize
from src.core.errors import DomainError
from src.core.observation import (
    VISUAL_SIZE, ObservationVector, SegmentedCloud, InteractionState, depth_to_intensity,
    render_visual, occlusion_fraction, noise_levels, synthesize_noise, observation_camera,
    observation_viewpoint
)
from src.core.superquadric import SuperquadricParams


@pytest.fixture
def slab():
    return SuperquadricParams(0.2, 0.2, 0.05, 0.05, 0.01, x0=0.4, y0=0.0, z0=0.01)


@pytest.fixture
def puck():
    return SuperquadricParams(0.2, 1.0, 0.05, 0.05, 0.02, x0=0.4, y0=0.0, z0=0.02)


def _state(pose):
    return np.concatenate([pose, np.zeros(3)])[None, :]


class TestObservationVector:

    def test_layout(self):
        obs = ObservationVector(np.zeros(VISUAL_SIZE), [1.0, 2.0])
        z = obs.flatten()
        assert z.shape == (4098,)
        npt.assert_array_equal(z[-2:], [1.0, 2.0])
        assert obs.image.shape == (64, 64)

    def test_wrong_size(self):
        with pytest.raises(DomainError):
            ObservationVector.from_flat(np.zeros(4097))
        with pytest.raises(DomainError):
            ObservationVector(np.zeros(10), np.zeros(2))


class TestRender:

    def test_intensity_mapping(self):
        npt.assert_allclose(depth_to_intensity([np.inf, 0.5, 1.0, 0.4, 2.0]), [0.0, 1.0, 0.0, 1.0, 0.0])

    def test_identity_pose(self, slab):
        cloud = SegmentedCloud.from_shapes([slab], rng_seed=0)
        img = render_visual(_state(slab.pose), cloud)
        raster = rasterize(cloud.clouds[0], observation_viewpoint(cloud.center_xy), observation_camera(),
                           spacing=cloud.spacing)
        npt.assert_allclose(img, depth_to_intensity(raster.depth).reshape(-1), atol=1e-12)
        assert img.max() > 0.0

    def test_rotation_symmetric_link(self, puck):
        cloud = SegmentedCloud.from_shapes([puck], rng_seed=1)
        a = render_visual(_state(puck.pose), cloud)
        b = render_visual(_state(puck.pose + np.array([0.0, 0.0, 0.7])), cloud)
        assert np.abs(a - b).mean() < 0.02

    def test_one_pixel_shift(self, slab):
        cloud = SegmentedCloud.from_shapes([slab], n_per_link=1500, rng_seed=2)
        pixel = 0.89 / observation_camera().fx
        base = render_visual(_state(slab.pose), cloud).reshape(64, 64)
        moved = render_visual(_state(slab.pose + np.array([pixel, 0.0, 0.0])), cloud).reshape(64, 64)
        rolled = np.roll(base, 1, axis=1)
        assert np.abs(moved - rolled).mean() < 0.5 * np.abs(moved - base).mean()

    def test_points_follow_links(self, slab):
        cloud = SegmentedCloud.from_shapes([slab], n_per_link=100, rng_seed=3)
        moved = cloud.points_at([[0.5, 0.1, 0.0]])
        npt.assert_allclose(moved[:, :2], cloud.clouds[0][:, :2] + [0.1, 0.1], atol=1e-12)


class TestOcclusion:

    def test_far_and_covering(self, slab):
        cloud = SegmentedCloud.from_shapes([slab], n_per_link=200, rng_seed=4)
        assert occlusion_fraction([slab.pose], [10.0, 10.0], cloud) == 0.0
        assert occlusion_fraction([slab.pose], [0.4, 0.0], cloud, radius=1.0) == 1.0


class TestNoise:

    def _info(self, occlusion=0.0, sticking=True, force=(3.0, 4.0)):
        return InteractionState(np.zeros((1, 6)), np.zeros(2), np.array(force), sticking, occlusion)

    def test_base_levels(self):
        sv, st = noise_levels(self._info())
        assert sv == pytest.approx(0.02)
        assert st == pytest.approx(0.01)

    def test_occluded_and_slipping(self):
        sv, st = noise_levels(self._info(occlusion=1.0, sticking=False))
        assert sv == pytest.approx(0.12)
        assert st == pytest.approx(0.01 + 0.05 * 5.0)

    def test_empirical_visual_std(self):
        info = self._info(occlusion=0.5)
        rng = np.random.default_rng(5)
        draws = np.concatenate([synthesize_noise(np.zeros(4098), info, rng)[0][:VISUAL_SIZE]
                                for _ in range(3)])
        assert draws.std() == pytest.approx(0.07, rel=0.03)

    def test_empirical_tactile_std(self):
        info = self._info(sticking=False, force=(0.6, 0.8))
        rng = np.random.default_rng(6)
        draws = np.concatenate([synthesize_noise(np.zeros(4098), info, rng)[0][VISUAL_SIZE:]
                                for _ in range(5000)])
        assert draws.std() == pytest.approx(0.06, rel=0.03)

    def test_seeded(self):
        info = self._info()
        a, _, _ = synthesize_noise(np.zeros(4098), info, 7)
        b, _, _ = synthesize_noise(np.zeros(4098), info, 7)
        npt.assert_array_equal(a, b)
