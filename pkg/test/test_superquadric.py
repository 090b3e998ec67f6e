"""Tests for src/core/superquadric.py."""

import numpy as np
import numpy.testing as npt
import pytest
from scipy.special import gamma

from src.core.errors import DomainError, TaperError
from src.core.superquadric import (
    SuperquadricParams, PointCloud, implicit_value, apply_taper, invert_taper,
    sample_surface, project_point, project_points, surface_area,
    chamfer_distance, footprint_radius, footprint_normal, footprint_area
)


class TestParams:

    def test_exponent_bounds(self):
        with pytest.raises(DomainError):
            SuperquadricParams(0.05, 1.0, 1.0, 1.0, 1.0)

    def test_scale_positive(self):
        with pytest.raises(DomainError):
            SuperquadricParams(1.0, 1.0, 0.0, 1.0, 1.0)

    def test_taper_bounds(self):
        with pytest.raises(DomainError):
            SuperquadricParams(1.0, 1.0, 1.0, 1.0, 1.0, kappa2=-0.1)

    def test_from_vector_clamps(self):
        v = np.array([0.01, 3.0, -1.0, 1.0, 1.0, 2.0, -1.0, 0, 0, 0, 0])
        sq = SuperquadricParams.from_vector(v, clamp=True)
        assert sq.eps1 == pytest.approx(0.1)
        assert sq.eps2 == pytest.approx(2.0)
        assert sq.a_x > 0
        assert sq.kappa1 == 1.0 and sq.kappa2 == 0.0

    def test_frames_roundtrip(self):
        sq = SuperquadricParams(1.0, 1.0, 1.0, 1.0, 1.0, x0=0.3, y0=-0.2, theta0=0.7, z0=0.1)
        p = np.array([[0.1, 0.2, 0.3]])
        npt.assert_allclose(sq.local_to_world(sq.world_to_local(p)), p, atol=1e-12)


class TestImplicit:

    def test_sphere_surface(self, unit_sphere):
        assert implicit_value(unit_sphere, [1.0, 0.0, 0.0]) == pytest.approx(1.0)

    def test_sphere_inside(self, unit_sphere):
        assert implicit_value(unit_sphere, [0.5, 0.5, 0.5]) == pytest.approx(0.75)

    def test_ellipsoid_axis(self, spheroid):
        assert implicit_value(spheroid, [2.0, 0.0, 0.0]) == pytest.approx(1.0)

    def test_outside_greater_than_one(self, unit_sphere):
        assert implicit_value(unit_sphere, [1.5, 0.0, 0.0]) > 1.0

    def test_non_finite(self, unit_sphere):
        with pytest.raises(DomainError):
            implicit_value(unit_sphere, [np.nan, 0.0, 0.0])

    def test_batch_shape(self, unit_sphere):
        F = implicit_value(unit_sphere, np.zeros((7, 3)))
        assert F.shape == (7,)


class TestTaper:

    def test_zero_taper_identity(self, unit_sphere):
        p = np.array([0.3, -0.2, 0.1])
        npt.assert_allclose(apply_taper(unit_sphere, p), p)

    def test_linear_taper_example(self):
        sq = SuperquadricParams(1.0, 1.0, 1.0, 2.0, 1.0, kappa1=1.0)
        npt.assert_allclose(apply_taper(sq, [1.0, 2.0, 0.0]), [2.0, 2.0, 0.0])

    def test_roundtrip(self, rng):
        sq = SuperquadricParams(0.8, 1.2, 1.0, 1.0, 1.0, kappa1=0.4, kappa2=0.3)
        p = rng.uniform(-0.9, 0.9, size=(200, 3))
        npt.assert_allclose(invert_taper(sq, apply_taper(sq, p)), p, atol=1e-9)

    def test_singular_taper(self):
        sq = SuperquadricParams(1.0, 1.0, 1.0, 1.0, 1.0, kappa1=1.0)
        with pytest.raises(TaperError):
            apply_taper(sq, [0.5, -1.0, 0.0])


class TestSampling:

    def test_sphere_mean(self, unit_sphere):
        cloud = sample_surface(unit_sphere, 10000, rng_seed=1)
        assert len(cloud) == 10000
        npt.assert_allclose(cloud.points.mean(axis=0), 0.0, atol=0.02)

    def test_sphere_octants(self, unit_sphere):
        M = 80000
        pts = sample_surface(unit_sphere, M, rng_seed=2).points
        octant = (pts[:, 0] > 0) * 4 + (pts[:, 1] > 0) * 2 + (pts[:, 2] > 0)
        counts = np.bincount(octant, minlength=8)
        assert np.all(np.abs(counts - M / 8) < 0.05 * M / 8)

    def test_points_on_surface(self):
        sq = SuperquadricParams(0.5, 1.5, 0.1, 0.08, 0.05, kappa1=0.3, kappa2=0.2)
        cloud = sample_surface(sq, 500, rng_seed=3)
        F = implicit_value(sq, cloud.points)
        assert np.max(np.abs(F - 1.0)) < 1e-6

    def test_single_point(self, spheroid):
        cloud = sample_surface(spheroid, 1, rng_seed=4)
        assert abs(implicit_value(spheroid, cloud.points[0]) - 1.0) < 1e-6

    def test_deterministic(self, unit_sphere):
        a = sample_surface(unit_sphere, 50, rng_seed=5).points
        b = sample_surface(unit_sphere, 50, rng_seed=5).points
        npt.assert_array_equal(a, b)

    def test_zero_count(self, unit_sphere):
        with pytest.raises(DomainError):
            sample_surface(unit_sphere, 0)


class TestProjection:

    def test_sphere_radial(self, unit_sphere):
        npt.assert_allclose(project_point(unit_sphere, [2.0, 0.0, 0.0]), [1.0, 0.0, 0.0], atol=1e-5)

    def test_sphere_center(self, unit_sphere):
        mu = project_point(unit_sphere, [0.0, 0.0, 0.0])
        assert np.linalg.norm(mu) == pytest.approx(1.0, abs=1e-9)
        npt.assert_array_equal(mu, project_point(unit_sphere, [0.0, 0.0, 0.0]))

    def test_ellipsoid_axis(self, spheroid):
        npt.assert_allclose(project_point(spheroid, [3.0, 0.0, 0.0]), [2.0, 0.0, 0.0], atol=1e-5)

    def test_closest_against_dense_samples(self, spheroid, rng):
        dense = sample_surface(spheroid, 1000, rng_seed=6).points
        dirs = rng.normal(size=(20, 3))
        queries = dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * rng.uniform(2.5, 4.0, size=(20, 1))
        mu = project_points(spheroid, queries)
        assert np.max(np.abs(implicit_value(spheroid, mu) - 1.0)) < 1e-4
        d_mu = np.linalg.norm(queries - mu, axis=1)
        d_dense = np.linalg.norm(queries[:, None] - dense[None], axis=2).min(axis=1)
        assert np.all(d_mu <= d_dense + 1e-6)

    def test_posed_superquadric(self):
        sq = SuperquadricParams(1.0, 1.0, 1.0, 1.0, 1.0, x0=1.0, y0=2.0, theta0=0.3, z0=0.5)
        npt.assert_allclose(project_point(sq, [3.0, 2.0, 0.5]), [2.0, 2.0, 0.5], atol=1e-5)


class TestArea:

    def test_unit_sphere(self, unit_sphere):
        assert surface_area(unit_sphere) == pytest.approx(4 * np.pi, rel=0.01)

    def test_prolate_spheroid(self, spheroid):
        assert surface_area(spheroid) == pytest.approx(21.48, rel=0.01)

    def test_similarity(self):
        sq = SuperquadricParams(0.6, 1.4, 0.1, 0.2, 0.3)
        big = SuperquadricParams(0.6, 1.4, 0.2, 0.4, 0.6)
        assert surface_area(big) == pytest.approx(4 * surface_area(sq), rel=0.01)

    def test_monotone_in_scale(self):
        scales = [0.5, 1.0, 1.5]
        base = {}
        for ax in scales:
            for ay in scales:
                for az in scales:
                    base[(ax, ay, az)] = surface_area(SuperquadricParams(0.7, 1.0, ax, ay, az), grid=48)
        for (ax, ay, az), area in base.items():
            if ax < 1.5:
                assert base[(ax + 0.5, ay, az)] > area
            if ay < 1.5:
                assert base[(ax, ay + 0.5, az)] > area
            if az < 1.5:
                assert base[(ax, ay, az + 0.5)] > area


class TestChamfer:

    def test_identical(self, unit_sphere):
        pts = sample_surface(unit_sphere, 100, rng_seed=7)
        assert chamfer_distance(pts, pts) == 0.0

    def test_single_points(self):
        assert chamfer_distance(np.zeros((1, 3)), np.array([[1.0, 0, 0]])) == pytest.approx(1.0)

    def test_dense_samplings(self, unit_sphere):
        a = sample_surface(unit_sphere, 5000, rng_seed=8)
        b = sample_surface(unit_sphere, 5000, rng_seed=9)
        assert chamfer_distance(a, b) < 0.01

    def test_symmetric(self, rng):
        a, b = rng.normal(size=(30, 3)), rng.normal(size=(40, 3))
        assert chamfer_distance(a, b) == pytest.approx(chamfer_distance(b, a))

    def test_empty(self):
        with pytest.raises(DomainError):
            chamfer_distance(PointCloud(np.zeros((0, 3))), np.zeros((1, 3)))


class TestFootprint:

    def test_circle_radius(self):
        sq = SuperquadricParams(1.0, 1.0, 0.05, 0.05, 0.02)
        npt.assert_allclose(footprint_radius(sq, np.linspace(0, 6, 7)), 0.05, atol=1e-9)

    def test_circle_normal(self):
        sq = SuperquadricParams(1.0, 1.0, 0.05, 0.05, 0.02)
        n = footprint_normal(sq, np.array([[0.0, 0.05]]))
        npt.assert_allclose(n, [[0.0, 1.0]], atol=1e-6)

    def test_square_area(self, square_block):
        # superellipse area 4ab G(1+e/2)^2 / G(1+e)
        e = square_block.eps2
        expected = 4 * 0.05 * 0.05 * gamma(1 + e / 2) ** 2 / gamma(1 + e)
        assert footprint_area(square_block) == pytest.approx(expected, rel=0.01)
