"""Point clouds, bounding boxes, box distances."""

import numpy as np
import pytest

import h2krylov as hk
from h2krylov.errors import EmptyInputError


class TestBoundingBox:
    def test_box_around_contains_points(self, rng):
        pts = rng.standard_normal((40, 3))
        box = hk.box_around(pts)
        assert box.contains(pts).all()

    def test_diameter(self):
        box = hk.BoundingBox(np.zeros(3), np.array([3.0, 4.0, 0.0]))
        assert box.diameter == pytest.approx(5.0)

    def test_degenerate_box(self):
        pts = np.tile([1.0, 2.0, 3.0], (5, 1))
        box = hk.box_around(pts)
        assert box.diameter == 0.0
        assert box.contains(pts).all()

    def test_empty_raises(self):
        with pytest.raises(EmptyInputError):
            hk.box_around(np.empty((0, 3)))


class TestBoxDistance:
    def test_separated(self):
        a = hk.BoundingBox(np.zeros(3), np.ones(3))
        b = hk.BoundingBox(np.array([4.0, 0.0, 0.0]), np.array([5.0, 1.0, 1.0]))
        assert hk.box_distance(a, b) == pytest.approx(3.0)
        assert hk.box_distance(b, a) == pytest.approx(3.0)

    def test_touching_is_zero(self):
        a = hk.BoundingBox(np.zeros(3), np.ones(3))
        b = hk.BoundingBox(np.array([1.0, 0.0, 0.0]), np.array([2.0, 1.0, 1.0]))
        assert hk.box_distance(a, b) == 0.0

    def test_overlapping_is_zero(self):
        a = hk.BoundingBox(np.zeros(3), np.ones(3))
        b = hk.BoundingBox(np.full(3, 0.5), np.full(3, 1.5))
        assert hk.box_distance(a, b) == 0.0

    def test_diagonal_offset(self):
        a = hk.BoundingBox(np.zeros(3), np.ones(3))
        b = hk.BoundingBox(np.full(3, 2.0), np.full(3, 3.0))
        assert hk.box_distance(a, b) == pytest.approx(np.sqrt(3.0))


class TestPointCloud:
    def test_fibonacci_sphere_on_sphere(self):
        cloud = hk.fibonacci_sphere(200)
        radii = np.linalg.norm(cloud.points, axis=1)
        np.testing.assert_allclose(radii, 1.0, rtol=1e-12)
        assert cloud.n == 200
        assert len(cloud) == 200

    def test_fibonacci_sphere_radius(self):
        cloud = hk.fibonacci_sphere(64, radius=2.5)
        radii = np.linalg.norm(cloud.points, axis=1)
        np.testing.assert_allclose(radii, 2.5, rtol=1e-12)

    def test_fibonacci_sphere_deterministic(self):
        a = hk.fibonacci_sphere(100).points
        b = hk.fibonacci_sphere(100).points
        assert np.array_equal(a, b)

    def test_points_distinct(self):
        pts = hk.fibonacci_sphere(500).points
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        np.fill_diagonal(d, np.inf)
        assert d.min() > 0.0

    def test_csv_roundtrip(self, tmp_path):
        cloud = hk.fibonacci_sphere(30)
        path = tmp_path / "cloud.csv"
        cloud.to_csv(path)
        back = hk.PointCloud.from_csv(path)
        np.testing.assert_allclose(back.points, cloud.points, rtol=0,
                                   atol=1e-15)
