"""Point geometries and axis-aligned bounding boxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box [lo, hi] in 3D."""

    lo: np.ndarray
    hi: np.ndarray

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, p):
        """Membership test; per-point boolean array for (n, 3) input."""
        p = np.asarray(p)
        return np.logical_and(self.lo <= p, p <= self.hi).all(axis=-1)


def box_around(points):
    """Tight bounding box of a (n, 3) coordinate array."""
    if len(points) == 0:
        raise EmptyInputError("cannot bound an empty point set")
    return BoundingBox(points.min(axis=0), points.max(axis=0))


def box_distance(a: BoundingBox, b: BoundingBox):
    """Euclidean distance between two boxes (0 if they overlap or touch)."""
    gap = np.maximum(0.0, np.maximum(a.lo - b.hi, b.lo - a.hi))
    return float(np.linalg.norm(gap))


class PointCloud:
    """A set of 3D points; indices 0..n-1 form the root index set."""

    def __init__(self, points):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"expected (n, 3) coordinates, got {points.shape}")
        if points.shape[0] == 0:
            raise EmptyInputError("point cloud is empty")
        if not np.all(np.isfinite(points)):
            raise ValueError("point coordinates must be finite")
        self.points = points

    @property
    def n(self):
        return self.points.shape[0]

    def __len__(self):
        return self.n

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x,y,z\n")
            for p in self.points:
                fh.write(",".join(repr(float(v)) for v in p) + "\n")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data)


def fibonacci_sphere(n, radius=1.0):
    """n points spread over the sphere of the given radius (golden-angle spiral).

    Deterministic for fixed n; all points are pairwise distinct.
    """
    if n < 1:
        raise EmptyInputError("fibonacci_sphere needs n >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = GOLDEN_ANGLE * i
    pts = np.empty((n, 3))
    pts[:, 0] = radius * rho * np.cos(phi)
    pts[:, 1] = radius * rho * np.sin(phi)
    pts[:, 2] = radius * z
    return PointCloud(pts)
