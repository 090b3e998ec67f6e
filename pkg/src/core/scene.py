"""Synthetic tabletop scenes rendered as partial depth clouds for shape exploration."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .camera import CameraModel, Viewpoint, rasterize
from .errors import DomainError
from .superquadric import SuperquadricParams, PointCloud, sample_surface
from ..utils.geometry import RigidGeometry

logger = logging.getLogger(__name__)

SENSOR_NOISE = 0.005
OUTLIER_RATIO = 0.1
MISALIGN_ANGLE_DEG = 1.0
MISALIGN_SHIFT = 0.003
TABLE_CLEARANCE = 0.001


@dataclass(frozen=True)
class Wall:
    """Vertical rectangular occluder standing on the table."""
    center: tuple
    angle: float
    width: float
    height: float

    @property
    def normal(self) -> np.ndarray:
        return np.array([np.cos(self.angle), np.sin(self.angle), 0.0])

    @property
    def tangent(self) -> np.ndarray:
        return np.array([-np.sin(self.angle), np.cos(self.angle), 0.0])

    def blocks(self, origin, points) -> np.ndarray:
        """True where the segment from origin to a point crosses the wall."""
        origin = np.asarray(origin, dtype=float)
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        c = np.array([self.center[0], self.center[1], 0.0])
        n = self.normal
        s0 = (origin - c) @ n
        s1 = (points - c) @ n
        crosses = s0 * s1 < 0
        with np.errstate(divide='ignore', invalid='ignore'):
            t = np.where(crosses, s0 / (s0 - s1), 0.0)
        hit = origin + t[:, None] * (points - origin)
        along = (hit - c) @ self.tangent
        return crosses & (np.abs(along) <= self.width / 2) & (hit[:, 2] >= 0) & (hit[:, 2] <= self.height)


@dataclass
class ShapeScene:
    """
    Ground-truth superquadrics rendered from arbitrary viewpoints.

    Every view is z-buffered, thinned, corrupted with isotropic sensor noise
    and uniform outliers, and (except the first view) slightly misaligned so
    that views need registration before merging.
    """
    shapes: List[SuperquadricParams]
    wall: Optional[Wall] = None
    noise_std: float = SENSOR_NOISE
    outlier_ratio: float = OUTLIER_RATIO
    max_points_per_view: int = 1500
    truth_samples: int = 20000
    seed: int = 0
    _truth: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.shapes:
            raise DomainError("A scene needs at least one shape")
        if not 0 <= self.outlier_ratio < 1:
            raise DomainError("Outlier ratio must lie in [0, 1)")
        rng = np.random.default_rng(self.seed)
        per_shape = max(1, self.truth_samples // len(self.shapes))
        self._truth = np.vstack([sample_surface(sq, per_shape, rng).points for sq in self.shapes])

    @property
    def center_xy(self) -> np.ndarray:
        return self._truth[:, :2].mean(axis=0)

    @property
    def bounding_radius(self) -> float:
        c = np.append(self.center_xy, 0.0)
        return float(np.linalg.norm(self._truth - c, axis=1).max())

    def truth_points(self) -> np.ndarray:
        return self._truth

    def visible_points(self, viewpoint: Viewpoint, camera: CameraModel) -> np.ndarray:
        """Noise-free truth samples seen from a viewpoint."""
        pts = self._truth[self._truth[:, 2] > TABLE_CLEARANCE]
        raster = rasterize(pts, viewpoint, camera)
        mask = raster.visible
        if self.wall is not None:
            mask &= ~self.wall.blocks(viewpoint.position, pts)
        return pts[mask]

    def render(self, viewpoint: Viewpoint, camera: CameraModel, view_id: int, rng) -> PointCloud:
        """
        Synthetic depth cloud from one viewpoint.

        Args:
            viewpoint: Camera pose
            camera: Intrinsics
            view_id: Index stored with every returned point
            rng: numpy Generator

        Returns:
            PointCloud (possibly empty when the object is fully hidden)
        """
        pts = self.visible_points(viewpoint, camera)
        if len(pts) > self.max_points_per_view:
            pts = pts[np.sort(rng.choice(len(pts), self.max_points_per_view, replace=False))]
        if len(pts) == 0:
            logger.info(f"View {view_id} sees nothing")
            return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=int))
        pts = pts + rng.normal(scale=self.noise_std, size=pts.shape)

        n_out = int(round(self.outlier_ratio / (1.0 - self.outlier_ratio) * len(pts)))
        if n_out:
            r = self.bounding_radius
            c = self.center_xy
            lo = np.array([c[0] - r, c[1] - r, 0.0])
            hi = np.array([c[0] + r, c[1] + r, 2.0 * r])
            pts = np.vstack([pts, rng.uniform(lo, hi, size=(n_out, 3))])

        if view_id > 0:
            angle = np.deg2rad(rng.uniform(-MISALIGN_ANGLE_DEG, MISALIGN_ANGLE_DEG))
            shift = rng.uniform(-MISALIGN_SHIFT, MISALIGN_SHIFT, size=3)
            pivot = np.append(self.center_xy, 0.0)
            pts = (pts - pivot) @ RigidGeometry.rotz(angle).T + pivot + shift
        return PointCloud(pts, np.full(len(pts), view_id))
