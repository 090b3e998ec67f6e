"""Pinhole camera, look-at viewpoints and splatted z-buffer rasterization."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import cv2
import numpy as np
from scipy.spatial import cKDTree

from ..config.constants import CAMERA_WIDTH, CAMERA_HEIGHT, CAMERA_FOCAL
from .errors import DomainError
from ..utils.geometry import RigidGeometry

logger = logging.getLogger(__name__)

# OpenGL camera axes (looking along -z, y up) to OpenCV axes (looking along +z, y down)
_GL_TO_CV = np.diag([1.0, -1.0, -1.0])

MAX_SPLAT_RADIUS = 8
SPLAT_SCALE = 0.7


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics and image size in pixels."""
    fx: float = CAMERA_FOCAL
    fy: float = CAMERA_FOCAL
    cx: float = CAMERA_WIDTH / 2.0
    cy: float = CAMERA_HEIGHT / 2.0
    width: int = CAMERA_WIDTH
    height: int = CAMERA_HEIGHT

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError("Focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise DomainError("Principal point must lie inside the image")

    @classmethod
    def square(cls, size: int, focal: float) -> 'CameraModel':
        return cls(fx=focal, fy=focal, cx=size / 2.0, cy=size / 2.0, width=size, height=size)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, points, viewpoint: 'Viewpoint') -> Tuple[np.ndarray, np.ndarray]:
        """
        Project world points into the image.

        Args:
            points: World points (N, 3)
            viewpoint: Camera pose

        Returns:
            Tuple (uv (N, 2) pixel coordinates, depth (N,) along the optical axis)
        """
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if len(pts) == 0:
            return np.zeros((0, 2)), np.zeros(0)
        R_wc, t_wc = viewpoint.world_to_camera()
        depth = (pts @ R_wc.T + t_wc)[:, 2]
        rvec, _ = cv2.Rodrigues(R_wc)
        uv, _ = cv2.projectPoints(pts, rvec, t_wc.reshape(3, 1), self.K, None)
        return uv.reshape(-1, 2), depth


@dataclass(frozen=True)
class Viewpoint:
    """Camera position and camera-to-world rotation (camera looks along its -z axis)."""
    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'position', np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, 'rotation', np.asarray(self.rotation, dtype=float).reshape(3, 3))
        if not RigidGeometry.is_rotation(self.rotation, tol=1e-9):
            raise DomainError("Viewpoint rotation is not a proper rotation")

    @property
    def viewing_direction(self) -> np.ndarray:
        return -self.rotation[:, 2]

    def world_to_camera(self) -> Tuple[np.ndarray, np.ndarray]:
        """OpenCV extrinsics (R, t) with x_cam = R x_world + t."""
        R = _GL_TO_CV @ self.rotation.T
        return R, -R @ self.position


def lookat(viewpoint_pos, object_center) -> np.ndarray:
    """
    Rotation whose z axis points from the object center to the viewpoint.

    Args:
        viewpoint_pos: Camera position (3,)
        object_center: Object center (x, y) on the table or (x, y, z)

    Returns:
        3x3 rotation R with R @ [0, 0, 1] = h, identity when h is parallel to z
    """
    c = np.asarray(object_center, dtype=float).reshape(-1)
    if c.size == 2:
        c = np.append(c, 0.0)
    h = np.asarray(viewpoint_pos, dtype=float).reshape(3) - c
    norm = np.linalg.norm(h)
    if norm < 1e-12:
        raise DomainError("Viewpoint coincides with the object center")
    h = h / norm
    z = np.array([0.0, 0.0, 1.0])
    axis = np.cross(h, z)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        return np.eye(3)
    angle = np.arccos(np.clip(np.dot(h, z), -1.0, 1.0))
    R = RigidGeometry.axis_angle_matrix(axis / s, angle).T
    # Re-orthonormalize the float round-off of the Rodrigues map
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def sample_spacing(points) -> float:
    """Median nearest-neighbor distance of a point set (0 for fewer than 2 points)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        return 0.0
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(d[:, 1]))


@dataclass
class Raster:
    """Result of rasterizing a point set from one viewpoint."""
    depth: np.ndarray            # (H, W) nearest depth per pixel, inf where empty
    pixel: np.ndarray            # (N,) flat pixel index of each point, -1 outside
    visible: np.ndarray          # (N,) point survives the z-buffer test
    point_depth: np.ndarray      # (N,)


def rasterize(points, viewpoint: Viewpoint, camera: CameraModel,
              spacing: Optional[float] = None, tolerance: Optional[float] = None) -> Raster:
    """
    Splatted z-buffer of a point set.

    Each point covers a disk whose pixel radius matches the sample spacing at
    its depth, so front surfaces hide the samples behind them.

    Args:
        points: World points (N, 3)
        viewpoint: Camera pose
        camera: Intrinsics
        spacing: Surface sample spacing in meters (estimated when omitted)
        tolerance: Depth slack of the visibility test in meters

    Returns:
        Raster
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    H, W = camera.height, camera.width
    zbuf = np.full(H * W, np.inf)
    pixel = -np.ones(n, dtype=int)
    if n == 0:
        return Raster(zbuf.reshape(H, W), pixel, np.zeros(0, bool), np.zeros(0))

    if spacing is None:
        spacing = sample_spacing(pts)
    if tolerance is None:
        tolerance = max(2.0 * spacing, 5e-3)

    uv, depth = camera.project(pts, viewpoint)
    col = np.floor(uv[:, 0]).astype(int)
    row = np.floor(uv[:, 1]).astype(int)
    inside = (depth > 1e-9) & (col >= 0) & (col < W) & (row >= 0) & (row < H)
    pixel[inside] = row[inside] * W + col[inside]

    radius = np.zeros(n, dtype=int)
    radius[inside] = np.clip(
        np.floor(SPLAT_SCALE * camera.fx * spacing / depth[inside]), 0, MAX_SPLAT_RADIUS
    ).astype(int)

    for r in np.unique(radius[inside]):
        sel = np.flatnonzero(inside & (radius == r))
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        disk = (dx ** 2 + dy ** 2) <= r * r
        dx, dy = dx[disk], dy[disk]
        rr = row[sel, None] + dy[None, :]
        cc = col[sel, None] + dx[None, :]
        ok = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
        ids = (rr * W + cc)[ok]
        np.minimum.at(zbuf, ids, np.broadcast_to(depth[sel, None], rr.shape)[ok])

    visible = np.zeros(n, dtype=bool)
    visible[inside] = depth[inside] <= zbuf[pixel[inside]] + tolerance
    return Raster(zbuf.reshape(H, W), pixel, visible, depth)
