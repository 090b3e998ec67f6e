"""Overhead visual rendering, tactile channel and heteroscedastic observation noise."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config.constants import (
    OBS_IMAGE_SIZE, OBS_CAMERA_HEIGHT, OBS_CAMERA_FOCAL, OBS_DEPTH_NEAR, OBS_DEPTH_FAR,
    OBS_VECTOR_SIZE, VISUAL_NOISE_BASE, VISUAL_NOISE_OCCLUSION, TACTILE_NOISE_BASE,
    TACTILE_NOISE_SLIP, ROBOT_FOOTPRINT_RADIUS
)
from .camera import CameraModel, Viewpoint, rasterize, sample_spacing
from .errors import DomainError
from .superquadric import SuperquadricParams, sample_surface
from ..utils.geometry import RigidGeometry

logger = logging.getLogger(__name__)

VISUAL_SIZE = OBS_IMAGE_SIZE * OBS_IMAGE_SIZE


def observation_camera() -> CameraModel:
    """Fixed 64x64 overhead camera used for filter observations."""
    return CameraModel.square(OBS_IMAGE_SIZE, OBS_CAMERA_FOCAL)


def observation_viewpoint(center_xy) -> Viewpoint:
    """Camera straight above center_xy looking down."""
    return Viewpoint(np.array([center_xy[0], center_xy[1], OBS_CAMERA_HEIGHT]), np.eye(3))


@dataclass
class ObservationVector:
    """Flattened 64x64 grayscale image plus the planar contact force."""
    visual: np.ndarray
    tactile: np.ndarray

    def __post_init__(self):
        self.visual = np.asarray(self.visual, dtype=float).reshape(-1)
        self.tactile = np.asarray(self.tactile, dtype=float).reshape(-1)
        if self.visual.size != VISUAL_SIZE or self.tactile.size != 2:
            raise DomainError(
                f"Observation must be {VISUAL_SIZE} + 2 values, got {self.visual.size} + {self.tactile.size}"
            )

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.visual, self.tactile])

    @classmethod
    def from_flat(cls, z) -> 'ObservationVector':
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != OBS_VECTOR_SIZE:
            raise DomainError(f"Observation vector must have {OBS_VECTOR_SIZE} entries, got {z.size}")
        return cls(z[:VISUAL_SIZE], z[VISUAL_SIZE:])

    @property
    def image(self) -> np.ndarray:
        return self.visual.reshape(OBS_IMAGE_SIZE, OBS_IMAGE_SIZE)


@dataclass
class SegmentedCloud:
    """
    Per-link point clouds captured at reference link poses.

    The clouds are rigidly carried along with the planar link poses when the
    object is rendered at a different state.
    """
    clouds: List[np.ndarray]
    reference_poses: np.ndarray
    center_xy: np.ndarray
    spacing: float

    def __post_init__(self):
        self.clouds = [np.asarray(c, dtype=float).reshape(-1, 3) for c in self.clouds]
        self.reference_poses = np.asarray(self.reference_poses, dtype=float).reshape(-1, 3)
        self.center_xy = np.asarray(self.center_xy, dtype=float).reshape(2)
        if len(self.clouds) != len(self.reference_poses):
            raise DomainError("One cloud per link is required")

    @property
    def num_links(self) -> int:
        return len(self.clouds)

    @classmethod
    def from_shapes(cls, shapes: Sequence[SuperquadricParams], n_per_link: int = 800,
                    rng_seed=0, center_xy=None) -> 'SegmentedCloud':
        """Sample each link surface; reference poses are the shapes' own poses."""
        rng = np.random.default_rng(rng_seed)
        clouds = [sample_surface(sq, n_per_link, rng).points for sq in shapes]
        poses = np.array([sq.pose for sq in shapes])
        if center_xy is None:
            center_xy = poses[:, :2].mean(axis=0)
        return cls(clouds, poses, center_xy, sample_spacing(np.vstack(clouds)))

    def points_at(self, poses) -> np.ndarray:
        """All points with every link moved from its reference pose to poses[l]."""
        poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        out = []
        for cloud, ref, pose in zip(self.clouds, self.reference_poses, poses):
            local = RigidGeometry.world_to_local_2d(cloud[:, :2], ref)
            xy = RigidGeometry.local_to_world_2d(local, pose)
            out.append(np.column_stack([xy, cloud[:, 2]]))
        return np.vstack(out)


def depth_to_intensity(depth) -> np.ndarray:
    """Normalized inverse depth in [0, 1]; empty pixels (inf) map to 0."""
    depth = np.asarray(depth, dtype=float)
    with np.errstate(divide='ignore'):
        inv = np.where(np.isfinite(depth), 1.0 / depth, 0.0)
    lo, hi = 1.0 / OBS_DEPTH_FAR, 1.0 / OBS_DEPTH_NEAR
    return np.where(np.isfinite(depth), np.clip((inv - lo) / (hi - lo), 0.0, 1.0), 0.0)


def render_visual(object_state, initial_cloud: SegmentedCloud,
                  camera: Optional[CameraModel] = None,
                  viewpoint: Optional[Viewpoint] = None) -> np.ndarray:
    """
    Render the object at a state as a flattened grayscale image.

    Args:
        object_state: Link states (L, 6) or poses (L, 3)
        initial_cloud: Segmented cloud captured at the reference poses
        camera: Observation camera (64x64 overhead by default)
        viewpoint: Camera pose (straight above the cloud center by default)

    Returns:
        Array of 4096 intensities in [0, 1]
    """
    state = np.asarray(object_state, dtype=float)
    poses = state.reshape(initial_cloud.num_links, -1)[:, :3]
    camera = camera or observation_camera()
    viewpoint = viewpoint or observation_viewpoint(initial_cloud.center_xy)
    raster = rasterize(initial_cloud.points_at(poses), viewpoint, camera,
                       spacing=initial_cloud.spacing)
    return depth_to_intensity(raster.depth).reshape(-1)


def occlusion_fraction(poses, robot_xy, initial_cloud: SegmentedCloud,
                       radius: float = ROBOT_FOOTPRINT_RADIUS) -> float:
    """Fraction of object points hidden below the robot footprint in the overhead view."""
    pts = initial_cloud.points_at(poses)
    if len(pts) == 0:
        return 0.0
    d = np.linalg.norm(pts[:, :2] - np.asarray(robot_xy, dtype=float), axis=1)
    return float(np.mean(d < radius))


@dataclass
class InteractionState:
    """Ground-truth quantities that drive the observation noise at one step."""
    link_state: np.ndarray
    robot_xy: np.ndarray
    force: np.ndarray
    sticking: bool
    occlusion: float = 0.0


def noise_levels(state: InteractionState) -> Tuple[float, float]:
    """Visual and tactile noise standard deviations for a state."""
    sigma_v = VISUAL_NOISE_BASE + VISUAL_NOISE_OCCLUSION * float(np.clip(state.occlusion, 0.0, 1.0))
    slip = 0.0 if state.sticking else 1.0
    sigma_t = TACTILE_NOISE_BASE + TACTILE_NOISE_SLIP * float(np.linalg.norm(state.force)) * slip
    return sigma_v, sigma_t


def synthesize_noise(obs, state: InteractionState, rng) -> Tuple[np.ndarray, float, float]:
    """
    Add heteroscedastic Gaussian noise to a clean observation.

    Args:
        obs: Clean ObservationVector or flat 4098 vector
        state: Interaction state at the observation time
        rng: numpy Generator or seed

    Returns:
        Tuple (noisy flat observation, sigma_v, sigma_t)
    """
    rng = np.random.default_rng(rng)
    z = obs.flatten() if isinstance(obs, ObservationVector) else np.asarray(obs, dtype=float).copy()
    if z.size != OBS_VECTOR_SIZE:
        raise DomainError(f"Observation vector must have {OBS_VECTOR_SIZE} entries")
    sigma_v, sigma_t = noise_levels(state)
    noisy = z.copy()
    noisy[:VISUAL_SIZE] += rng.normal(scale=sigma_v, size=VISUAL_SIZE)
    noisy[VISUAL_SIZE:] += rng.normal(scale=sigma_t, size=2)
    return noisy, sigma_v, sigma_t
