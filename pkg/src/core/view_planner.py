"""Entropy-driven next-best-view selection and incremental cloud registration."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..config.constants import (
    NUM_CANDIDATE_VIEWS, VIEW_RADIUS_MARGIN, ENTROPY_P_MIN, ENTROPY_SIGMA_FLOOR,
    ENTROPY_THRESHOLD, ENTROPY_REFIT_SLACK, MAX_VIEWS, ENTROPY_SAMPLES, ICP_MAX_ITER, ICP_MIN_OVERLAP,
    ICP_DIVERGENCE_PATIENCE, OUTLIER_THRESHOLD_POINTS, Policy
)
from .camera import CameraModel, Viewpoint, lookat, rasterize, sample_spacing
from .errors import DomainError
from .shape_fitter import FitResult, multi_sq_recover
from .superquadric import PointCloud, sample_surface, chamfer_distance
from ..utils.geometry import RigidGeometry

logger = logging.getLogger(__name__)

# Distance gate of the mutual nearest-neighbor overlap test
ICP_OVERLAP_DISTANCE = 0.03
# Samples below this height touch the table and are never observable
TABLE_CLEARANCE = 0.005


# --- Entropy ------------------------------------------------------------------

def binary_entropy(p) -> np.ndarray:
    """-p log p - (1-p) log(1-p) in nats, 0 at p in {0, 1}."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        h = -(p * np.log(p) + (1.0 - p) * np.log(1.0 - p))
    return np.nan_to_num(h, nan=0.0)


def coverage_probability(d, sigma2: float) -> np.ndarray:
    """
    Probability that a surface sample is explained by the cloud.

    The Gaussian kernel exp(-d^2 / 2 sigma2), floored at ENTROPY_P_MIN, is mapped
    into [0.5, 1] so that an unexplained sample is maximally uncertain.
    """
    k = np.exp(-np.asarray(d, dtype=float) ** 2 / (2.0 * sigma2))
    k = np.clip(k, ENTROPY_P_MIN, 1.0)
    return 0.5 * (1.0 + k)


def entropy_sigma2(fits: Sequence[FitResult]) -> float:
    """Kernel variance from the fitted noise levels with a sensor-scale floor."""
    s2 = max((f.sigma2 for f in fits), default=0.0)
    return max(s2, ENTROPY_SIGMA_FLOOR ** 2)


def sample_fit_surfaces(fits: Sequence[FitResult], n_per_fit: int = ENTROPY_SAMPLES,
                        rng_seed=0) -> np.ndarray:
    """Surface samples of every fitted superquadric above the table."""
    rng = np.random.default_rng(rng_seed)
    chunks = []
    for fit in fits:
        pts = sample_surface(fit.sq, n_per_fit, rng).points
        chunks.append(pts[pts[:, 2] > TABLE_CLEARANCE])
    return np.vstack(chunks) if chunks else np.zeros((0, 3))


def point_entropy(sq_fits: Sequence[FitResult], cloud: Optional[PointCloud],
                  sample_points) -> np.ndarray:
    """
    Expected entropy of every sampled surface point.

    Args:
        sq_fits: Current fits (their sigma2 sets the kernel width)
        cloud: Observed cloud; None or empty means nothing was observed
        sample_points: Samples on the fitted surfaces (M, 3)

    Returns:
        Entropy per sample in [0, log 2]
    """
    samples = np.asarray(sample_points, dtype=float).reshape(-1, 3)
    if cloud is None or cloud.is_empty:
        return binary_entropy(np.full(len(samples), 0.5 * (1.0 + ENTROPY_P_MIN)))
    d, _ = cKDTree(cloud.points).query(samples)
    return binary_entropy(coverage_probability(d, entropy_sigma2(sq_fits)))


# --- Views ----------------------------------------------------------------------

def sample_views(center_xy, radius: float, P: int) -> List[Viewpoint]:
    """
    Fibonacci lattice of P viewpoints on the upper hemisphere, all looking at the center.

    Args:
        center_xy: Object center on the table (x, y)
        radius: Hemisphere radius in meters
        P: Number of views (>= 2)

    Returns:
        List of Viewpoint
    """
    if P < 2:
        raise DomainError(f"Need at least 2 candidate views, got {P}")
    if radius <= 0:
        raise DomainError("View radius must be positive")
    c = np.array([center_xy[0], center_xy[1], 0.0])
    golden = np.pi * (3.0 - np.sqrt(5.0))
    views = []
    for k in range(P):
        z = (k + 0.5) / P
        rho = np.sqrt(max(0.0, 1.0 - z * z))
        phi = k * golden
        pos = c + radius * np.array([rho * np.cos(phi), rho * np.sin(phi), z])
        views.append(Viewpoint(pos, lookat(pos, c)))
    return views


def view_radius(bounding_radius: float) -> float:
    """Hemisphere radius for an object of the given bounding radius."""
    return 2.0 * bounding_radius + VIEW_RADIUS_MARGIN


def view_entropy(viewpoint: Viewpoint, camera: CameraModel, sample_points, entropies,
                 spacing: Optional[float] = None) -> float:
    """
    Entropy visible from one viewpoint.

    Samples are projected with a splatted z-buffer; in every pixel only the
    nearest visible sample contributes its entropy.

    Args:
        viewpoint: Candidate camera pose
        camera: Intrinsics
        sample_points: Surface samples (M, 3)
        entropies: Entropy of each sample (M,)
        spacing: Sample spacing used for splatting (estimated when omitted)

    Returns:
        Sum of the winning entropies (0 when nothing is in front of the camera)
    """
    entropies = np.asarray(entropies, dtype=float)
    raster = rasterize(sample_points, viewpoint, camera, spacing=spacing)
    idx = np.flatnonzero(raster.visible)
    if len(idx) == 0:
        return 0.0
    order = idx[np.lexsort((idx, raster.point_depth[idx], raster.pixel[idx]))]
    _, first = np.unique(raster.pixel[order], return_index=True)
    return float(entropies[order[first]].sum())


def rank_views(views: Sequence[Viewpoint], camera: CameraModel, sample_points,
               entropies) -> np.ndarray:
    """view_entropy for every candidate view."""
    spacing = sample_spacing(sample_points)
    return np.array([view_entropy(v, camera, sample_points, entropies, spacing) for v in views])


def next_best_view(fits: Sequence[FitResult], cloud: Optional[PointCloud],
                   views: Sequence[Viewpoint], camera: CameraModel,
                   sample_points=None, rng_seed=0) -> Tuple[int, Viewpoint, float]:
    """
    View with the largest visible entropy (lowest index on ties).

    Returns:
        Tuple (index, viewpoint, score)
    """
    if not views:
        raise DomainError("No candidate views")
    if sample_points is None:
        sample_points = sample_fit_surfaces(fits, rng_seed=rng_seed)
    entropies = point_entropy(fits, cloud, sample_points)
    scores = rank_views(views, camera, sample_points, entropies)
    best = int(np.argmax(scores))
    return best, views[best], float(scores[best])


# --- Registration -------------------------------------------------------------

@dataclass
class IcpResult:
    """Rigid transform mapping the source cloud onto the destination."""
    R: np.ndarray
    t: np.ndarray
    rms_history: List[float] = field(default_factory=list)
    overlap: float = 0.0
    failed: bool = False

    @property
    def rms(self) -> float:
        return self.rms_history[-1] if self.rms_history else float('nan')


def mutual_overlap(src, dst, gate: float = ICP_OVERLAP_DISTANCE) -> float:
    """Smaller of the two fractions of points whose nearest neighbor in the other cloud is within the gate."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    d_sd, _ = cKDTree(dst).query(src)
    d_ds, _ = cKDTree(src).query(dst)
    return float(min(np.mean(d_sd < gate), np.mean(d_ds < gate)))


def icp_register(src: PointCloud, dst: PointCloud, max_iter: int = ICP_MAX_ITER) -> IcpResult:
    """
    Point-to-point ICP.

    Args:
        src: Cloud to move
        dst: Reference cloud
        max_iter: Iteration cap

    Returns:
        IcpResult; failed (with identity) on insufficient overlap or divergence
    """
    if src.is_empty or dst.is_empty:
        raise DomainError("ICP on an empty cloud")
    identity = IcpResult(np.eye(3), np.zeros(3))
    overlap = mutual_overlap(src.points, dst.points)
    if overlap < ICP_MIN_OVERLAP:
        logger.warning(f"ICP overlap {overlap:.2f} below {ICP_MIN_OVERLAP}")
        identity.overlap, identity.failed = overlap, True
        return identity

    tree = cKDTree(dst.points)
    R, t = np.eye(3), np.zeros(3)
    current = src.points.copy()
    d, idx = tree.query(current)
    history = [float(np.sqrt(np.mean(d ** 2)))]
    growing = 0
    for _ in range(max_iter):
        R_step, t_step = RigidGeometry.rigid_transform(current, dst.points[idx])
        current = current @ R_step.T + t_step
        R, t = R_step @ R, R_step @ t + t_step
        d, idx = tree.query(current)
        rms = float(np.sqrt(np.mean(d ** 2)))
        growing = growing + 1 if rms > history[-1] + 1e-12 else 0
        history.append(rms)
        if growing >= ICP_DIVERGENCE_PATIENCE:
            logger.warning("ICP diverged")
            identity.overlap, identity.failed, identity.rms_history = overlap, True, history
            return identity
        if history[-2] - rms < 1e-10:
            break
    return IcpResult(R, t, history, overlap)


# --- Exploration loop -------------------------------------------------------------

@dataclass
class ViewRecord:
    """One acquired view of the exploration loop."""
    index: int
    score: float
    mean_entropy: float
    chamfer: float
    registered: bool


@dataclass
class ExplorationResult:
    fits: List[FitResult]
    cloud: PointCloud
    views_used: int
    records: List[ViewRecord]
    converged: bool


def _uniform_order(views: Sequence[Viewpoint], center) -> List[int]:
    """Sweep around the object by azimuth, alternating elevation bands."""
    c = np.asarray(center, dtype=float)
    az = np.array([np.arctan2(v.position[1] - c[1], v.position[0] - c[0]) for v in views])
    order = list(np.argsort(az, kind='stable'))
    stride = max(1, len(order) // MAX_VIEWS)
    sweep = []
    for offset in range(stride):
        sweep.extend(order[offset::stride])
    return [int(i) for i in sweep]


def explore_shape(scene, camera: CameraModel, strategy: Policy = Policy.ACTIVE,
                  max_views: int = MAX_VIEWS, threshold: float = ENTROPY_THRESHOLD,
                  n_views: int = NUM_CANDIDATE_VIEWS, rng_seed=0,
                  O_th: int = OUTLIER_THRESHOLD_POINTS) -> ExplorationResult:
    """
    Acquire views until the mean surface entropy drops below a threshold.

    A refit is accepted only when it does not raise the mean entropy by more
    than ENTROPY_REFIT_SLACK; otherwise the previous shapes are kept and
    scored against the grown cloud, so the recorded entropy never rises.

    Args:
        scene: Provides center_xy, bounding_radius, truth_points() and
            render(viewpoint, camera, view_id, rng) -> PointCloud
        camera: Exploration camera
        strategy: active (next-best view), uniform (azimuth sweep) or random
        max_views: View budget
        threshold: Mean entropy stop threshold (nats)
        n_views: Number of candidate viewpoints
        rng_seed: Seed for rendering noise, sampling and the random strategy
        O_th: Outlier threshold forwarded to multi_sq_recover

    Returns:
        ExplorationResult
    """
    strategy = Policy(strategy)
    rng = np.random.default_rng(rng_seed)
    views = sample_views(scene.center_xy, view_radius(scene.bounding_radius), n_views)
    sweep = _uniform_order(views, scene.center_xy)
    truth = scene.truth_points()

    used: List[int] = []
    records: List[ViewRecord] = []
    cloud: Optional[PointCloud] = None
    fits: List[FitResult] = []
    idx = sweep[0]
    score = float('nan')
    converged = False
    for k in range(max_views):
        used.append(idx)
        obs = scene.render(views[idx], camera, k, rng)
        registered = True
        if cloud is None:
            cloud = obs
        elif not obs.is_empty:
            reg = icp_register(obs, cloud)
            registered = not reg.failed
            cloud = cloud.merged(obs.transformed(reg.R, reg.t) if registered else obs)
        if cloud.is_empty:
            mean_h = float(np.log(2.0))
            records.append(ViewRecord(idx, score, mean_h, float('nan'), registered))
        else:
            refit = multi_sq_recover(cloud, O_th=O_th, rng_seed=int(rng.integers(1 << 31)))
            refit_samples = sample_fit_surfaces(refit, rng_seed=int(rng.integers(1 << 31)))
            entropies = point_entropy(refit, cloud, refit_samples)
            mean_h = float(entropies.mean()) if len(entropies) else float(np.log(2.0))
            if fits and records and mean_h > records[-1].mean_entropy + ENTROPY_REFIT_SLACK:
                logger.info(f"View {k + 1}: refit rejected at mean entropy {mean_h:.4f}")
                entropies = point_entropy(fits, cloud, samples)
                mean_h = float(entropies.mean()) if len(entropies) else float(np.log(2.0))
            else:
                fits, samples = refit, refit_samples
            fit_pts = sample_fit_surfaces(fits, rng_seed=k)
            cd = chamfer_distance(fit_pts, truth) if len(fit_pts) else float('nan')
            records.append(ViewRecord(idx, score, mean_h, cd, registered))
            logger.info(f"View {k + 1}: index {idx}, mean entropy {mean_h:.4f}, CD {cd:.4f}")
            if mean_h < threshold:
                converged = True
                break

        remaining = [i for i in range(len(views)) if i not in used]
        if not remaining:
            break
        if strategy is Policy.ACTIVE and fits:
            scores = rank_views([views[i] for i in remaining], camera, samples, entropies)
            j = int(np.argmax(scores))
            idx, score = remaining[j], float(scores[j])
        elif strategy is Policy.RANDOM:
            idx, score = int(rng.choice(remaining)), float('nan')
        else:
            idx = next(i for i in sweep if i not in used)
            score = float('nan')

    return ExplorationResult(fits, cloud if cloud is not None else PointCloud(np.zeros((0, 3))),
                             len(used), records, converged)
