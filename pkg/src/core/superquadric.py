"""Superquadric primitives: implicit function, taper, sampling, projection, area."""

import logging
from dataclasses import dataclass, field, replace, fields
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..config.constants import (
    EPS_MIN, EPS_MAX, KAPPA1_BOUNDS, KAPPA2_BOUNDS, SCALE_MIN,
    AREA_GRID, SAMPLING_GRID, PROJECTION_SEEDS, PROJECTION_TOL
)
from .errors import DomainError, TaperError
from ..utils.geometry import RigidGeometry

logger = logging.getLogger(__name__)

# Smallest taper factor used by the non-strict (optimizer) code paths
_TAPER_FLOOR = 1e-6


@dataclass(frozen=True)
class SuperquadricParams:
    """
    Shape exponents, semi-axes, taper and planar pose of one superquadric.

    The pose places the superquadric frame at (x0, y0, z0) rotated by theta0
    about the world z axis. z0 is the height of the frame origin (a_z for a
    primitive resting on the table).
    """
    eps1: float
    eps2: float
    a_x: float
    a_y: float
    a_z: float
    kappa1: float = 0.0
    kappa2: float = 0.0
    x0: float = 0.0
    y0: float = 0.0
    theta0: float = 0.0
    z0: float = 0.0

    def __post_init__(self):
        values = [getattr(self, f.name) for f in fields(self)]
        if not np.all(np.isfinite(values)):
            raise DomainError(f"Non-finite superquadric parameters: {values}")
        for name in ('eps1', 'eps2'):
            v = getattr(self, name)
            if not EPS_MIN - 1e-12 <= v <= EPS_MAX + 1e-12:
                raise DomainError(f"{name}={v} outside [{EPS_MIN}, {EPS_MAX}]")
        for name in ('a_x', 'a_y', 'a_z'):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if not KAPPA1_BOUNDS[0] - 1e-12 <= self.kappa1 <= KAPPA1_BOUNDS[1] + 1e-12:
            raise DomainError(f"kappa1={self.kappa1} outside {KAPPA1_BOUNDS}")
        if not KAPPA2_BOUNDS[0] - 1e-12 <= self.kappa2 <= KAPPA2_BOUNDS[1] + 1e-12:
            raise DomainError(f"kappa2={self.kappa2} outside {KAPPA2_BOUNDS}")

    @property
    def scale(self) -> np.ndarray:
        return np.array([self.a_x, self.a_y, self.a_z])

    @property
    def pose(self) -> np.ndarray:
        """Planar pose (x0, y0, theta0)."""
        return np.array([self.x0, self.y0, self.theta0])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x0, self.y0, self.z0])

    @property
    def rotation(self) -> np.ndarray:
        return RigidGeometry.rotz(self.theta0)

    @property
    def is_tapered(self) -> bool:
        return self.kappa1 != 0.0 or self.kappa2 != 0.0

    def with_pose(self, x0: float, y0: float, theta0: float,
                  z0: Optional[float] = None) -> 'SuperquadricParams':
        """Copy with a new planar pose."""
        return replace(self, x0=float(x0), y0=float(y0), theta0=float(theta0),
                       z0=self.z0 if z0 is None else float(z0))

    def to_vector(self) -> np.ndarray:
        """Flatten to [eps1, eps2, a_x, a_y, a_z, kappa1, kappa2, x0, y0, theta0, z0]."""
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    @classmethod
    def from_vector(cls, v, clamp: bool = False) -> 'SuperquadricParams':
        """
        Build from a flat vector (see to_vector).

        Args:
            v: Array of 11 values
            clamp: Clip exponents, scales and taper into their valid ranges

        Returns:
            SuperquadricParams
        """
        v = np.asarray(v, dtype=float).copy()
        if v.shape != (11,):
            raise DomainError(f"Expected 11 superquadric values, got shape {v.shape}")
        if clamp:
            v[0:2] = np.clip(v[0:2], EPS_MIN, EPS_MAX)
            v[2:5] = np.maximum(v[2:5], SCALE_MIN)
            v[5] = np.clip(v[5], *KAPPA1_BOUNDS)
            v[6] = np.clip(v[6], *KAPPA2_BOUNDS)
        return cls(*[float(x) for x in v])

    def world_to_local(self, points) -> np.ndarray:
        """Map world points (N, 3) into the superquadric frame."""
        p = np.asarray(points, dtype=float)
        return (p - self.translation) @ self.rotation

    def local_to_world(self, points) -> np.ndarray:
        """Map superquadric-frame points (N, 3) into the world frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


@dataclass
class PointCloud:
    """3D points in meters with an optional per-point source-view index."""
    points: np.ndarray
    view_ids: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise DomainError("Point cloud contains non-finite coordinates")
        if self.view_ids is not None:
            self.view_ids = np.asarray(self.view_ids, dtype=int).reshape(-1)
            if len(self.view_ids) != len(self.points):
                raise DomainError("view_ids length does not match points")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0

    def subset(self, mask) -> 'PointCloud':
        ids = None if self.view_ids is None else self.view_ids[mask]
        return PointCloud(self.points[mask], ids)

    def transformed(self, R, t) -> 'PointCloud':
        """Apply x -> R x + t to every point."""
        return PointCloud(self.points @ np.asarray(R).T + np.asarray(t), self.view_ids)

    def merged(self, other: 'PointCloud') -> 'PointCloud':
        """Concatenate two clouds; missing view ids become -1."""
        if self.view_ids is None and other.view_ids is None:
            ids = None
        else:
            a = self.view_ids if self.view_ids is not None else -np.ones(len(self), int)
            b = other.view_ids if other.view_ids is not None else -np.ones(len(other), int)
            ids = np.concatenate([a, b])
        return PointCloud(np.vstack([self.points, other.points]), ids)


def _signed_pow(v, e):
    return np.sign(v) * np.abs(v) ** e


def _check_finite(p):
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise DomainError("Non-finite point")
    return p


def taper_factor(sq: SuperquadricParams, y) -> np.ndarray:
    """f(y) = 1 + kappa1*y/a_y + kappa2*(y/a_y)^2."""
    t = np.asarray(y, dtype=float) / sq.a_y
    return 1.0 + sq.kappa1 * t + sq.kappa2 * t * t


def apply_taper(sq: SuperquadricParams, p, strict: bool = True) -> np.ndarray:
    """
    Deform superquadric-frame points: X = f(y) x, Y = y, Z = z.

    Args:
        sq: Superquadric parameters
        p: Point (3,) or points (N, 3)
        strict: Raise TaperError where f(y) <= 0

    Returns:
        Deformed point(s), same shape as p
    """
    p = _check_finite(p)
    f = taper_factor(sq, p[..., 1])
    if strict and np.any(f <= 0):
        raise TaperError("Singular taper: f(y) <= 0")
    out = p.copy()
    out[..., 0] = p[..., 0] * f
    return out


def invert_taper(sq: SuperquadricParams, p, strict: bool = True) -> np.ndarray:
    """Inverse of apply_taper: x = X / f(y)."""
    p = _check_finite(p)
    f = taper_factor(sq, p[..., 1])
    if strict and np.any(f <= 0):
        raise TaperError("Singular taper: f(y) <= 0")
    f = np.where(np.abs(f) < _TAPER_FLOOR, _TAPER_FLOOR, f)
    out = p.copy()
    out[..., 0] = p[..., 0] / f
    return out


def _untapered_value(eps1, eps2, scale, p):
    ax, ay, az = scale
    xy = (np.abs(p[..., 0] / ax) ** (2.0 / eps2)
          + np.abs(p[..., 1] / ay) ** (2.0 / eps2))
    return xy ** (eps2 / eps1) + np.abs(p[..., 2] / az) ** (2.0 / eps1)


def implicit_value(sq: SuperquadricParams, p, strict: bool = True):
    """
    Inside-outside function of a (tapered) superquadric.

    Args:
        sq: Superquadric parameters
        p: Point (3,) or points (N, 3) in the superquadric frame
        strict: Raise TaperError on a singular taper instead of flooring it

    Returns:
        F (scalar or (N,)): 1 on the surface, < 1 inside, > 1 outside
    """
    p = _check_finite(p)
    if sq.is_tapered:
        p = invert_taper(sq, p, strict=strict)
    F = _untapered_value(sq.eps1, sq.eps2, sq.scale, p)
    return float(F) if np.ndim(F) == 0 else F


def surface_points(sq: SuperquadricParams, eta, omega) -> np.ndarray:
    """
    Spherical-product parameterization in the superquadric frame.

    Args:
        sq: Superquadric parameters
        eta: Latitude in [-pi/2, pi/2], any shape
        omega: Longitude in [-pi, pi), broadcastable to eta

    Returns:
        Tapered surface points, shape (..., 3)
    """
    eta, omega = np.broadcast_arrays(np.asarray(eta, float), np.asarray(omega, float))
    ce = _signed_pow(np.cos(eta), sq.eps1)
    x = sq.a_x * ce * _signed_pow(np.cos(omega), sq.eps2)
    y = sq.a_y * ce * _signed_pow(np.sin(omega), sq.eps2)
    z = sq.a_z * _signed_pow(np.sin(eta), sq.eps1)
    if sq.is_tapered:
        x = x * taper_factor(sq, y)
    return np.stack([x, y, z], axis=-1)


def _surface_mesh(sq: SuperquadricParams, n_eta: int, n_omega: int):
    """Grid of surface points with per-cell areas (two triangles per cell)."""
    eta = np.linspace(-np.pi / 2, np.pi / 2, n_eta + 1)
    omega = np.linspace(-np.pi, np.pi, n_omega + 1)
    E, W = np.meshgrid(eta, omega, indexing='ij')
    P = surface_points(sq, E, W)
    p00, p10 = P[:-1, :-1], P[1:, :-1]
    p01, p11 = P[:-1, 1:], P[1:, 1:]
    a1 = 0.5 * np.linalg.norm(np.cross(p10 - p00, p01 - p00), axis=-1)
    a2 = 0.5 * np.linalg.norm(np.cross(p10 - p11, p01 - p11), axis=-1)
    return eta, omega, a1 + a2


def surface_area(sq: SuperquadricParams, grid: int = AREA_GRID) -> float:
    """Area of the superquadric surface by triangulated parameter-grid quadrature."""
    _, _, cell_area = _surface_mesh(sq, grid, grid)
    return float(cell_area.sum())


def sample_surface(sq: SuperquadricParams, M: int, rng_seed=None) -> PointCloud:
    """
    Draw M points uniformly per unit area from the surface.

    Parameter cells are chosen with probability proportional to their area and
    a point is drawn uniformly in parameter space inside each chosen cell.

    Args:
        sq: Superquadric parameters
        M: Number of points
        rng_seed: Seed or numpy Generator

    Returns:
        PointCloud in the world frame
    """
    if M < 1:
        raise DomainError(f"Sample count must be >= 1, got {M}")
    rng = np.random.default_rng(rng_seed)
    n_eta, n_omega = SAMPLING_GRID
    eta, omega, cell_area = _surface_mesh(sq, n_eta, n_omega)
    prob = cell_area.ravel() / cell_area.sum()
    cells = rng.choice(prob.size, size=M, p=prob)
    i, j = np.unravel_index(cells, cell_area.shape)
    e = eta[i] + rng.random(M) * (eta[1] - eta[0])
    w = omega[j] + rng.random(M) * (omega[1] - omega[0])
    local = surface_points(sq, e, w)
    return PointCloud(sq.local_to_world(local))


def _projection_seeds():
    side = int(round(np.sqrt(PROJECTION_SEEDS)))
    eta = -np.pi / 2 + (np.arange(side) + 0.5) * np.pi / side
    omega = -np.pi + (np.arange(side) + 0.5) * 2 * np.pi / side
    E, W = np.meshgrid(eta, omega, indexing='ij')
    return E.ravel(), W.ravel(), np.pi / side, 2 * np.pi / side


def project_points(sq: SuperquadricParams, X, max_iter: int = 300) -> np.ndarray:
    """
    Closest surface points for a batch of world points.

    Each query starts from the nearest of a fixed lattice of parameter seeds
    (lowest seed index wins ties) and is refined by coordinate descent on
    (eta, omega) with step halving down to PROJECTION_TOL meters.

    Args:
        sq: Superquadric parameters
        X: World points (N, 3)
        max_iter: Cap on descent iterations

    Returns:
        Surface points (N, 3) in the world frame
    """
    X = _check_finite(X).reshape(-1, 3)
    local = sq.world_to_local(X)
    seed_eta, seed_omega, h_eta, h_omega = _projection_seeds()
    seeds = surface_points(sq, seed_eta, seed_omega)

    d2 = ((local[:, None, :] - seeds[None, :, :]) ** 2).sum(-1)
    best = np.argmin(d2, axis=1)
    eta = seed_eta[best].copy()
    omega = seed_omega[best].copy()
    cur = d2[np.arange(len(local)), best]

    step = np.tile(np.array([h_eta, h_omega]) / 2.0, (len(local), 1))
    stop_step = PROJECTION_TOL / max(sq.a_x, sq.a_y, sq.a_z) / 10.0

    def dist2(e, w):
        return ((surface_points(sq, e, w) - local) ** 2).sum(-1)

    for _ in range(max_iter):
        active = step.max(axis=1) > stop_step
        if not np.any(active):
            break
        for k in (0, 1):
            base_e, base_w = eta.copy(), omega.copy()
            improved = np.zeros(len(local), dtype=bool)
            for sign in (1.0, -1.0):
                if k == 0:
                    e = np.clip(base_e + sign * step[:, 0], -np.pi / 2, np.pi / 2)
                    w = base_w
                else:
                    e = base_e
                    w = base_w + sign * step[:, 1]
                d = dist2(e, w)
                better = active & ~improved & (d < cur)
                eta = np.where(better, e, eta)
                omega = np.where(better, w, omega)
                cur = np.where(better, d, cur)
                improved |= better
            step[:, k] = np.where(active & ~improved, step[:, k] * 0.5, step[:, k])

    omega = RigidGeometry.wrap_angle(omega)
    return sq.local_to_world(surface_points(sq, eta, omega))


def project_point(sq: SuperquadricParams, x) -> np.ndarray:
    """Closest point on the surface to a single world point."""
    return project_points(sq, np.asarray(x, dtype=float).reshape(1, 3))[0]


def chamfer_distance(A, B) -> float:
    """
    Symmetric Chamfer distance 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|).

    Args:
        A, B: PointCloud or (N, 3) arrays

    Returns:
        Distance in meters
    """
    a = A.points if isinstance(A, PointCloud) else np.asarray(A, float).reshape(-1, 3)
    b = B.points if isinstance(B, PointCloud) else np.asarray(B, float).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise DomainError("Chamfer distance of an empty cloud")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


# --- Footprint (z = 0 cross-section) ---------------------------------------

def footprint_value(sq: SuperquadricParams, xy) -> np.ndarray:
    """Implicit value of the cross-section at z = 0 for local planar points (N, 2)."""
    xy = np.asarray(xy, dtype=float)
    p = np.concatenate([xy, np.zeros(xy.shape[:-1] + (1,))], axis=-1)
    return implicit_value(sq, p, strict=False)


def footprint_outline(sq: SuperquadricParams, n: int = 256) -> np.ndarray:
    """Closed outline of the footprint as n local planar points, counter-clockwise."""
    omega = np.linspace(-np.pi, np.pi, n, endpoint=False)
    return surface_points(sq, np.zeros_like(omega), omega)[:, :2]


def footprint_radius(sq: SuperquadricParams, angle, iters: int = 60) -> np.ndarray:
    """
    Distance from the frame origin to the footprint boundary along local angles.

    Args:
        sq: Superquadric parameters
        angle: Ray angles (any shape) in the link frame
        iters: Bisection iterations

    Returns:
        Radii with the same shape as angle
    """
    angle = np.asarray(angle, dtype=float)
    d = np.stack([np.cos(angle), np.sin(angle)], -1)
    lo = np.zeros(angle.shape)
    hi = np.full(angle.shape, 4.0 * max(sq.a_x, sq.a_y))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = footprint_value(sq, d * mid[..., None]) < 1.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def footprint_normal(sq: SuperquadricParams, xy, h: float = 1e-6) -> np.ndarray:
    """Outward unit normal of the footprint at local planar points (N, 2)."""
    xy = np.asarray(xy, dtype=float)
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    gx = footprint_value(sq, xy + ex) - footprint_value(sq, xy - ex)
    gy = footprint_value(sq, xy + ey) - footprint_value(sq, xy - ey)
    g = np.stack([gx, gy], -1)
    return g / np.maximum(np.linalg.norm(g, axis=-1, keepdims=True), 1e-300)


def footprint_area(sq: SuperquadricParams, n: int = 512) -> float:
    """Area of the z = 0 cross-section (shoelace on the outline)."""
    p = footprint_outline(sq, n)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
