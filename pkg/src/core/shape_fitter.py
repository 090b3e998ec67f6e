"""Robust superquadric recovery: EM with candidate switching, multi-primitive split."""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.special import expit

from ..config.constants import (
    OUTLIER_PROB, EM_PARAM_TOL, EM_MAX_ITER, EM_STAGNATION_TOL,
    EM_STAGNATION_PATIENCE, SWITCH_TRIAL_ITER, M_STEP_FD_STEP, M_STEP_MAX_ITER,
    M_STEP_ROUNDS, M_STEP_AREA_GRID, FIT_MAX_POINTS, MAX_SWITCHES, SIGMA2_MIN,
    MIN_FIT_POINTS, OUTLIER_THRESHOLD_POINTS, CLUSTER_RADIUS, MAX_SQ_FITS, EPS_MIN, EPS_MAX,
    KAPPA1_BOUNDS, KAPPA2_BOUNDS, SCALE_MIN
)
from .errors import DomainError
from .superquadric import (
    SuperquadricParams, PointCloud, implicit_value, project_points, surface_area
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussianUniformModel:
    """Gaussian inlier / uniform outlier mixture of one observation."""
    w0: float = OUTLIER_PROB
    sigma2: float = 1e-4
    V: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.w0 < 1.0:
            raise DomainError(f"Outlier probability must be in [0, 1), got {self.w0}")
        if self.sigma2 <= 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if self.V <= 0:
            raise DomainError(f"Workspace volume must be positive, got {self.V}")

    @classmethod
    def for_cloud(cls, cloud: PointCloud, w0: float = OUTLIER_PROB,
                  sigma2: float = 1e-4) -> 'GaussianUniformModel':
        """Model whose outlier volume is the bounding box of the cloud."""
        extent = np.ptp(cloud.points, axis=0) if len(cloud) else np.ones(3)
        extent = np.maximum(extent, 1e-2)
        return cls(w0=w0, sigma2=sigma2, V=float(np.prod(extent)))

    def with_sigma2(self, sigma2: float) -> 'GaussianUniformModel':
        return replace(self, sigma2=max(float(sigma2), SIGMA2_MIN))


@dataclass
class FitResult:
    """Recovered superquadric with its noise level and per-point inlier posterior."""
    sq: SuperquadricParams
    sigma2: float
    gamma: np.ndarray
    nll: float
    iterations: int
    converged: bool = True
    low_confidence: bool = False
    switches: int = 0
    nll_history: List[float] = field(default_factory=list)


def _sq_distance2(points, centroids):
    return ((points - centroids) ** 2).sum(axis=1)


def e_step(sq: SuperquadricParams, model: GaussianUniformModel,
           cloud: PointCloud) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gaussian centroids and inlier posteriors for every point.

    Args:
        sq: Current superquadric
        model: Mixture model (sigma2, w0, V)
        cloud: Observed points

    Returns:
        Tuple (centroids (N, 3), gamma (N,))
    """
    if model.sigma2 <= 0:
        raise DomainError("sigma2 must be positive")
    if cloud.is_empty:
        raise DomainError("e_step on an empty cloud")
    centroids = project_points(sq, cloud.points)
    gamma = inlier_posterior(_sq_distance2(cloud.points, centroids), model)
    return centroids, gamma


def inlier_posterior(d2, model: GaussianUniformModel) -> np.ndarray:
    """gamma = N / (N + w0 p0 / (1 - w0)) for squared residuals d2."""
    d2 = np.asarray(d2, dtype=float)
    if model.w0 == 0.0:
        return np.ones_like(d2)
    log_gauss = -1.5 * np.log(2.0 * np.pi * model.sigma2) - d2 / (2.0 * model.sigma2)
    log_outlier = np.log(model.w0 / model.V / (1.0 - model.w0))
    return expit(log_gauss - log_outlier)


def fit_objective(points, centroids, gamma, sigma2: float, area: float) -> float:
    """
    Negative log-likelihood of the EM lower bound.

    sum_i gamma_i (|x_i - mu_i|^2 / (2 sigma2) - log c) + N log A, with c the
    isotropic 3D Gaussian normalizer.
    """
    d2 = _sq_distance2(points, centroids)
    log_c = -1.5 * np.log(2.0 * np.pi * sigma2)
    return float(np.sum(gamma * (d2 / (2.0 * sigma2) - log_c)) + len(points) * np.log(area))


def closed_form_sigma2(d2, gamma, fallback: float) -> float:
    """sigma2 = sum gamma d2 / (3 sum gamma), floored; fallback when all weights vanish."""
    wsum = float(np.sum(gamma))
    if wsum <= 1e-12:
        return max(fallback, SIGMA2_MIN)
    return max(float(np.sum(gamma * d2)) / (3.0 * wsum), SIGMA2_MIN)


# --- M-step ---------------------------------------------------------------

def _pack(sq: SuperquadricParams) -> np.ndarray:
    v = sq.to_vector()
    v[2:5] = np.log(v[2:5])
    return v


def _unpack(z) -> SuperquadricParams:
    v = np.array(z, dtype=float)
    v[2:5] = np.exp(v[2:5])
    return SuperquadricParams.from_vector(v, clamp=True)


def _bounds(sq: SuperquadricParams, points):
    lo = points.min(axis=0) - 0.5
    hi = points.max(axis=0) + 0.5
    log_max = np.log(max(10.0 * np.ptp(points, axis=0).max(), 10.0 * sq.scale.max(), 1e-2))
    return [
        (EPS_MIN, EPS_MAX), (EPS_MIN, EPS_MAX),
        (np.log(SCALE_MIN), log_max), (np.log(SCALE_MIN), log_max), (np.log(SCALE_MIN), log_max),
        KAPPA1_BOUNDS, KAPPA2_BOUNDS,
        (lo[0], hi[0]), (lo[1], hi[1]), (None, None), (lo[2], hi[2]),
    ]


def radial_distance(sq: SuperquadricParams, points) -> np.ndarray:
    """Radial approximation |r| |1 - F^(-eps1/2)| of the point-to-surface distance."""
    local = sq.world_to_local(points)
    r = np.linalg.norm(local, axis=1)
    F = np.maximum(implicit_value(sq, local, strict=False), 1e-12)
    return r * np.abs(1.0 - F ** (-sq.eps1 / 2.0))


def _central_gradient(f, z, bounds, h=M_STEP_FD_STEP):
    g = np.zeros_like(z)
    for i in range(len(z)):
        lo, hi = bounds[i]
        zp, zm = z.copy(), z.copy()
        zp[i] = z[i] + h if hi is None else min(z[i] + h, hi)
        zm[i] = z[i] - h if lo is None else max(z[i] - h, lo)
        g[i] = (f(zp) - f(zm)) / (zp[i] - zm[i])
    return g


@dataclass
class MStepResult:
    sq: SuperquadricParams
    sigma2: float
    objective: float
    accepted: bool = True
    failed: bool = False


def m_step(cloud: PointCloud, centroids, gamma, sq_init: SuperquadricParams,
           sigma2: Optional[float] = None) -> MStepResult:
    """
    Update the superquadric and noise variance for fixed centroids and posteriors.

    The shape is refined with bounded L-BFGS-B on a radial-distance surrogate
    of the residuals (central finite-difference gradients); sigma2 has a
    closed form. The candidate is accepted only if the exact objective
    (closest-point residuals) does not increase.

    Args:
        cloud: Observed points
        centroids: Centroids from e_step under sq_init
        gamma: Inlier posteriors from e_step
        sq_init: Superquadric the centroids were computed for
        sigma2: Variance used for the previous E-step (closed form when omitted)

    Returns:
        MStepResult; accepted is False when sq_init is kept, failed when the
        optimizer raised
    """
    points = cloud.points
    gamma = np.asarray(gamma, dtype=float)
    d2_init = _sq_distance2(points, centroids)
    sigma2_init = closed_form_sigma2(d2_init, gamma, sigma2 if sigma2 else 1e-4)
    area_init = surface_area(sq_init)
    obj_init = fit_objective(points, centroids, gamma, sigma2_init, area_init)

    bounds = _bounds(sq_init, points)
    n = len(points)
    z = _pack(sq_init)
    s2 = sigma2_init
    failed = False
    for _ in range(M_STEP_ROUNDS):
        def surrogate(zz, s2=s2):
            sq = _unpack(zz)
            d = radial_distance(sq, points)
            area = surface_area(sq, grid=M_STEP_AREA_GRID)
            return float(np.sum(gamma * d * d) / (2.0 * s2) + n * np.log(area))
        try:
            res = minimize(surrogate, z, method='L-BFGS-B', bounds=bounds,
                           jac=lambda zz: _central_gradient(surrogate, zz, bounds),
                           options={'maxiter': M_STEP_MAX_ITER})
            z = res.x
        except (ValueError, FloatingPointError, DomainError) as e:
            logger.warning(f"M-step optimizer failed: {e}")
            failed = True
            break
        d_sur = radial_distance(_unpack(z), points)
        s2 = closed_form_sigma2(d_sur ** 2, gamma, s2)

    if not failed:
        sq_new = _unpack(z)
        cen_new = project_points(sq_new, points)
        s2_new = closed_form_sigma2(_sq_distance2(points, cen_new), gamma, s2)
        obj_new = fit_objective(points, cen_new, gamma, s2_new, surface_area(sq_new))
        if np.isfinite(obj_new) and obj_new <= obj_init + 1e-9:
            return MStepResult(sq_new, s2_new, obj_new)

    return MStepResult(sq_init, sigma2_init, obj_init, accepted=False, failed=failed)


# --- EMS -------------------------------------------------------------------

def initial_guess(cloud: PointCloud) -> SuperquadricParams:
    """Ellipsoid aligned with the planar principal axes of the cloud."""
    pts = cloud.points
    center = 0.5 * (np.percentile(pts, 2, axis=0) + np.percentile(pts, 98, axis=0))
    xy = pts[:, :2] - center[:2]
    cov = np.cov(xy.T) if len(pts) > 2 else np.eye(2)
    _, vecs = np.linalg.eigh(cov)
    major = vecs[:, -1]
    theta = float(np.arctan2(major[1], major[0]))
    c, s = np.cos(theta), np.sin(theta)
    u = xy @ np.array([c, s])
    v = xy @ np.array([-s, c])
    half = [0.5 * (np.percentile(w, 98) - np.percentile(w, 2)) for w in (u, v, pts[:, 2])]
    half = np.maximum(half, 1e-2)
    return SuperquadricParams(1.0, 1.0, half[0], half[1], half[2],
                              x0=center[0], y0=center[1], theta0=theta, z0=center[2])


def switch_candidates(sq: SuperquadricParams) -> List[SuperquadricParams]:
    """
    Similar superquadrics the EM may be stuck between.

    Axis variants (identity, planar swap, 45-degree duality when the planar
    scales are close) combined with an exponent swap and the taper variants
    {kappa, -kappa1, none}. Duplicates are removed; the first entry is sq.
    """
    axis_variants = [sq, replace(sq, a_x=sq.a_y, a_y=sq.a_x, theta0=sq.theta0 + np.pi / 2)]
    ratio = sq.a_x / sq.a_y
    if 0.8 < ratio < 1.2:
        e2 = sq.eps2
        if e2 <= 1.0:
            length = ((1 - np.sqrt(2)) * e2 + np.sqrt(2)) * min(sq.a_x, sq.a_y)
        else:
            length = ((np.sqrt(2) / 2 - 1) * e2 + 2 - np.sqrt(2) / 2) * min(sq.a_x, sq.a_y)
        axis_variants.append(replace(sq, eps2=float(np.clip(2.0 - e2, EPS_MIN, EPS_MAX)),
                                     a_x=length, a_y=length, theta0=sq.theta0 + np.pi / 4))

    candidates, seen = [], set()
    for base in axis_variants:
        for eps_pair in ((base.eps1, base.eps2), (base.eps2, base.eps1)):
            for k1, k2 in ((base.kappa1, base.kappa2), (-base.kappa1, base.kappa2), (0.0, 0.0)):
                cand = replace(base, eps1=eps_pair[0], eps2=eps_pair[1], kappa1=k1, kappa2=k2)
                key = tuple(np.round(cand.to_vector(), 12))
                if key not in seen:
                    seen.add(key)
                    candidates.append(cand)
    return candidates


def _em_iterations(cloud: PointCloud, model: GaussianUniformModel,
                   sq: SuperquadricParams, sigma2: float, n_iter: int):
    """Run a fixed number of EM iterations; returns (sq, sigma2, objective)."""
    obj = np.inf
    for _ in range(n_iter):
        centroids, gamma = e_step(sq, model.with_sigma2(sigma2), cloud)
        res = m_step(cloud, centroids, gamma, sq, sigma2)
        sq, sigma2, obj = res.sq, res.sigma2, res.objective
    return sq, sigma2, obj


def ems_fit(cloud: PointCloud, model: Optional[GaussianUniformModel] = None,
            rng_seed=0, max_iter: int = EM_MAX_ITER,
            sq_init: Optional[SuperquadricParams] = None) -> FitResult:
    """
    Fit one superquadric to a noisy, outlier-contaminated cloud.

    Args:
        cloud: Observed points
        model: Mixture model; defaults to w0 = 0.1 over the cloud bounding box
        rng_seed: Seed for the point subsample used by the optimizer
        max_iter: EM iteration cap
        sq_init: Starting superquadric (planar principal axes when omitted)

    Returns:
        FitResult with gamma for every point of the cloud
    """
    if cloud.is_empty:
        raise DomainError("Cannot fit an empty cloud")
    low_confidence = len(cloud) < MIN_FIT_POINTS
    if low_confidence:
        logger.warning(f"Fitting only {len(cloud)} points; result is low-confidence")

    model = model or GaussianUniformModel.for_cloud(cloud)
    rng = np.random.default_rng(rng_seed)
    work = cloud
    if len(cloud) > FIT_MAX_POINTS:
        idx = np.sort(rng.choice(len(cloud), FIT_MAX_POINTS, replace=False))
        work = cloud.subset(idx)

    sq = sq_init or initial_guess(work)
    cen = project_points(sq, work.points)
    sigma2 = closed_form_sigma2(_sq_distance2(work.points, cen), np.ones(len(work)), model.sigma2)

    history: List[float] = []
    stagnant = 0
    switches = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        centroids, gamma = e_step(sq, model.with_sigma2(sigma2), work)
        res = m_step(work, centroids, gamma, sq, sigma2)
        change = np.max(np.abs(res.sq.to_vector() - sq.to_vector()))
        change = max(change, abs(res.sigma2 - sigma2))
        prev = history[-1] if history else None
        history.append(res.objective)
        sq, sigma2 = res.sq, res.sigma2

        if prev is not None and abs(prev - res.objective) <= EM_STAGNATION_TOL * max(abs(prev), 1.0):
            stagnant += 1
        else:
            stagnant = 0

        if stagnant >= EM_STAGNATION_PATIENCE or change < EM_PARAM_TOL:
            if switches >= MAX_SWITCHES:
                converged = True
                break
            switches += 1
            best_sq, best_s2, best_obj = sq, sigma2, res.objective
            for cand in switch_candidates(sq)[1:]:
                c_sq, c_s2, c_obj = _em_iterations(work, model, cand, sigma2, SWITCH_TRIAL_ITER)
                if c_obj < best_obj - 1e-9:
                    best_sq, best_s2, best_obj = c_sq, c_s2, c_obj
            if best_sq is sq:
                converged = True
                break
            logger.debug(f"Switched candidate: objective {res.objective:.4f} -> {best_obj:.4f}")
            sq, sigma2 = best_sq, best_s2
            history.append(best_obj)
            stagnant = 0

    if not converged:
        logger.warning(f"EMS did not converge in {max_iter} iterations")

    centroids, gamma = e_step(sq, model.with_sigma2(sigma2), cloud)
    nll = fit_objective(cloud.points, centroids, gamma, sigma2, surface_area(sq))
    return FitResult(sq=sq, sigma2=sigma2, gamma=gamma, nll=nll, iterations=it,
                     converged=converged, low_confidence=low_confidence,
                     switches=switches, nll_history=history)


# --- Multi-superquadric recovery --------------------------------------------

def euclidean_clusters(points, radius: float = CLUSTER_RADIUS) -> List[np.ndarray]:
    """
    Single-linkage Euclidean clusters.

    Returns:
        Index arrays sorted by decreasing size (ties by lowest first index)
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n == 0:
        return []
    pairs = cKDTree(points).query_pairs(radius, output_type='ndarray')
    adj = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    clusters = [np.flatnonzero(labels == k) for k in range(n_comp)]
    clusters.sort(key=lambda c: (-len(c), c[0]))
    return clusters


def multi_sq_recover(cloud: PointCloud, model: Optional[GaussianUniformModel] = None,
                     O_th: int = OUTLIER_THRESHOLD_POINTS, rng_seed=0,
                     max_fits: int = MAX_SQ_FITS) -> List[FitResult]:
    """
    Decompose a cloud into several superquadrics.

    Fits the largest Euclidean cluster, treats points with gamma <= 0.5 as
    outliers, clusters them and refits the largest cluster until fewer than
    O_th outliers remain. Clusters below the minimum fit size are discarded.
    Recovery also stops when a fit explains none of the remaining points or
    after max_fits fits.

    Args:
        cloud: Observed points
        model: Mixture model shared by every fit
        O_th: Stop once the outlier count drops below this
        rng_seed: Seed forwarded to ems_fit
        max_fits: Upper bound on the number of recovered superquadrics

    Returns:
        List of FitResult (at least one)
    """
    if O_th < 1:
        raise DomainError(f"O_th must be >= 1, got {O_th}")
    if max_fits < 1:
        raise DomainError(f"max_fits must be >= 1, got {max_fits}")
    if cloud.is_empty:
        raise DomainError("Cannot recover shapes from an empty cloud")
    model = model or GaussianUniformModel.for_cloud(cloud)

    fits: List[FitResult] = []
    remaining = cloud
    clusters = euclidean_clusters(remaining.points)
    target = remaining.subset(clusters[0])
    while len(fits) < max_fits:
        fit = ems_fit(target, model, rng_seed=rng_seed)
        fits.append(fit)
        before = len(remaining)
        _, gamma = e_step(fit.sq, model.with_sigma2(fit.sigma2), remaining)
        remaining = remaining.subset(gamma <= 0.5)
        if len(remaining) < O_th:
            break
        if len(remaining) >= before:
            logger.warning(f"Fit {len(fits)} explained none of {before} remaining points; stopping")
            break
        clusters = [c for c in euclidean_clusters(remaining.points) if len(c) >= MIN_FIT_POINTS]
        if not clusters:
            logger.info(f"{len(remaining)} outliers left in clusters below {MIN_FIT_POINTS} points")
            break
        target = remaining.subset(clusters[0])
    else:
        logger.warning(f"Stopped after {max_fits} fits with {len(remaining)} outliers left")
    logger.info(f"Recovered {len(fits)} superquadric(s)")
    return fits


def coverage(fits: List[FitResult], cloud: PointCloud,
             model: Optional[GaussianUniformModel] = None) -> np.ndarray:
    """Max-over-fits inlier posterior for every point of the cloud."""
    model = model or GaussianUniformModel.for_cloud(cloud)
    best = np.zeros(len(cloud))
    for fit in fits:
        _, gamma = e_step(fit.sq, model.with_sigma2(fit.sigma2), cloud)
        best = np.maximum(best, gamma)
    return best
