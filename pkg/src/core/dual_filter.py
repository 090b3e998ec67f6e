"""
Dual differentiable filter over link poses/twists (psi) and physical parameters (phi).

The joint Gaussian belief is propagated with constrained Monte-Carlo sigma
points. Parameters are updated by likelihood reweighting with kernel
shrinkage; poses by an unscented Kalman update conditioned on the parameter
posterior mean. All arithmetic is in torch float64 so losses can be
back-propagated through whole filter runs.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import torch

from ..config.constants import (
    NUM_SIGMA_POINTS, KERNEL_SHRINKAGE, COV_JITTER, INFLATION_ON_SKIP, PARAM_MASS_BOUNDS,
    PARAM_FRICTION_BOUNDS, PARAM_JOINT_BOUNDS, PRIOR_POSE_STD, PRIOR_TWIST_STD, PRIOR_MASS,
    PRIOR_FRICTION, PRIOR_COM, PRIOR_JOINT, PRIOR_PARAM_STD, PROCESS_NOISE_POSITION,
    PROCESS_NOISE_ANGLE, PROCESS_NOISE_TWIST
)
from .camera import CameraModel
from .errors import DomainError
from .networks import DTYPE
from .observation import VISUAL_SIZE, SegmentedCloud, render_visual
from .process_models import ProcessModel
from .push_simulator import ActionAffordance, RigidObjectModel
from .superquadric import SuperquadricParams

logger = logging.getLogger(__name__)

# Smallest margin kept from open lower bounds when projecting
PROJECTION_MARGIN = 1e-3
# Correlation bound enforced on the carried cross-covariance
CROSS_CORRELATION_LIMIT = 1.0 - 1e-6


# --- Matrix helpers -----------------------------------------------------------------

class _SymmetricSqrt(torch.autograd.Function):
    """Principal square root of a symmetric matrix with negative eigenvalues clamped to 0."""

    @staticmethod
    def forward(ctx, A):
        A = 0.5 * (A + A.transpose(-1, -2))
        s, V = torch.linalg.eigh(A)
        r = torch.sqrt(s.clamp(min=0.0))
        ctx.save_for_backward(r, V)
        return (V * r) @ V.transpose(-1, -2)

    @staticmethod
    def backward(ctx, G):
        r, V = ctx.saved_tensors
        Vt = V.transpose(-1, -2)
        Gs = Vt @ (0.5 * (G + G.transpose(-1, -2))) @ V
        denom = (r[..., :, None] + r[..., None, :]).clamp(min=1e-12)
        out = V @ (Gs / denom) @ Vt
        return 0.5 * (out + out.transpose(-1, -2))


def sym_sqrt(A: torch.Tensor) -> torch.Tensor:
    return _SymmetricSqrt.apply(A)


def symmetrize(A: torch.Tensor) -> torch.Tensor:
    return 0.5 * (A + A.transpose(-1, -2))


def _inv_sqrt(A: torch.Tensor, floor: float = 1e-12) -> torch.Tensor:
    eye = torch.eye(A.shape[-1], dtype=A.dtype)
    return torch.linalg.inv(sym_sqrt(A + floor * eye))


# --- Belief types -------------------------------------------------------------------

@dataclass
class JointBelief:
    """
    Gaussian over [psi, phi].

    psi holds (x, y, theta, vx, vy, omega) per link, phi holds (m, f, com_x,
    com_y) per link followed by the joint frictions.
    """
    mu: torch.Tensor
    sigma: torch.Tensor
    num_links: int

    def __post_init__(self):
        self.mu = torch.as_tensor(self.mu, dtype=DTYPE).reshape(-1)
        self.sigma = torch.as_tensor(self.sigma, dtype=DTYPE)
        D = 11 * self.num_links - 1
        if self.mu.numel() != D or tuple(self.sigma.shape) != (D, D):
            raise DomainError(f"A {self.num_links}-link belief has dimension {D}, got "
                              f"mu {tuple(self.mu.shape)} and Sigma {tuple(self.sigma.shape)}")

    @property
    def dim(self) -> int:
        return self.mu.numel()

    @property
    def psi_dim(self) -> int:
        return 6 * self.num_links

    @property
    def mu_psi(self) -> torch.Tensor:
        return self.mu[:self.psi_dim]

    @property
    def mu_phi(self) -> torch.Tensor:
        return self.mu[self.psi_dim:]

    @property
    def sigma_psi(self) -> torch.Tensor:
        return self.sigma[:self.psi_dim, :self.psi_dim]

    @property
    def sigma_phi(self) -> torch.Tensor:
        return self.sigma[self.psi_dim:, self.psi_dim:]

    @property
    def sigma_cross(self) -> torch.Tensor:
        return self.sigma[:self.psi_dim, self.psi_dim:]

    def poses(self) -> np.ndarray:
        """Mean link poses (L, 3) as numpy."""
        return self.mu_psi.detach().numpy().reshape(self.num_links, 6)[:, :3].copy()

    def detach(self) -> 'JointBelief':
        return JointBelief(self.mu.detach().clone(), self.sigma.detach().clone(), self.num_links)

    def is_valid(self, tol: float = 1e-9) -> bool:
        """Symmetric within tol and no eigenvalue below -tol."""
        S = self.sigma.detach()
        if not torch.isfinite(S).all() or not torch.isfinite(self.mu).all():
            return False
        if (S - S.T).abs().max() > tol:
            return False
        return bool(torch.linalg.eigvalsh(symmetrize(S)).min() >= -tol)


@dataclass
class SigmaSet:
    """C sampled points with their weights and feasibility mask."""
    points: torch.Tensor
    weights: torch.Tensor
    feasible: torch.Tensor

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def moments(self) -> Tuple[torch.Tensor, torch.Tensor]:
        w = self.weights
        mu = w @ self.points
        d = self.points - mu
        return mu, symmetrize((d * w[:, None]).T @ d)


@dataclass(frozen=True)
class ParamConstraints:
    """Box constraints on phi; mass and link friction bounds are open at 0."""
    lower: np.ndarray
    upper: np.ndarray
    open_lower: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.lower) >= np.asarray(self.upper)):
            raise DomainError("Parameter lower bounds must be below the upper bounds")

    @classmethod
    def from_shapes(cls, shapes: Sequence[SuperquadricParams]) -> 'ParamConstraints':
        """Bounds for links with the given footprints; CoM within each footprint bounding box."""
        lower, upper, open_lower = [], [], []
        for sq in shapes:
            lower += [PARAM_MASS_BOUNDS[0], PARAM_FRICTION_BOUNDS[0], -sq.a_x, -sq.a_y]
            upper += [PARAM_MASS_BOUNDS[1], PARAM_FRICTION_BOUNDS[1], sq.a_x, sq.a_y]
            open_lower += [True, True, False, False]
        for _ in range(len(shapes) - 1):
            lower.append(PARAM_JOINT_BOUNDS[0])
            upper.append(PARAM_JOINT_BOUNDS[1])
            open_lower.append(False)
        return cls(np.array(lower), np.array(upper), np.array(open_lower))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def feasible(self, phi: torch.Tensor) -> torch.Tensor:
        """Per-row constraint satisfaction for phi (B, P)."""
        lo = torch.as_tensor(self.lower, dtype=DTYPE)
        hi = torch.as_tensor(self.upper, dtype=DTYPE)
        strict = torch.as_tensor(self.open_lower)
        above = torch.where(strict, phi > lo, phi >= lo)
        ok = above & (phi <= hi) & torch.isfinite(phi)
        return ok.all(dim=-1)

    def project(self, phi: torch.Tensor) -> torch.Tensor:
        """Clamp into the bounds, keeping a margin from open lower bounds."""
        lo = torch.as_tensor(self.lower + PROJECTION_MARGIN * self.open_lower, dtype=DTYPE)
        hi = torch.as_tensor(self.upper, dtype=DTYPE)
        return torch.minimum(torch.maximum(phi, lo), hi)


def default_process_noise(L: int) -> torch.Tensor:
    """Diagonal of Q for L links (variances)."""
    per_link = [PROCESS_NOISE_POSITION, PROCESS_NOISE_POSITION, PROCESS_NOISE_ANGLE,
                PROCESS_NOISE_TWIST, PROCESS_NOISE_TWIST, PROCESS_NOISE_TWIST]
    return torch.tensor(per_link * L, dtype=DTYPE)


def initial_belief(poses, num_links: Optional[int] = None, param_mean=None,
                   param_std_scale: float = 1.0) -> JointBelief:
    """
    Uninformed prior around the perceived link poses.

    Args:
        poses: Initial link poses (L, 3), e.g. from the shape fits
        num_links: Defaults to len(poses)
        param_mean: Optional phi mean (defaults to the mid-range prior)
        param_std_scale: Scales the parameter standard deviations (small values freeze phi)

    Returns:
        JointBelief with zero cross-covariance
    """
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    L = num_links or len(poses)
    psi_mu = np.zeros((L, 6))
    psi_mu[:, :3] = poses[:L]
    psi_std = np.tile(list(PRIOR_POSE_STD) + [PRIOR_TWIST_STD] * 3, L)
    if param_mean is None:
        param_mean = np.concatenate([np.tile([PRIOR_MASS, PRIOR_FRICTION, PRIOR_COM, PRIOR_COM], L),
                                     [PRIOR_JOINT] * (L - 1)])
    link_std = [PRIOR_PARAM_STD[0], PRIOR_PARAM_STD[1], PRIOR_PARAM_STD[2], PRIOR_PARAM_STD[2]]
    phi_std = np.concatenate([np.tile(link_std, L), [PRIOR_PARAM_STD[3]] * (L - 1)]) * param_std_scale
    mu = np.concatenate([psi_mu.reshape(-1), np.asarray(param_mean, dtype=float)])
    std = np.concatenate([psi_std, phi_std])
    return JointBelief(torch.tensor(mu, dtype=DTYPE), torch.diag(torch.tensor(std ** 2, dtype=DTYPE)), L)


def reset_poses(belief: JointBelief, poses) -> JointBelief:
    """Keep the parameter block of a belief and restart the pose block from the prior at poses."""
    L = belief.num_links
    prior = initial_belief(poses, L)
    P = belief.psi_dim
    sigma = prior.sigma.clone()
    sigma[P:, P:] = belief.sigma_phi.detach()
    mu = torch.cat([prior.mu_psi, belief.mu_phi.detach()])
    return JointBelief(mu, sigma, L)


# --- Sampling and prediction ------------------------------------------------------

def _generator(seed) -> torch.Generator:
    if isinstance(seed, torch.Generator):
        return seed
    return torch.Generator().manual_seed(int(seed))


def sample_sigma(belief: JointBelief, constraints: ParamConstraints, seed=0,
                 num_points: int = NUM_SIGMA_POINTS) -> SigmaSet:
    """
    Draw C points mu + eps sqrt(Sigma) with uniform weights.

    Infeasible points are flagged, never dropped.
    """
    gen = _generator(seed)
    eps = torch.randn(num_points, belief.dim, generator=gen, dtype=DTYPE)
    points = belief.mu + eps @ sym_sqrt(belief.sigma)
    feasible = constraints.feasible(points[:, belief.psi_dim:])
    weights = torch.full((num_points,), 1.0 / num_points, dtype=DTYPE)
    return SigmaSet(points, weights, feasible)


@dataclass
class Prediction:
    """Predicted belief, the predicted sigma points and their contact force distribution."""
    belief: JointBelief
    sigma: SigmaSet
    force_mean: torch.Tensor
    force_var: torch.Tensor


def advance_points(sigma: SigmaSet, action: ActionAffordance, model: ProcessModel, robot_xy,
                   obj: Optional[RigidObjectModel], num_links: int
                   ) -> Tuple[SigmaSet, torch.Tensor, torch.Tensor]:
    """
    Move the psi blocks of feasible points through the process model.

    Infeasible points and points the model fails on keep their previous psi
    and are flagged infeasible.

    Returns:
        Tuple (new SigmaSet, force mean (C, 2), force variance (C, 2))
    """
    P = 6 * num_links
    pts = sigma.points
    C = pts.shape[0]
    psi = pts[:, :P]
    force_mean = torch.zeros(C, 2, dtype=DTYPE)
    force_var = torch.ones(C, 2, dtype=DTYPE)
    mask = sigma.feasible.clone()
    idx = torch.nonzero(sigma.feasible).reshape(-1)
    if idx.numel():
        out = model(pts[idx], action, robot_xy, obj)
        ok = out.valid.to(torch.bool)
        held = psi[idx]
        psi = psi.index_put((idx,), torch.where(ok[:, None], out.psi, held))
        zero = torch.zeros_like(out.force_mean)
        force_mean = force_mean.index_put((idx,), torch.where(ok[:, None], out.force_mean, zero))
        force_var = force_var.index_put((idx,), torch.where(ok[:, None], out.force_var, zero + 1.0))
        mask[idx] = ok
        failed = int((~ok).sum())
        if failed:
            logger.debug(f"{failed} sigma points held at their prior value")
    return SigmaSet(torch.cat([psi, pts[:, P:]], dim=1), sigma.weights, mask), force_mean, force_var


def predict(belief: JointBelief, action: ActionAffordance, model: ProcessModel, Q=None, seed=0,
            robot_xy=None, obj: Optional[RigidObjectModel] = None,
            constraints: Optional[ParamConstraints] = None,
            num_points: int = NUM_SIGMA_POINTS, sigma: Optional[SigmaSet] = None) -> Prediction:
    """
    Constrained Monte-Carlo prediction step.

    Args:
        belief: Current joint belief
        action: Robot action
        model: Process model
        Q: Diagonal process noise variances (6L,); default_process_noise when None
        seed: Seed or torch.Generator for sampling and process noise
        robot_xy: Robot position at the start of the step (action.point by default)
        obj: Object geometry for the analytical model
        constraints: Parameter constraints (derived from obj when None)
        num_points: Number of sigma points C
        sigma: Reuse an existing SigmaSet instead of sampling

    Returns:
        Prediction with moments over all C points
    """
    L = belief.num_links
    gen = _generator(seed)
    if constraints is None:
        if obj is None:
            raise DomainError("Constraints or an object are required to check feasibility")
        constraints = ParamConstraints.from_shapes(obj.shapes)
    if sigma is None:
        sigma = sample_sigma(belief, constraints, gen, num_points)
    robot_xy = np.asarray(action.point if robot_xy is None else robot_xy, dtype=float)
    moved, force_mean, force_var = advance_points(sigma, action, model, robot_xy, obj, L)

    Q = default_process_noise(L) if Q is None else torch.as_tensor(Q, dtype=DTYPE).reshape(-1)
    eps = torch.randn(moved.size, 6 * L, generator=gen, dtype=DTYPE)
    noisy = torch.cat([moved.points[:, :6 * L] + eps * Q.clamp(min=0.0).sqrt(),
                       moved.points[:, 6 * L:]], dim=1)
    moved = SigmaSet(noisy, moved.weights, moved.feasible)
    mu, cov = moved.moments()
    return Prediction(JointBelief(mu, cov, L), moved, force_mean, force_var)


# --- Observation model -------------------------------------------------------------

@dataclass
class ObservationPrediction:
    """Per-point predicted observations (C, 4098) and the diagonal of R (4098,)."""
    points: torch.Tensor
    r_diag: torch.Tensor
    var_v: torch.Tensor
    var_t: torch.Tensor


def render_points(psi: torch.Tensor, cloud: SegmentedCloud, num_links: int, camera=None) -> torch.Tensor:
    """Render every row of psi (K, 6L); images carry no gradient."""
    states = psi.detach().numpy().reshape(-1, num_links, 6)
    return torch.from_numpy(np.stack([render_visual(s, cloud, camera) for s in states]))


def observation_noise_diag(var_v: torch.Tensor, var_t: torch.Tensor) -> torch.Tensor:
    return torch.cat([var_v.reshape(1).expand(VISUAL_SIZE), var_t.reshape(1).expand(2)])


def predict_observation(pred: Prediction, cloud: SegmentedCloud, model: ProcessModel, z,
                        camera=None) -> ObservationPrediction:
    """
    Visual prediction by re-rendering the initial cloud at every point's
    poses; tactile prediction from the process model's force mean. R comes
    from the noise model evaluated on the actual observation z.
    """
    L = pred.belief.num_links
    visual = render_points(pred.sigma.points[:, :6 * L], cloud, L, camera)
    points = torch.cat([visual, pred.force_mean], dim=1)
    var_v, var_t = model.observation_noise(z)
    return ObservationPrediction(points, observation_noise_diag(var_v, var_t), var_v, var_t)


# --- Parameter update ----------------------------------------------------------------

@dataclass
class ParamUpdate:
    mu_phi: torch.Tensor
    sigma_phi: torch.Tensor
    weights: torch.Tensor
    degenerate: bool = False


def observation_loglik(z_points: torch.Tensor, z, r_diag: torch.Tensor) -> torch.Tensor:
    """-1/2 r R^-1 r^T per point with diagonal R."""
    z = torch.as_tensor(z, dtype=DTYPE).reshape(1, -1)
    r = z - z_points
    return -0.5 * (r * r / r_diag).sum(dim=1)


def reweight(sigma: SigmaSet, loglik: torch.Tensor, num_links: int, a: float = KERNEL_SHRINKAGE,
             constraints: Optional[ParamConstraints] = None) -> ParamUpdate:
    """
    Likelihood reweighting with kernel shrinkage of the parameter block.

    Weights are normalized in log space. Kernel locations move a fraction a
    toward the posterior mean and the covariance is scaled by h^2 = 1 - a^2.
    Infeasible points get zero weight.
    """
    P = 6 * num_links
    logw = torch.log(sigma.weights) + loglik
    logw = torch.where(sigma.feasible, logw, torch.full_like(logw, -float('inf')))
    degenerate = not bool(torch.isfinite(logw).any())
    if degenerate:
        logger.warning("All sigma point weights underflowed; resetting to uniform")
        w = torch.full_like(sigma.weights, 1.0 / sigma.size)
    else:
        w = torch.exp(logw - torch.logsumexp(logw, dim=0))
    chi = sigma.points[:, P:]
    mu = w @ chi
    m = (1.0 - a) * chi + a * mu
    d = m - mu
    cov = (1.0 - a * a) * symmetrize((d * w[:, None]).T @ d)
    if constraints is not None:
        mu = constraints.project(mu)
    return ParamUpdate(mu, cov, w, degenerate)


def update_params(sigma: SigmaSet, obs: ObservationPrediction, z, num_links: int,
                  a: float = KERNEL_SHRINKAGE,
                  constraints: Optional[ParamConstraints] = None) -> ParamUpdate:
    return reweight(sigma, observation_loglik(obs.points, z, obs.r_diag), num_links, a, constraints)


# --- Pose update ------------------------------------------------------------------------

@dataclass
class PoseUpdate:
    mu_psi: torch.Tensor
    sigma_psi: torch.Tensor
    skipped: bool = False
    predicted_obs: Optional[torch.Tensor] = None


def condition_on_params(belief: JointBelief, mu_phi: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Gaussian conditional of psi given phi = mu_phi."""
    S_pp = belief.sigma_phi + COV_JITTER * torch.eye(belief.sigma_phi.shape[0], dtype=DTYPE)
    K = torch.linalg.solve(S_pp, belief.sigma_cross.T).T
    mu = belief.mu_psi + K @ (mu_phi - belief.mu_phi)
    cov = symmetrize(belief.sigma_psi - K @ belief.sigma_cross.T)
    return mu, cov


def unscented_points(mu: torch.Tensor, cov: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    2n+1 points with alpha=1, beta=2, kappa=0.

    Returns:
        Tuple (points (2n+1, n), mean weights, covariance weights)
    """
    n = mu.numel()
    root = sym_sqrt(n * cov)
    points = torch.cat([mu[None, :], mu + root, mu - root], dim=0)
    wm = torch.full((2 * n + 1,), 1.0 / (2 * n), dtype=DTYPE)
    wc = wm.clone()
    wm = torch.cat([torch.zeros(1, dtype=DTYPE), wm[1:]])
    wc = torch.cat([torch.full((1,), 2.0, dtype=DTYPE), wc[1:]])
    return points, wm, wc


def update_pose(mu_psi: torch.Tensor, sigma_psi: torch.Tensor, z, r_diag: torch.Tensor,
                obs_fn: Callable[[torch.Tensor], torch.Tensor]) -> PoseUpdate:
    """
    Unscented Kalman update of the conditional pose belief.

    The innovation covariance is never formed; with the deviations Z, the
    covariance weights W and diagonal R, the update only needs the
    (2n+1)-square system M = W^-1 + Z^T R^-1 Z.

    Args:
        mu_psi: Conditional mean (n,)
        sigma_psi: Conditional covariance (n, n)
        z: Observation (m,)
        r_diag: Diagonal observation noise (m,)
        obs_fn: Maps points (K, n) to observations (K, m)

    Returns:
        PoseUpdate; skipped is set when M is singular (covariance inflated instead)
    """
    z = torch.as_tensor(z, dtype=DTYPE).reshape(-1)
    X, wm, wc = unscented_points(mu_psi, sigma_psi)
    Z = obs_fn(X)
    z_hat = wm @ Z
    A = X - mu_psi
    Zc = (Z - z_hat).T
    r_inv = 1.0 / r_diag
    G = Zc.T @ (Zc * r_inv[:, None])
    M = symmetrize(torch.diag(1.0 / wc) + G)
    chol, info = torch.linalg.cholesky_ex(M)
    if int(info) != 0 or not torch.isfinite(M).all():
        logger.warning("Innovation system is singular; skipping the pose update")
        return PoseUpdate(mu_psi, sigma_psi * INFLATION_ON_SKIP, True, z_hat)
    b = Zc.T @ (r_inv * (z - z_hat))
    mu = mu_psi + A.T @ torch.cholesky_solve(b[:, None], chol).reshape(-1)
    spread = (A * wc[:, None]).T @ A
    cov = sigma_psi - spread + A.T @ torch.cholesky_solve(A, chol)
    return PoseUpdate(mu, symmetrize(cov), False, z_hat)


# --- Recomposition and full step ---------------------------------------------------------

def recompose(sigma_psi: torch.Tensor, sigma_phi: torch.Tensor, cross: torch.Tensor) -> torch.Tensor:
    """
    Joint covariance from the updated blocks and the carried cross block.

    The cross block is shrunk when its normalized correlation would break
    positive semi-definiteness.
    """
    whitened = _inv_sqrt(sigma_psi) @ cross @ _inv_sqrt(sigma_phi)
    rho = torch.linalg.matrix_norm(whitened, ord=2)
    scale = CROSS_CORRELATION_LIMIT / torch.clamp(rho, min=CROSS_CORRELATION_LIMIT)
    if float(scale) < 1.0:
        logger.debug(f"Cross-covariance shrunk by {float(scale):.4f}")
    cross = cross * scale
    top = torch.cat([sigma_psi, cross], dim=1)
    bottom = torch.cat([cross.T, sigma_phi], dim=1)
    S = symmetrize(torch.cat([top, bottom], dim=0))
    return S + COV_JITTER * torch.eye(S.shape[0], dtype=DTYPE)


@dataclass
class FilterStepResult:
    """Posterior belief plus the intermediate quantities used for training and diagnostics."""
    belief: JointBelief
    prediction: Prediction
    weights: torch.Tensor
    force_mean: torch.Tensor
    force_var: torch.Tensor
    predicted_obs: torch.Tensor
    r_diag: torch.Tensor
    var_v: torch.Tensor
    var_t: torch.Tensor
    degenerate: bool = False
    skipped: bool = False
    infeasible: int = 0


@dataclass
class DualFilter:
    """
    Filter configuration bound to one object.

    cloud is the initial segmented cloud used to predict images; obj carries
    the link geometry (needed by the analytical model and for constraints).
    """
    model: ProcessModel
    obj: RigidObjectModel
    cloud: SegmentedCloud
    Q: Optional[torch.Tensor] = None
    num_points: int = NUM_SIGMA_POINTS
    shrinkage: float = KERNEL_SHRINKAGE
    camera: Optional[CameraModel] = None
    constraints: ParamConstraints = field(init=False)

    def __post_init__(self):
        self.constraints = ParamConstraints.from_shapes(self.obj.shapes)
        if self.Q is None:
            self.Q = default_process_noise(self.obj.num_links)

    def initial_belief(self, poses=None, **kwargs) -> JointBelief:
        poses = self.obj.initial_state()[:, :3] if poses is None else poses
        return initial_belief(poses, self.obj.num_links, **kwargs)

    def step(self, belief: JointBelief, action: ActionAffordance, z, robot_xy=None,
             seed=0) -> FilterStepResult:
        """
        predict -> predict_observation -> update_params -> update_pose -> recompose.

        Args:
            belief: Belief before the step
            action: Robot action
            z: Observation after the step (4098,)
            robot_xy: Robot position at the start of the step
            seed: Seed or generator

        Returns:
            FilterStepResult; the belief is always returned, problems are flagged
        """
        L = belief.num_links
        pred = predict(belief, action, self.model, self.Q, seed, robot_xy, self.obj,
                       self.constraints, self.num_points)
        obs = predict_observation(pred, self.cloud, self.model, z, self.camera)
        params = update_params(pred.sigma, obs, z, L, self.shrinkage, self.constraints)

        force = params.weights @ pred.force_mean
        force_var = params.weights @ pred.force_var
        mu_c, cov_c = condition_on_params(pred.belief, params.mu_phi)

        def obs_fn(X):
            visual = render_points(X, self.cloud, L, self.camera)
            return torch.cat([visual, force.detach().expand(X.shape[0], 2)], dim=1)

        pose = update_pose(mu_c, cov_c, z, obs.r_diag, obs_fn)
        mu = torch.cat([pose.mu_psi, params.mu_phi])
        sigma = recompose(pose.sigma_psi, params.sigma_phi, pred.belief.sigma_cross)
        post = JointBelief(mu, sigma, L)
        infeasible = int((~pred.sigma.feasible).sum())
        return FilterStepResult(post, pred, params.weights, force, force_var, pose.predicted_obs,
                                obs.r_diag, obs.var_v, obs.var_t, params.degenerate, pose.skipped,
                                infeasible)

    def run(self, belief: JointBelief, action: ActionAffordance, observations, robot_positions,
            seed=0):
        """
        Filter a whole interaction.

        Args:
            belief: Initial belief
            action: Action of the interaction
            observations: (T, 4098) observations
            robot_positions: (T, 2) robot position at the start of each step
            seed: Base seed; step k uses seed + k

        Returns:
            List of FilterStepResult
        """
        results = []
        for k, (z, robot_xy) in enumerate(zip(observations, robot_positions)):
            res = self.step(belief, action, z, robot_xy, int(seed) + k)
            results.append(res)
            belief = res.belief
        return results
