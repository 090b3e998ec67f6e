"""
Exploratory action selection.

Chooses the interaction type from the perceived object, samples push or pull
affordances on the fitted footprint of the largest link and ranks them by the
N-step information gain of the dual-filter belief.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from ..config.constants import (
    ActionKind, Policy, AFFORDANCE_CANDIDATES, DIRECTION_JITTER_DEG, IG_LOOKAHEAD_STEPS,
    PULL_Y_THRESHOLD, PUSH_SPEED, GRIPPER_SPAN, COV_JITTER, NUM_SIGMA_POINTS, DT
)
from ..utils.geometry import RigidGeometry
from .dual_filter import JointBelief, ParamConstraints, SigmaSet, advance_points, sample_sigma
from .errors import DomainError, GraspError
from .process_models import ProcessModel
from .push_simulator import ActionAffordance, RigidObjectModel
from .shape_fitter import FitResult
from .superquadric import (
    SuperquadricParams, footprint_area, footprint_normal, footprint_outline, footprint_radius
)

logger = logging.getLogger(__name__)

# Resolution of the footprint outline used for arc-length sampling
OUTLINE_RESOLUTION = 512

Fits = Sequence[Union[FitResult, SuperquadricParams]]


@dataclass
class AffordanceCandidate:
    affordance: ActionAffordance
    ig_score: float
    singular: bool = False

    def __post_init__(self):
        if not np.isfinite(self.ig_score):
            raise DomainError(f"Non-finite information gain {self.ig_score}")


def fitted_shapes(fits: Fits) -> List[SuperquadricParams]:
    return [f.sq if isinstance(f, FitResult) else f for f in fits]


def select_action_type(fits: Fits, initial_pose) -> ActionKind:
    """
    Push homogeneous objects; pull multi-link objects lying close to the robot.

    Args:
        fits: One fitted superquadric per link
        initial_pose: Object pose (x, y, theta); only y is used

    Returns:
        ActionKind
    """
    if len(fits) == 0:
        raise DomainError("No shape fits available")
    if len(fits) == 1:
        return ActionKind.PUSH
    y0 = float(np.asarray(initial_pose, dtype=float).reshape(-1)[1])
    return ActionKind.PULL if y0 < PULL_Y_THRESHOLD else ActionKind.PUSH


def largest_link(shapes: Sequence[SuperquadricParams]) -> int:
    areas = [footprint_area(sq) for sq in shapes]
    return int(np.argmax(areas))


def grasp_width(sq: SuperquadricParams, local_normal) -> np.ndarray:
    """Footprint width across the frame origin along local normal directions (N, 2)."""
    n = np.asarray(local_normal, dtype=float).reshape(-1, 2)
    phi = np.arctan2(n[:, 1], n[:, 0])
    return footprint_radius(sq, phi) + footprint_radius(sq, phi + np.pi)


def _arc_points(sq: SuperquadricParams, s) -> np.ndarray:
    """Local outline points at arc-length fractions s in [0, 1)."""
    outline = footprint_outline(sq, OUTLINE_RESOLUTION)
    closed = np.vstack([outline, outline[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    target = (np.asarray(s, dtype=float) % 1.0) * cum[-1]
    return np.stack([np.interp(target, cum, closed[:, 0]), np.interp(target, cum, closed[:, 1])], -1)


def boundary_affordance(sq: SuperquadricParams, s: float, delta: float, kind: ActionKind,
                        link: int, speed: float = PUSH_SPEED) -> ActionAffordance:
    """
    Affordance at arc-length fraction s of the world-placed footprint of sq.

    Pushes head along the inward normal, pulls along the outward normal, both
    rotated by delta radians.
    """
    local = _arc_points(sq, [s])
    n_local = footprint_normal(sq, local)[0]
    point = RigidGeometry.local_to_world_2d(local[0], sq.pose)
    n = RigidGeometry.rotate_vectors_2d(n_local, sq.theta0)
    if ActionKind(kind) is ActionKind.PUSH:
        n = -n
    return ActionAffordance(kind, point, float(np.arctan2(n[1], n[0]) + delta), speed, link)


def sample_affordances(fits: Fits, kind: ActionKind, M: int = AFFORDANCE_CANDIDATES, seed=0,
                       uniform: bool = False) -> List[ActionAffordance]:
    """
    Sample M contact (push) or grasp (pull) affordances on the largest fitted link.

    Points are drawn uniformly by arc length along the footprint boundary and
    directions get a uniform perturbation of +-5 degrees.

    Args:
        fits: Fitted shapes, one per link
        kind: push or pull
        M: Number of candidates
        seed: Seed of the boundary and direction draws
        uniform: Evenly spaced boundary points without direction perturbation

    Returns:
        List of ActionAffordance

    Raises:
        GraspError: pull requested but no boundary point fits in the gripper
    """
    if M < 1:
        raise DomainError(f"Need at least one candidate, got M={M}")
    kind = ActionKind(kind)
    shapes = fitted_shapes(fits)
    link = largest_link(shapes)
    sq = shapes[link]
    rng = np.random.default_rng(seed)
    jitter = np.deg2rad(DIRECTION_JITTER_DEG)

    if kind is ActionKind.PULL:
        grid = np.arange(OUTLINE_RESOLUTION) / OUTLINE_RESOLUTION
        widths = grasp_width(sq, footprint_normal(sq, _arc_points(sq, grid)))
        graspable = grid[widths <= GRIPPER_SPAN]
        if graspable.size == 0:
            raise GraspError(f"Link {link} is wider than the gripper span {GRIPPER_SPAN} m everywhere")
        step = 1.0 / OUTLINE_RESOLUTION
        if uniform:
            s = graspable[np.linspace(0, graspable.size, M, endpoint=False).astype(int)]
        else:
            s = rng.choice(graspable, M) + rng.uniform(0.0, step, M)
    elif uniform:
        s = np.arange(M) / M
    else:
        s = rng.uniform(0.0, 1.0, M)

    delta = np.zeros(M) if uniform else rng.uniform(-jitter, jitter, M)
    return [boundary_affordance(sq, s[i], delta[i], kind, link) for i in range(M)]


def gaussian_kl(mu1, cov1, mu0, cov0, jitter: float = COV_JITTER) -> Tuple[float, bool]:
    """
    KL(N(mu1, cov1) || N(mu0, cov0)) in closed form.

    cov0 gets jitter on its diagonal when its Cholesky factorization fails.

    Returns:
        Tuple (divergence >= 0, singular); singular reference covariances score 0
    """
    mu1, mu0 = np.asarray(mu1, dtype=float), np.asarray(mu0, dtype=float)
    cov1, cov0 = np.asarray(cov1, dtype=float), np.asarray(cov0, dtype=float)
    k = mu0.size
    eye = np.eye(k)
    for attempt in (cov0, cov0 + jitter * eye):
        try:
            L0 = np.linalg.cholesky(attempt)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        logger.warning("Reference covariance is singular; information gain set to 0")
        return 0.0, True
    sign1, logdet1 = np.linalg.slogdet(cov1)
    if sign1 <= 0:
        sign1, logdet1 = np.linalg.slogdet(cov1 + jitter * eye)
    if sign1 <= 0:
        logger.warning("Predicted covariance is singular; information gain set to 0")
        return 0.0, True
    logdet0 = 2.0 * np.log(np.diag(L0)).sum()
    A = np.linalg.solve(L0, cov1)
    trace = np.trace(np.linalg.solve(L0.T, A))
    d = np.linalg.solve(L0, mu0 - mu1)
    kl = 0.5 * (trace + d @ d - k + logdet0 - logdet1)
    return max(float(kl), 0.0), False


def _informative_block(num_links: int) -> np.ndarray:
    """Indices of the link poses and the parameters in a sigma point."""
    poses = [6 * l + i for l in range(num_links) for i in range(3)]
    return np.array(poses + list(range(6 * num_links, 11 * num_links - 1)))


def n_step_ig(belief: JointBelief, candidate: ActionAffordance, model: ProcessModel, Q=None,
              N: int = IG_LOOKAHEAD_STEPS, seed=0, obj: Optional[RigidObjectModel] = None,
              constraints: Optional[ParamConstraints] = None, num_points: int = NUM_SIGMA_POINTS,
              sigma: Optional[SigmaSet] = None, dt: float = DT) -> Tuple[float, bool]:
    """
    Information gain of running candidate for N steps without updates.

    The sigma points are advanced through the process model and the KL
    divergence of the predicted pose/parameter Gaussian from the starting one
    is returned. Twists are left out because quasi-static models reset them.

    Args:
        belief: Current belief
        candidate: Action to score
        model: Process model
        Q: Optional diagonal process noise (6L,); selection uses none by default
        N: Look-ahead steps
        seed: Seed of the sigma draw and the process noise
        obj: Object geometry (analytical model)
        constraints: Parameter constraints
        num_points: Number of sigma points
        sigma: Shared sigma draw reused across candidates

    Returns:
        Tuple (score >= 0, singular flag)
    """
    if N < 1:
        raise DomainError(f"Look-ahead must be at least one step, got {N}")
    L = belief.num_links
    gen = torch.Generator().manual_seed(int(seed))
    if sigma is None:
        if constraints is None:
            if obj is None:
                raise DomainError("Constraints or an object are required to sample sigma points")
            constraints = ParamConstraints.from_shapes(obj.shapes)
        sigma = sample_sigma(belief, constraints, gen, num_points)
    block = _informative_block(L)
    with torch.no_grad():
        start = sigma
        mu0, cov0 = start.moments()
        points = start
        for k in range(N):
            points, _, _ = advance_points(points, candidate, model, candidate.robot_position(k * dt), obj, L)
            if Q is not None:
                q = torch.as_tensor(Q, dtype=points.points.dtype).reshape(-1).clamp(min=0.0)
                eps = torch.randn(points.size, 6 * L, generator=gen, dtype=points.points.dtype)
                moved = torch.cat([points.points[:, :6 * L] + eps * q.sqrt(), points.points[:, 6 * L:]], 1)
                points = SigmaSet(moved, points.weights, points.feasible)
            # points the model failed on are retried on the next step
            points = SigmaSet(points.points, points.weights, start.feasible)
        muN, covN = points.moments()
    mu0, cov0 = mu0.numpy()[block], cov0.numpy()[np.ix_(block, block)]
    muN, covN = muN.numpy()[block], covN.numpy()[np.ix_(block, block)]
    return gaussian_kl(muN, covN, mu0, cov0)


def score_candidates(belief: JointBelief, candidates: Sequence[ActionAffordance], model: ProcessModel,
                     seed=0, obj: Optional[RigidObjectModel] = None,
                     constraints: Optional[ParamConstraints] = None, N: int = IG_LOOKAHEAD_STEPS,
                     num_points: int = NUM_SIGMA_POINTS, Q=None) -> List[AffordanceCandidate]:
    """Score every candidate on one shared sigma draw."""
    if constraints is None:
        if obj is None:
            raise DomainError("Constraints or an object are required to sample sigma points")
        constraints = ParamConstraints.from_shapes(obj.shapes)
    shared = sample_sigma(belief, constraints, int(seed), num_points)
    scored = []
    for i, action in enumerate(candidates):
        score, singular = n_step_ig(belief, action, model, Q, N, int(seed) + 1, obj, constraints,
                                    num_points, sigma=shared)
        logger.debug(f"Candidate {i}: IG {score:.4g}")
        scored.append(AffordanceCandidate(action, score, singular))
    return scored


def select_action(belief: JointBelief, fits: Fits, kind: ActionKind, model: ProcessModel,
                  M: int = AFFORDANCE_CANDIDATES, seed=0, obj: Optional[RigidObjectModel] = None,
                  constraints: Optional[ParamConstraints] = None, N: int = IG_LOOKAHEAD_STEPS,
                  num_points: int = NUM_SIGMA_POINTS,
                  candidates: Optional[Sequence[ActionAffordance]] = None
                  ) -> Tuple[ActionAffordance, List[AffordanceCandidate]]:
    """
    Most informative of M sampled affordances.

    Ties go to the lowest candidate index.

    Returns:
        Tuple (chosen affordance, scored candidates)
    """
    if candidates is None:
        candidates = sample_affordances(fits, kind, M, seed)
    scored = score_candidates(belief, candidates, model, seed, obj, constraints, N, num_points)
    best = int(np.argmax([c.ig_score for c in scored]))
    logger.info(f"Selected candidate {best} of {len(scored)} (IG {scored[best].ig_score:.4g})")
    return scored[best].affordance, scored


def choose_affordance(policy: Policy, belief: JointBelief, fits: Fits, kind: ActionKind,
                      model: ProcessModel, seed=0, round_index: int = 0,
                      obj: Optional[RigidObjectModel] = None, M: int = AFFORDANCE_CANDIDATES,
                      N: int = IG_LOOKAHEAD_STEPS, num_points: int = NUM_SIGMA_POINTS) -> ActionAffordance:
    """
    Pick the next interaction under an exploration policy.

    active ranks sampled candidates by information gain, uniform walks evenly
    spaced boundary points in order and random takes a random candidate.
    """
    policy = Policy(policy)
    if policy is Policy.ACTIVE:
        return select_action(belief, fits, kind, model, M, seed, obj, N=N, num_points=num_points)[0]
    if policy is Policy.UNIFORM:
        ring = sample_affordances(fits, kind, M, seed, uniform=True)
        return ring[round_index % M]
    candidates = sample_affordances(fits, kind, M, seed)
    return candidates[int(np.random.default_rng(seed).integers(M))]
