"""
End-to-end training of the learned process and noise models through the dual filter.

Losses are computed on whole filter runs over trajectory segments, so the
gradients flow through sampling, prediction, reweighting and the unscented
update. Iterative training alternates exploratory interactions with training
epochs until the validation error drops below a threshold.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..config.constants import (
    Policy, LEARNING_RATE, BUFFER_CAPACITY, ACTIONS_PER_ROUND, SEGMENTS_PER_TRAJECTORY,
    PLATEAU_EPOCHS, PLATEAU_IMPROVEMENT, INTERACTION_BUDGET, MAX_EPOCHS_PER_ROUND, BATCH_SIZE,
    GRAD_CLIP_NORM, NUM_SIGMA_POINTS, HORIZON_STEPS, IG_LOOKAHEAD_STEPS, AFFORDANCE_CANDIDATES,
    VALIDATION_INTERACTIONS
)
from .action_selector import choose_affordance, sample_affordances
from .camera import CameraModel
from .dual_filter import DualFilter, initial_belief
from .errors import ConfigError, GraspError
from .networks import DTYPE
from .observation import VISUAL_SIZE, render_visual
from .process_models import ProcessModel
from .push_simulator import RigidObjectModel, object_cloud, rollout
from .trajectory_buffer import TrainingSegment, TrajectoryBuffer

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class TrainLosses:
    total: float
    nll: float = 0.0
    mse: float = 0.0
    tactile_nll: float = 0.0
    obs_nll: float = 0.0
    rejected: bool = False


@dataclass
class TrainState:
    """Learned model, its optimizer and the trajectory buffer."""
    model: ProcessModel
    optimizer: torch.optim.Optimizer
    buffer: TrajectoryBuffer
    lr: float = LEARNING_RATE
    steps: int = 0
    rejected: int = 0

    @classmethod
    def create(cls, model: ProcessModel, lr: float = LEARNING_RATE,
               capacity: int = BUFFER_CAPACITY) -> 'TrainState':
        if not model.learned:
            raise ConfigError(f"The {model.model_type} model has no trainable parameters")
        optimizer = torch.optim.Adam(model.parameters(), lr=lr)
        return cls(model, optimizer, TrajectoryBuffer(capacity), lr)

    def set_lr(self, lr: float):
        self.lr = lr
        for group in self.optimizer.param_groups:
            group['lr'] = lr


def gaussian_nll(x: torch.Tensor, mu: torch.Tensor, cov: torch.Tensor) -> torch.Tensor:
    """Negative log-density of x under N(mu, cov), per dimension."""
    D = x.numel()
    chol, info = torch.linalg.cholesky_ex(cov)
    if int(info) != 0:
        return torch.tensor(float('inf'), dtype=DTYPE)
    d = torch.linalg.solve_triangular(chol, (x - mu).reshape(-1, 1), upper=False).reshape(-1)
    logdet = 2.0 * torch.log(torch.diagonal(chol)).sum()
    return 0.5 * (d @ d + logdet + D * _LOG_2PI) / D


def diagonal_nll(x: torch.Tensor, mu: torch.Tensor, var: torch.Tensor) -> torch.Tensor:
    """Mean per-dimension negative log-density under independent Gaussians."""
    var = torch.broadcast_to(var, mu.shape)
    return 0.5 * (torch.log(var) + _LOG_2PI + (x - mu) ** 2 / var).mean()


def segment_loss(model: ProcessModel, segment: TrainingSegment, seed: int = 0,
                 num_points: int = NUM_SIGMA_POINTS,
                 camera: Optional[CameraModel] = None) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """
    Filter a segment and score the beliefs against ground truth.

    The loss sums, averaged over steps, the NLL of the true [state, params]
    under the joint belief, the squared errors of the belief mean and the
    contact force, the NLL of the true force under the predicted force
    variance, and the NLL of the observation under the predicted noise with the
    image rendered at the true pose.

    Args:
        model: Learned process model
        segment: Trajectory segment with its object and initial cloud
        seed: Filter seed; step k uses seed + k
        num_points: Sigma points per step
        camera: Observation camera

    Returns:
        Tuple (total loss tensor, named loss terms)
    """
    obj, traj = segment.obj, segment.traj
    filt = DualFilter(model, obj, segment.cloud, num_points=num_points, camera=camera)
    belief = initial_belief(traj.initial_state[:, :3], obj.num_links)
    phi_true = torch.as_tensor(obj.param_vector(), dtype=DTYPE)
    terms = {k: torch.zeros((), dtype=DTYPE) for k in ('nll', 'mse', 'tactile_nll', 'obs_nll')}
    for k, robot_xy in enumerate(segment.robot_start):
        z = torch.as_tensor(traj.observations[k], dtype=DTYPE)
        res = filt.step(belief, traj.action, z, robot_xy, int(seed) + k)
        belief = res.belief
        truth = torch.cat([torch.as_tensor(traj.states[k].reshape(-1), dtype=DTYPE), phi_true])
        force = torch.as_tensor(traj.forces[k], dtype=DTYPE)
        image = torch.as_tensor(render_visual(traj.states[k], segment.cloud, camera), dtype=DTYPE)

        terms['nll'] = terms['nll'] + gaussian_nll(truth, belief.mu, belief.sigma)
        terms['mse'] = terms['mse'] + ((belief.mu - truth) ** 2).mean() + ((res.force_mean - force) ** 2).mean()
        terms['tactile_nll'] = terms['tactile_nll'] + diagonal_nll(force, res.force_mean, res.force_var)
        obs = torch.cat([image, force])
        var = torch.cat([res.var_v.reshape(1).expand(VISUAL_SIZE), res.var_t.reshape(1).expand(2)])
        terms['obs_nll'] = terms['obs_nll'] + diagonal_nll(z, obs, var)
    T = max(len(traj), 1)
    terms = {k: v / T for k, v in terms.items()}
    return sum(terms.values()), terms


def train_step(state: TrainState, batch: Sequence[TrainingSegment], seed: int = 0,
               num_points: int = NUM_SIGMA_POINTS,
               camera: Optional[CameraModel] = None) -> Tuple[TrainState, TrainLosses]:
    """
    One optimizer step on the mean loss of a minibatch of segments.

    A non-finite loss or gradient rejects the step and halves the learning rate.
    """
    model = state.model
    model.train()
    state.optimizer.zero_grad()
    total = torch.zeros((), dtype=DTYPE)
    parts = {}
    for i, seg in enumerate(batch):
        loss, terms = segment_loss(model, seg, int(seed) + 1000 * i, num_points, camera)
        total = total + loss
        for k, v in terms.items():
            parts[k] = parts.get(k, 0.0) + float(v.detach())
    n = max(len(batch), 1)
    total = total / n
    parts = {k: v / n for k, v in parts.items()}

    finite = bool(torch.isfinite(total))
    if finite:
        total.backward()
        finite = all(torch.isfinite(p.grad).all() for p in model.parameters() if p.grad is not None)
    if not finite:
        state.optimizer.zero_grad()
        state.set_lr(state.lr * 0.5)
        state.rejected += 1
        logger.warning(f"Non-finite loss or gradient; step rejected, learning rate now {state.lr:.3g}")
        return state, TrainLosses(float(total.detach()), rejected=True, **parts)

    torch.nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP_NORM)
    state.optimizer.step()
    state.steps += 1
    return state, TrainLosses(float(total.detach()), **parts)


def validation_error(model: ProcessModel, segments: Sequence[TrainingSegment]) -> float:
    """One-step pose and force MSE of the model started from the true state and parameters."""
    errors = []
    with torch.no_grad():
        for seg in segments:
            traj, obj = seg.traj, seg.obj
            L = obj.num_links
            before = np.concatenate([traj.initial_state[None], traj.states[:-1]])
            phi = obj.param_vector()
            for k, robot_xy in enumerate(seg.robot_start):
                sigma = torch.as_tensor(np.concatenate([before[k].reshape(-1), phi])[None], dtype=DTYPE)
                out = model(sigma, traj.action, robot_xy, obj)
                pred = out.psi.reshape(L, 6)[:, :3].numpy()
                pose_err = np.mean((pred - traj.states[k][:, :3]) ** 2)
                force_err = np.mean((out.force_mean.reshape(2).numpy() - traj.forces[k]) ** 2)
                errors.append(pose_err + force_err)
    return float(np.mean(errors)) if errors else float('inf')


def train_epochs(state: TrainState, validation: Sequence[TrainingSegment], seed: int = 0,
                 max_epochs: int = MAX_EPOCHS_PER_ROUND, batch_size: int = BATCH_SIZE,
                 num_points: int = NUM_SIGMA_POINTS, camera: Optional[CameraModel] = None) -> List[float]:
    """
    Train on the buffer until the validation error plateaus.

    The plateau is reached when the best error of the last PLATEAU_EPOCHS
    epochs improves less than PLATEAU_IMPROVEMENT on the best error before them.

    Returns:
        Validation error after every epoch
    """
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(max_epochs):
        for b, batch in enumerate(state.buffer.minibatches(batch_size, rng)):
            state, losses = train_step(state, batch, int(seed) + 7919 * epoch + b, num_points, camera)
            logger.debug(f"epoch {epoch} batch {b}: loss {losses.total:.4g}")
        history.append(validation_error(state.model, validation))
        logger.info(f"Epoch {epoch}: validation error {history[-1]:.4g}")
        if len(history) > PLATEAU_EPOCHS:
            before = min(history[:-PLATEAU_EPOCHS])
            recent = min(history[-PLATEAU_EPOCHS:])
            if recent > before * (1.0 - PLATEAU_IMPROVEMENT):
                break
    return history


def record_segments(objects: Sequence[RigidObjectModel], kind, count: int, seed: int = 0,
                    steps: int = HORIZON_STEPS, camera: Optional[CameraModel] = None,
                    parts: int = SEGMENTS_PER_TRAJECTORY) -> List[TrainingSegment]:
    """Roll out count random interactions per object and split them into segments."""
    rng = np.random.default_rng(seed)
    segments = []
    for obj in objects:
        cloud = object_cloud(obj, rng_seed=int(rng.integers(1 << 31)))
        for action in sample_affordances(obj.shapes, kind, count, int(rng.integers(1 << 31))):
            traj = rollout(obj, action, camera, int(rng.integers(1 << 31)), steps, cloud=cloud)
            segments += [TrainingSegment(obj, cloud, seg) for seg in traj.split(parts)]
    return segments


@dataclass
class IterativeTrainResult:
    state: TrainState
    interactions: int
    converged: bool
    validation_history: List[float] = field(default_factory=list)
    rounds: int = 0


def iterative_train(state: TrainState, objects: Sequence[RigidObjectModel],
                    val_objects: Sequence[RigidObjectModel], policy: Policy = Policy.ACTIVE,
                    threshold: float = 0.0, seed: int = 0, budget: int = INTERACTION_BUDGET,
                    actions_per_round: int = ACTIONS_PER_ROUND, steps: int = HORIZON_STEPS,
                    num_points: int = NUM_SIGMA_POINTS, max_epochs: int = MAX_EPOCHS_PER_ROUND,
                    batch_size: int = BATCH_SIZE, lookahead: int = IG_LOOKAHEAD_STEPS,
                    candidates: int = AFFORDANCE_CANDIDATES,
                    camera: Optional[CameraModel] = None) -> IterativeTrainResult:
    """
    Alternate exploratory interactions and training until the model is good enough.

    Every round selects actions_per_round interactions with the policy on
    randomly drawn training objects, splits each rollout into segments for the
    buffer and trains until the validation error plateaus.

    Args:
        state: Training state of a learned model
        objects: Training objects
        val_objects: Objects for the validation segments
        policy: active, uniform or random action selection
        threshold: Stop once the validation one-step error is below it
        seed: Seed of object choice, affordances, rollouts and training
        budget: Maximum number of interactions
        actions_per_round: Interactions per round
        steps: Steps per rollout
        num_points: Sigma points in training and information gain
        max_epochs: Epoch cap per round
        batch_size: Segments per optimizer step
        lookahead: Information-gain look-ahead steps
        candidates: Affordance candidates per decision
        camera: Observation camera

    Returns:
        IterativeTrainResult; converged is False when the budget ran out first
    """
    if not objects or not val_objects:
        raise ConfigError("Iterative training needs training and validation objects")
    kind = state.model.interaction
    rng = np.random.default_rng(seed)
    validation = record_segments(val_objects, kind, VALIDATION_INTERACTIONS, seed + 1, steps, camera)
    interactions, rounds, history = 0, 0, []
    converged = False
    while interactions < budget:
        rounds += 1
        added = 0
        for _ in range(actions_per_round * 4):
            if added == actions_per_round or interactions >= budget:
                break
            obj = objects[int(rng.integers(len(objects)))]
            cloud = object_cloud(obj, rng_seed=int(rng.integers(1 << 31)))
            belief = initial_belief(obj.initial_state()[:, :3], obj.num_links)
            try:
                action = choose_affordance(policy, belief, obj.shapes, kind, state.model,
                                           int(rng.integers(1 << 31)), interactions, obj,
                                           candidates, lookahead, num_points)
            except GraspError as exc:
                logger.warning(f"Skipping {obj.name}: {exc}")
                continue
            traj = rollout(obj, action, camera, int(rng.integers(1 << 31)), steps, cloud=cloud)
            state.buffer.add_trajectory(obj, cloud, traj, SEGMENTS_PER_TRAJECTORY)
            interactions += 1
            added += 1
        if added == 0:
            raise ConfigError(f"No {kind.value} affordance could be executed on the training objects")

        history += train_epochs(state, validation, seed + rounds, max_epochs, batch_size,
                                num_points, camera)
        logger.info(f"Round {rounds}: {interactions} interactions, validation error {history[-1]:.4g}")
        if history[-1] < threshold:
            converged = True
            break
    if not converged:
        logger.warning(f"Interaction budget of {budget} exhausted before reaching {threshold:.3g}")
    return IterativeTrainResult(state, interactions, converged, history, rounds)
