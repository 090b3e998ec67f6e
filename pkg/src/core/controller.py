"""
Goal-driven pushing with iterative cross-entropy model predictive control.

A plan is a sequence of push segments, each described by an arc-length
position on the contacted link's footprint and a deviation from the inward
normal. Plans are scored by rolling out the filter's process model at the
parameter estimate and the first segment of the best plan is executed before
replanning.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch

from ..config.constants import (
    ActionKind, CEM_SAMPLES, CEM_ROUNDS, CEM_ELITE_FRACTION, CEM_SEGMENT_STEPS, CEM_HORIZON,
    CEM_GOAL_TOLERANCE, CEM_DIRECTION_RANGE_DEG, CEM_ANGLE_WEIGHT, CEM_MAX_EXECUTIONS, DEFAULT_GOAL, DT
)
from ..utils.geometry import RigidGeometry
from .action_selector import boundary_affordance, largest_link
from .dual_filter import JointBelief
from .errors import DomainError
from .networks import DTYPE
from .process_models import ProcessModel
from .push_simulator import ActionAffordance, RigidObjectModel, step_object

logger = logging.getLogger(__name__)

# Smoothing of the sampling distribution between rounds
MEAN_MOMENTUM = 0.1
STD_FLOOR = 1e-3

Executor = Callable[[ActionAffordance, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GoalSpec:
    """
    Target pose for one link.

    horizon counts planned push segments of CEM_SEGMENT_STEPS steps each.
    """
    target: Tuple[float, float, float] = DEFAULT_GOAL
    horizon: int = CEM_HORIZON
    weights: Tuple[float, float, float] = (1.0, 1.0, CEM_ANGLE_WEIGHT)
    link: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'target', tuple(float(v) for v in self.target))
        object.__setattr__(self, 'weights', tuple(float(v) for v in self.weights))
        if len(self.target) != 3 or len(self.weights) != 3:
            raise DomainError("Goal target and weights need three entries (x, y, theta)")
        if self.horizon < 1:
            raise DomainError(f"Goal horizon must be at least 1, got {self.horizon}")
        if min(self.weights) < 0:
            raise DomainError("Cost weights must be non-negative")

    def cost(self, pose) -> float:
        """Weighted squared error of a pose (x, y, theta) to the target."""
        pose = np.asarray(pose, dtype=float).reshape(3)
        err = pose - np.asarray(self.target)
        err[2] = RigidGeometry.wrap_angle(err[2])
        return float(np.dot(self.weights, err ** 2))


@dataclass
class ControlResult:
    actions: List[ActionAffordance]
    pose: np.ndarray
    cost: float
    reached: bool
    elite_costs: List[List[float]] = field(default_factory=list)


def _segment_action(obj: RigidObjectModel, state: np.ndarray, link: int, s: float,
                    delta: float) -> ActionAffordance:
    sq = obj.links[link].shape.with_pose(*state[link, :3])
    return boundary_affordance(sq, s, delta, ActionKind.PUSH, link)


def model_rollout(model: ProcessModel, state: np.ndarray, phi: np.ndarray, obj: RigidObjectModel,
                  plan: np.ndarray, link: int, steps: int = CEM_SEGMENT_STEPS,
                  dt: float = DT) -> np.ndarray:
    """
    Predict the link states after executing a plan with the process model.

    Args:
        model: Process model
        state: Link states (L, 6)
        phi: Parameter estimate
        obj: Object geometry
        plan: (H, 2) arc fractions and direction deviations
        link: Contacted link
        steps: Steps per segment

    Returns:
        Final link states (L, 6)
    """
    L = obj.num_links
    state = np.asarray(state, dtype=float).reshape(L, 6)
    with torch.no_grad():
        for s, delta in plan:
            action = _segment_action(obj, state, link, s, delta)
            for k in range(steps):
                sigma = torch.as_tensor(np.concatenate([state.reshape(-1), phi])[None], dtype=DTYPE)
                out = model(sigma, action, action.robot_position(k * dt), obj)
                if not bool(out.valid[0]):
                    break
                state = out.psi.numpy().reshape(L, 6)
    return state


def simulator_executor(obj: RigidObjectModel, steps: int = CEM_SEGMENT_STEPS, dt: float = DT) -> Executor:
    """Execute push segments on the simulated object with its true parameters."""
    def execute(action: ActionAffordance, state: np.ndarray) -> np.ndarray:
        for k in range(steps):
            state = step_object(state, obj, action, dt, action.robot_position(k * dt)).state
        return state
    return execute


def _clip_plans(plans: np.ndarray, max_delta: float) -> np.ndarray:
    plans = plans.copy()
    plans[..., 0] = np.mod(plans[..., 0], 1.0)
    plans[..., 1] = np.clip(plans[..., 1], -max_delta, max_delta)
    return plans


def cem_plan(model: ProcessModel, state: np.ndarray, phi: np.ndarray, obj: RigidObjectModel,
             goal: GoalSpec, link: int, rng, samples: int = CEM_SAMPLES, rounds: int = CEM_ROUNDS,
             elite_fraction: float = CEM_ELITE_FRACTION, mean: Optional[np.ndarray] = None,
             steps: int = CEM_SEGMENT_STEPS) -> Tuple[np.ndarray, float, List[float]]:
    """
    Optimize a plan with the cross-entropy method, carrying the elites between rounds.

    Returns:
        Tuple (best plan (H, 2), its cost, best elite cost after every round)
    """
    max_delta = math.radians(CEM_DIRECTION_RANGE_DEG)
    H = goal.horizon
    mean = np.tile([0.5, 0.0], (H, 1)) if mean is None else np.array(mean, dtype=float)
    std = np.tile([0.25, max_delta / 2.0], (H, 1))
    n_elite = max(1, int(math.ceil(elite_fraction * samples)))
    elites = np.zeros((0, H, 2))
    elite_cost = np.zeros(0)
    history = []
    for r in range(rounds):
        draws = _clip_plans(mean + std * rng.standard_normal((samples, H, 2)), max_delta)
        costs = np.array([goal.cost(model_rollout(model, state, phi, obj, p, link, steps)[link, :3])
                          for p in draws])
        population = np.concatenate([elites, draws])
        scores = np.concatenate([elite_cost, costs])
        order = np.argsort(scores, kind='stable')[:n_elite]
        elites, elite_cost = population[order], scores[order]
        history.append(float(elite_cost[0]))
        mean = MEAN_MOMENTUM * mean + (1.0 - MEAN_MOMENTUM) * elites.mean(axis=0)
        std = np.maximum(elites.std(axis=0), STD_FLOOR)
        logger.debug(f"CEM round {r}: elite cost {history[-1]:.4g}")
    return elites[0], float(elite_cost[0]), history


def icem_control(belief: JointBelief, model: ProcessModel, goal: GoalSpec, obj: RigidObjectModel,
                 budget: int = CEM_MAX_EXECUTIONS, seed: int = 0, executor: Optional[Executor] = None,
                 samples: int = CEM_SAMPLES, rounds: int = CEM_ROUNDS,
                 steps: int = CEM_SEGMENT_STEPS, tolerance: float = CEM_GOAL_TOLERANCE) -> ControlResult:
    """
    Receding-horizon pushing toward a goal pose.

    The process model runs at the belief's parameter mean; executed segments
    go through executor (the simulated object by default).

    Args:
        belief: Belief providing the current link states and the parameter estimate
        model: Process model used for planning
        goal: Target pose, horizon and cost weights
        obj: Object geometry (and true physics for the default executor)
        budget: Maximum number of executed segments
        seed: Seed of the plan sampling
        executor: Maps (action, link states) to the link states after the segment
        samples: Plans per CEM round
        rounds: CEM rounds per planning call
        steps: Steps per segment
        tolerance: Goal cost below which the object counts as arrived

    Returns:
        ControlResult with the executed actions and the final cost
    """
    L = obj.num_links
    state = belief.mu_psi.detach().numpy().reshape(L, 6).copy()
    phi = belief.mu_phi.detach().numpy().copy()
    link = largest_link(obj.shapes) if goal.link is None else goal.link
    executor = executor or simulator_executor(obj, steps)
    rng = np.random.default_rng(seed)

    cost = goal.cost(state[link, :3])
    actions, histories = [], []
    mean = None
    for _ in range(budget):
        if cost < tolerance:
            break
        plan, predicted, history = cem_plan(model, state, phi, obj, goal, link, rng, samples, rounds,
                                            mean=mean, steps=steps)
        histories.append(history)
        action = _segment_action(obj, state, link, *plan[0])
        state = np.asarray(executor(action, state), dtype=float).reshape(L, 6)
        actions.append(action)
        cost = goal.cost(state[link, :3])
        mean = np.vstack([plan[1:], plan[-1:]])
        logger.info(f"Executed segment {len(actions)}: predicted {predicted:.4g}, achieved {cost:.4g}")
    reached = cost < tolerance
    if not reached:
        logger.warning(f"Control budget of {budget} segments used up; best cost {cost:.4g}")
    return ControlResult(actions, state[link, :3].copy(), cost, reached, histories)
