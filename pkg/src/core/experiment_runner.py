"""
Experiment orchestration.

Each stage function runs one experiment on one object and returns plain
result dataclasses; ExperimentRunner ties them together over an object set,
writes unit-labelled CSV tables and SVG plots, and records per-object
failures without aborting the remaining runs.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..config.constants import ActionKind, Policy, DT
from ..config.settings import ExperimentConfig, write_manifest
from ..utils.file_operations import FileManager
from .action_selector import choose_affordance, fitted_shapes, sample_affordances, select_action_type
from .camera import CameraModel
from .change_detector import (
    ChangeDecision, LikelihoodTrace, change_detector, inject_tactile_bias, likelihood_trace, tilt_bias
)
from .controller import ControlResult, GoalSpec, icem_control
from .dual_filter import DualFilter, JointBelief, initial_belief, reset_poses
from .errors import ConfigError, GraspError, PushFilterError
from .metrics import (
    PARAM_NAMES, MetricsRecord, evaluate_params, param_ranges, summarize, tracking_mse
)
from .model_manager import ModelManager
from .object_set import ObjectSetSpec, gen_object_set, load_object_set, save_object_set, split_objects
from .process_models import ProcessModel
from .push_simulator import RigidObjectModel, Trajectory, object_cloud, rollout
from .scene import ShapeScene, Wall
from .superquadric import chamfer_distance
from .view_planner import ExplorationResult, explore_shape, sample_fit_surfaces

logger = logging.getLogger(__name__)

# Parameter covariance scale that freezes phi during tracking
FROZEN_PARAM_SCALE = 1e-3
# Tilt bias starts 2 s into the interaction
TILT_ONSET_SECONDS = 2.0
CONTROL_TRIALS = 3
# Occluding wall behind the object, seen from the robot
WALL_OFFSET = 0.12
WALL_WIDTH = 0.3
WALL_HEIGHT = 0.06


def robot_starts(traj: Trajectory) -> np.ndarray:
    """Robot position at the start of every step (T, 2)."""
    return np.array([traj.action.robot_position(t - traj.dt) for t in traj.times])


def resolve_kind(kind: str, obj: RigidObjectModel, shapes=None,
                 model: Optional[ProcessModel] = None) -> ActionKind:
    """Interaction kind for an object; 'auto' applies the push/pull rule, learned models keep theirs."""
    if model is not None and model.learned:
        return model.interaction
    if kind != 'auto':
        return ActionKind(kind)
    shapes = shapes or obj.shapes
    return select_action_type(shapes, obj.links[0].shape.pose)


def occluded_scene(obj: RigidObjectModel, seed: int = 0) -> ShapeScene:
    """Shape scene of the object with a wall standing behind it."""
    c = obj.center_xy()
    direction = c / max(np.linalg.norm(c), 1e-9)
    center = c + WALL_OFFSET * direction
    wall = Wall(center=(float(center[0]), float(center[1])), angle=float(np.arctan2(direction[1], direction[0])),
                width=WALL_WIDTH, height=WALL_HEIGHT)
    return ShapeScene(list(obj.shapes), wall=wall, seed=seed)


# --- Shape stage ----------------------------------------------------------------------

@dataclass
class ShapeRun:
    exploration: ExplorationResult
    chamfer: float
    shapes: list


def shape_object(obj: RigidObjectModel, policy: Policy = Policy.ACTIVE, seed: int = 0,
                 camera: Optional[CameraModel] = None, max_views: int = 8,
                 threshold: Optional[float] = None, n_views: Optional[int] = None) -> ShapeRun:
    """Explore the occluded scene of an object and score the recovered shapes by Chamfer distance."""
    scene = occluded_scene(obj, seed)
    kwargs = {}
    if threshold is not None:
        kwargs['threshold'] = threshold
    if n_views is not None:
        kwargs['n_views'] = n_views
    result = explore_shape(scene, camera or CameraModel(), policy, max_views, rng_seed=seed, **kwargs)
    if result.fits:
        samples = sample_fit_surfaces(result.fits, rng_seed=seed)
        cd = chamfer_distance(samples, scene.truth_points()) if len(samples) else float('nan')
    else:
        cd = float('nan')
    shapes = fitted_shapes(result.fits)
    if len(shapes) != obj.num_links:
        logger.warning(f"{obj.name}: recovered {len(shapes)} shapes for {obj.num_links} links; "
                       f"using the object geometry for interaction")
        shapes = list(obj.shapes)
    return ShapeRun(result, cd, shapes)


# --- Parameter inference ----------------------------------------------------------------

@dataclass
class InferenceRun:
    """Belief after every interaction with the matching parameter errors."""
    record: MetricsRecord
    belief: JointBelief
    rows: List[list] = field(default_factory=list)
    traces: List[float] = field(default_factory=list)


def filter_interaction(model: ProcessModel, obj: RigidObjectModel, belief: JointBelief,
                       traj: Trajectory, seed: int = 0, num_points: int = 100,
                       shrinkage: Optional[float] = None, cloud=None):
    """Run the dual filter over one recorded interaction."""
    kwargs = {'num_points': num_points}
    if shrinkage is not None:
        kwargs['shrinkage'] = shrinkage
    filt = DualFilter(model, obj, cloud or object_cloud(obj, rng_seed=seed), **kwargs)
    with torch.no_grad():
        return filt.run(belief, traj.action, traj.observations, robot_starts(traj), seed)


def infer_object(obj: RigidObjectModel, model: ProcessModel, ranges, policy: Policy = Policy.ACTIVE,
                 interactions: int = 6, seed: int = 0, kind: str = 'auto', shapes=None,
                 steps: int = 75, candidates: int = 32, lookahead: int = 38, num_points: int = 100,
                 shrinkage: Optional[float] = None) -> InferenceRun:
    """
    Alternate action selection and filtering on one object.

    Every interaction starts from the object's initial configuration; the
    parameter belief carries over while the pose block restarts from the prior.

    Args:
        obj: Simulated object (ground truth)
        model: Process model of the filter
        ranges: Parameter ranges of the object set for NRMSE
        policy: Action selection policy
        interactions: Number of interactions
        seed: Base seed
        kind: 'auto', 'push' or 'pull'
        shapes: Perceived link shapes used for affordances (object geometry by default)
        steps: Steps per interaction

    Returns:
        InferenceRun with one row per interaction
    """
    start = time.perf_counter()
    shapes = list(shapes or obj.shapes)
    poses = obj.initial_state()[:, :3]
    belief = initial_belief(poses, obj.num_links)
    cloud = object_cloud(obj, rng_seed=seed)
    kind = resolve_kind(kind, obj, shapes, model)
    record = evaluate_params(obj.name, belief.mu_phi.numpy(), obj, ranges)
    run = InferenceRun(record, belief)
    for i in range(interactions):
        step_seed = int(seed) + 101 * (i + 1)
        try:
            action = choose_affordance(policy, belief, shapes, kind, model, step_seed, i, obj,
                                       candidates, lookahead, num_points)
        except GraspError as exc:
            logger.warning(f"{obj.name}: {exc}; falling back to pushing")
            kind = ActionKind.PUSH
            action = choose_affordance(policy, belief, shapes, kind, model, step_seed, i, obj,
                                       candidates, lookahead, num_points)
        traj = rollout(obj, action, None, step_seed, steps, cloud=cloud)
        results = filter_interaction(model, obj, belief, traj, step_seed, num_points, shrinkage, cloud)
        belief = reset_poses(results[-1].belief, poses)
        record = evaluate_params(obj.name, belief.mu_phi.numpy(), obj, ranges)
        trace = float(torch.trace(belief.sigma_phi))
        run.traces.append(trace)
        run.rows.append([obj.name, i + 1, action.kind.value, float(action.point[0]), float(action.point[1]),
                         float(action.direction)]
                        + [record.nrmse.get(name, float('nan')) for name in PARAM_NAMES]
                        + [record.overall, trace])
        logger.info(f"{obj.name} interaction {i + 1}: overall NRMSE {record.overall:.4f}, "
                    f"trace(Sigma_phi) {trace:.4g}")
    record.interactions = interactions
    record.wall_time = time.perf_counter() - start
    run.record, run.belief = record, belief
    return run


INFER_COLUMNS = [('object', '-'), ('interaction', '-'), ('kind', '-'), ('contact_x', 'm'),
                 ('contact_y', 'm'), ('direction', 'rad')] \
    + [(f"nrmse_{n}", '-') for n in PARAM_NAMES] + [('nrmse_overall', '-'), ('trace_sigma_phi', 'mixed')]


# --- Pose tracking ---------------------------------------------------------------------

@dataclass
class TrackingRun:
    with_params: float
    without_params: float
    estimated: np.ndarray
    frozen: np.ndarray
    truth: np.ndarray


def track_object(obj: RigidObjectModel, model: ProcessModel, seed: int = 0, phi=None,
                 kind: str = 'auto', steps: int = 75, num_points: int = 100) -> TrackingRun:
    """
    Track one interaction with and without parameter knowledge.

    With phi given, the 'with' run freezes the parameters at phi; otherwise
    the parameter belief is left free. The 'without' run freezes them at the
    uninformed prior mean.
    """
    kind = resolve_kind(kind, obj, model=model)
    try:
        action = sample_affordances(obj.shapes, kind, 1, seed)[0]
    except GraspError:
        action = sample_affordances(obj.shapes, ActionKind.PUSH, 1, seed)[0]
    traj = rollout(obj, action, None, seed, steps)
    poses = obj.initial_state()[:, :3]
    L = obj.num_links
    if phi is None:
        informed = initial_belief(poses, L)
    else:
        informed = initial_belief(poses, L, param_mean=phi, param_std_scale=FROZEN_PARAM_SCALE)
    frozen = initial_belief(poses, L, param_std_scale=FROZEN_PARAM_SCALE)
    cloud = object_cloud(obj, rng_seed=seed)
    est = np.array([r.belief.poses() for r in filter_interaction(model, obj, informed, traj, seed,
                                                                 num_points, cloud=cloud)])
    base = np.array([r.belief.poses() for r in filter_interaction(model, obj, frozen, traj, seed,
                                                                  num_points, cloud=cloud)])
    truth = traj.poses
    run = TrackingRun(tracking_mse(est, truth), tracking_mse(base, truth), est, base, truth)
    logger.info(f"{obj.name} tracking MSE: {run.with_params:.3e} with parameters, "
                f"{run.without_params:.3e} without")
    return run


# --- Goal-driven control ---------------------------------------------------------------

@dataclass
class ControlComparison:
    estimated: List[ControlResult]
    default: List[ControlResult]

    @property
    def estimated_cost(self) -> float:
        return float(np.median([r.cost for r in self.estimated]))

    @property
    def default_cost(self) -> float:
        return float(np.median([r.cost for r in self.default]))


def control_object(obj: RigidObjectModel, model: ProcessModel, phi, goal: GoalSpec, seed: int = 0,
                   budget: int = 10, trials: int = CONTROL_TRIALS, **kwargs) -> ControlComparison:
    """Push toward a goal planning with estimated and with default parameters, several trials each."""
    poses = obj.initial_state()[:, :3]
    estimated = initial_belief(poses, obj.num_links, param_mean=phi)
    default = initial_belief(poses, obj.num_links)
    out = ControlComparison([], [])
    for t in range(trials):
        out.estimated.append(icem_control(estimated, model, goal, obj, budget, seed + t, **kwargs))
        out.default.append(icem_control(default, model, goal, obj, budget, seed + t, **kwargs))
    logger.info(f"{obj.name} control cost: {out.estimated_cost:.3e} estimated, "
                f"{out.default_cost:.3e} default")
    return out


# --- Change detection ------------------------------------------------------------------

@dataclass
class DetectionRun:
    decision: ChangeDecision
    trace: LikelihoodTrace
    injected_step: Optional[int]
    dt: float = DT

    @property
    def onset_seconds(self) -> float:
        return float('nan') if self.decision.onset is None else self.decision.onset * self.dt


def detect_object(obj: RigidObjectModel, model: ProcessModel, seed: int = 0, tilt: bool = False,
                  phi=None, steps: int = 75, window: int = 8, ratio: float = 0.5,
                  calibration_seconds: float = 1.0, num_points: int = 100) -> DetectionRun:
    """
    Monitor the observation likelihood of one push, optionally with a tilted-support analog.

    The filter runs with the parameters frozen at phi (the true parameters by default).
    """
    action = sample_affordances(obj.shapes, ActionKind.PUSH, 1, seed)[0]
    traj = rollout(obj, action, None, seed, steps)
    injected = None
    if tilt:
        injected = int(round(TILT_ONSET_SECONDS / traj.dt))
        traj = inject_tactile_bias(traj, tilt_bias(obj, action.direction, action.link), injected)
    phi = obj.param_vector() if phi is None else phi
    belief = initial_belief(obj.initial_state()[:, :3], obj.num_links, param_mean=phi,
                            param_std_scale=FROZEN_PARAM_SCALE)
    results = filter_interaction(model, obj, belief, traj, seed, num_points)
    trace = likelihood_trace(results, traj.observations)
    decision = change_detector(trace.tactile, window, traj.dt, calibration_seconds, ratio)
    return DetectionRun(decision, trace, injected, traj.dt)


# --- Runner ------------------------------------------------------------------------------

class ExperimentRunner:
    """Runs the configured stages over the test objects and writes the result tables."""

    def __init__(self, config: ExperimentConfig, require_ckpt: bool = False):
        self.config = config
        self.require_ckpt = require_ckpt
        self.output_dir = config.output.directory
        self.model_manager = ModelManager()
        self.records: Dict[str, MetricsRecord] = {}
        self.estimates: Dict[str, np.ndarray] = {}
        self.shapes: Dict[str, list] = {}

    # --- Inputs -----------------------------------------------------------------------------

    def load_objects(self) -> Tuple[List[RigidObjectModel], List[RigidObjectModel]]:
        """All objects and the test split, generating and saving the set when no folder is given."""
        cfg = self.config.objects
        if cfg.folder:
            objects = load_object_set(cfg.folder)
        else:
            spec = ObjectSetSpec(dict(cfg.counts), cfg.mass_range, cfg.friction_range,
                                 cfg.joint_friction_range)
            objects = gen_object_set(spec, self.config.seed)
            save_object_set(os.path.join(self.output_dir, 'objects'), objects)
        test = split_objects(objects)[2] or list(objects)
        if cfg.limit:
            test = test[:cfg.limit]
        if not test:
            raise ConfigError("The object set is empty")
        return objects, test

    def load_model(self, num_links: int = 1) -> ProcessModel:
        cfg = self.config.filter
        if cfg.checkpoint:
            return ModelManager.read(cfg.checkpoint)
        if self.require_ckpt:
            raise ConfigError("A model checkpoint is required but none was given")
        if cfg.model != 'analytical':
            logger.warning(f"No checkpoint given; the {cfg.model} model is untrained")
        return self.model_manager.create_model(cfg.model, num_links=num_links)

    # --- Stages -----------------------------------------------------------------------------

    def _guarded(self, obj: RigidObjectModel, stage: str, fn):
        try:
            return fn()
        except PushFilterError as exc:
            logger.error(f"{stage} failed on {obj.name}: {exc}")
            record = self.records.setdefault(obj.name, MetricsRecord(obj.name))
            record.failed = True
            record.message = f"{stage}: {exc}"
            return None

    def run_shape(self, objects: Sequence[RigidObjectModel]) -> List[list]:
        cam = self.config.camera
        camera = CameraModel(fx=cam.focal, fy=cam.focal, cx=cam.width / 2.0, cy=cam.height / 2.0,
                             width=cam.width, height=cam.height)
        rows = []
        for obj in objects:
            run = self._guarded(obj, 'shape', lambda: shape_object(
                obj, Policy(self.config.interaction.policy), self.config.seed, camera, cam.max_views,
                self.config.thresholds.entropy, cam.candidate_views))
            if run is None:
                continue
            self.shapes[obj.name] = run.shapes
            self.records.setdefault(obj.name, MetricsRecord(obj.name)).chamfer = run.chamfer
            rows.append([obj.name, run.exploration.views_used, int(run.exploration.converged), run.chamfer])
        return rows

    def run_infer(self, objects, ranges, model) -> List[list]:
        it, fc = self.config.interaction, self.config.filter
        rows = []
        for obj in objects:
            run = self._guarded(obj, 'infer', lambda: infer_object(
                obj, model, ranges, Policy(it.policy), it.interactions, self.config.seed, it.kind,
                self.shapes.get(obj.name), it.steps, it.candidates, it.lookahead, fc.num_points,
                fc.shrinkage))
            if run is None:
                continue
            previous = self.records.get(obj.name)
            if previous is not None:
                run.record.chamfer = previous.chamfer
            self.records[obj.name] = run.record
            self.estimates[obj.name] = run.belief.mu_phi.numpy().copy()
            rows += run.rows
        return rows

    def run_track(self, objects, model) -> List[list]:
        it, fc = self.config.interaction, self.config.filter
        rows = []
        for obj in objects:
            run = self._guarded(obj, 'track', lambda: track_object(
                obj, model, self.config.seed, self.estimates.get(obj.name), it.kind, it.steps,
                fc.num_points))
            if run is None:
                continue
            self.records.setdefault(obj.name, MetricsRecord(obj.name)).tracking_mse = run.with_params
            rows.append([obj.name, run.with_params, run.without_params])
        return rows

    def run_control(self, objects, model) -> List[list]:
        it = self.config.interaction
        goal = GoalSpec(it.goal)
        rows = []
        for obj in objects:
            phi = self.estimates.get(obj.name, obj.param_vector())
            run = self._guarded(obj, 'control', lambda: control_object(
                obj, model, phi, goal, self.config.seed, it.control_budget,
                tolerance=self.config.thresholds.goal_tolerance))
            if run is None:
                continue
            rows.append([obj.name, run.estimated_cost, run.default_cost,
                         int(np.median([len(r.actions) for r in run.estimated]))])
        return rows

    def run_detect(self, objects, model) -> Tuple[List[list], List[list]]:
        it, th, fc = self.config.interaction, self.config.thresholds, self.config.filter
        rows, trace_rows = [], []
        for obj in objects:
            for tilt in (False, True):
                condition = 'tilt' if tilt else 'flat'
                run = self._guarded(obj, 'detect', lambda: detect_object(
                    obj, model, self.config.seed, tilt, self.estimates.get(obj.name), it.steps,
                    th.change_window, th.change_ratio, th.calibration_seconds, fc.num_points))
                if run is None:
                    continue
                injected = float('nan') if run.injected_step is None else run.injected_step * run.dt
                rows.append([obj.name, condition, int(run.decision.changed), run.onset_seconds, injected])
                for k, (v, t) in enumerate(zip(run.trace.visual, run.trace.tactile)):
                    trace_rows.append([obj.name, condition, k, (k + 1) * run.dt, float(v), float(t)])
        return rows, trace_rows

    # --- Outputs ----------------------------------------------------------------------------

    def _csv(self, name: str, columns, rows):
        path = os.path.join(self.output_dir, name)
        FileManager.write_csv(path, columns, rows)
        logger.info(f"Wrote {len(rows)} rows to {path}")

    def _plots(self, infer_rows, track_rows, control_rows):
        from ..ui.plot_canvas import PlotCanvas

        canvas = PlotCanvas()
        if infer_rows:
            series = {}
            for row in infer_rows:
                series.setdefault(row[0], ([], []))
                series[row[0]][0].append(row[1])
                series[row[0]][1].append(row[-2])
            canvas.line_plot(os.path.join(self.output_dir, 'nrmse.svg'), series,
                             'Parameter error per interaction', 'interaction', 'overall NRMSE')
        if track_rows:
            canvas.bar_plot(os.path.join(self.output_dir, 'tracking.svg'), [r[0] for r in track_rows],
                            {'estimated': [r[1] for r in track_rows], 'baseline': [r[2] for r in track_rows]},
                            'Pose tracking', 'MSE [m^2]')
        if control_rows:
            canvas.bar_plot(os.path.join(self.output_dir, 'control.svg'), [r[0] for r in control_rows],
                            {'estimated': [r[1] for r in control_rows],
                             'baseline': [r[2] for r in control_rows]},
                            'Goal-driven pushing', 'final cost')

    def run(self) -> List[MetricsRecord]:
        """
        Run every configured stage and write CSVs, plots and the manifest.

        Returns:
            One MetricsRecord per test object
        """
        os.makedirs(self.output_dir, exist_ok=True)
        objects, test = self.load_objects()
        ranges = param_ranges(objects)
        stages = self.config.output.stages
        infer_rows, track_rows, control_rows = [], [], []

        if 'shape' in stages:
            rows = self.run_shape(test)
            self._csv('shape.csv', [('object', '-'), ('views', '-'), ('converged', '-'),
                                    ('chamfer', 'm')], rows)
        groups: Dict[int, List[RigidObjectModel]] = {}
        for obj in test:
            groups.setdefault(obj.num_links, []).append(obj)
        models = {L: self.load_model(L) for L in sorted(groups)}

        if 'infer' in stages:
            for L, model in models.items():
                infer_rows += self.run_infer(groups[L], ranges, model)
            self._csv('infer.csv', INFER_COLUMNS, infer_rows)
        if 'track' in stages:
            for L, model in models.items():
                track_rows += self.run_track(groups[L], model)
            self._csv('track.csv', [('object', '-'), ('mse_with_params', 'm^2'),
                                    ('mse_without_params', 'm^2')], track_rows)
        if 'control' in stages:
            for L, model in models.items():
                control_rows += self.run_control(groups[L], model)
            self._csv('control.csv', [('object', '-'), ('cost_estimated', 'mixed'),
                                      ('cost_default', 'mixed'), ('segments', '-')], control_rows)
        if 'detect' in stages:
            detect_rows, trace_rows = [], []
            for L, model in models.items():
                rows, traces = self.run_detect(groups[L], model)
                detect_rows += rows
                trace_rows += traces
            self._csv('detect.csv', [('object', '-'), ('condition', '-'), ('changed', '-'),
                                     ('onset', 's'), ('injected', 's')], detect_rows)
            self._csv('likelihood.csv', [('object', '-'), ('condition', '-'), ('step', '-'),
                                         ('time', 's'), ('visual', '-'), ('tactile', '-')], trace_rows)

        records = [self.records.get(o.name, MetricsRecord(o.name)) for o in test]
        self._csv('metrics.csv', METRICS_COLUMNS, [metrics_row(r) for r in records])
        if self.config.output.plots:
            self._plots(infer_rows, track_rows, control_rows)
        write_manifest(self.output_dir, self.config, 'run-experiment',
                       {'objects': [o.name for o in test], 'summary': summarize(records)})
        return records


METRICS_COLUMNS = [('object', '-')] + [(f"nrmse_{n}", '-') for n in PARAM_NAMES] + [
    ('nrmse_overall', '-'), ('com_error', 'm'), ('tracking_mse', 'm^2'), ('chamfer', 'm'),
    ('interactions', '-'), ('failed', '-'), ('message', '-')]


def metrics_row(record: MetricsRecord) -> list:
    """Row of METRICS_COLUMNS; wall time is left out so tables are reproducible."""
    return ([record.object_name] + [record.nrmse.get(n, float('nan')) for n in PARAM_NAMES]
            + [record.overall, record.com_error, record.tracking_mse, record.chamfer,
               record.interactions, int(record.failed), record.message])


def run_experiment(config: ExperimentConfig, require_ckpt: bool = False) -> List[MetricsRecord]:
    return ExperimentRunner(config, require_ckpt).run()
