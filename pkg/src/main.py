"""Main entry point for the pushfilter command-line tools."""

import argparse
import logging
import os
import sys
from typing import List, Optional

import numpy as np

# Add parent directory to path to allow imports
if __name__ == '__main__':
    sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import VERSION, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE
from src.config.constants import ActionKind, Policy, DT, PUSH_SPEED
from src.config.settings import ExperimentConfig, write_manifest
from src.core.action_selector import sample_affordances, select_action_type
from src.core.controller import GoalSpec
from src.core.errors import ConfigError, PushFilterError
from src.core.experiment_runner import (
    INFER_COLUMNS, ExperimentRunner, control_object, detect_object, infer_object, run_experiment,
    shape_object, track_object
)
from src.core.metrics import param_ranges
from src.core.model_manager import ModelManager
from src.core.object_set import (
    ObjectSetSpec, gen_object_set, load_object, load_object_set, save_object_set, save_trajectory,
    split_objects
)
from src.core.push_simulator import ActionAffordance, rollout
from src.core.shape_fitter import ems_fit, multi_sq_recover
from src.core.superquadric import PointCloud
from src.core.trainer import TrainState, iterative_train
from src.utils.file_operations import FileManager

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
SQ_FIELDS = ('eps1', 'eps2', 'a_x', 'a_y', 'a_z', 'kappa1', 'kappa2', 'x0', 'y0', 'theta0', 'z0')


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting so main() controls the exit code."""

    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got '{text}'")


def _summary(title: str, items: dict):
    print(f"== {title}")
    for key, value in items.items():
        print(f"{key:>22}: {value:.6g}" if isinstance(value, float) else f"{key:>22}: {value}")


def _config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(getattr(args, 'config', None))
    if getattr(args, 'seed', None) is not None:
        config.seed = args.seed
        logger.info(f"Seed set from the command line: {config.seed}")
    if getattr(args, 'out', None):
        config.output.directory = args.out
    for name in ('policy', 'kind'):
        value = getattr(args, name, None)
        if value:
            setattr(config.interaction, name, value)
    if getattr(args, 'interactions', None):
        config.interaction.interactions = args.interactions
    if getattr(args, 'steps', None):
        config.interaction.steps = args.steps
    if getattr(args, 'num_points', None):
        config.filter.num_points = args.num_points
    if getattr(args, 'model', None):
        config.filter.model = args.model
    if getattr(args, 'checkpoint', None):
        if not os.path.exists(args.checkpoint):
            raise ConfigError(f"Checkpoint not found: {args.checkpoint}")
        config.filter.checkpoint = args.checkpoint
    return config


def _model(args, config: ExperimentConfig, num_links: int = 1):
    runner = ExperimentRunner(config, getattr(args, 'require_ckpt', False))
    return runner.load_model(num_links)


# --- Subcommands ------------------------------------------------------------------------

def cmd_gen_objects(args) -> int:
    config = _config(args)
    cfg = config.objects
    counts = dict(cfg.counts)
    if args.count is not None:
        counts = {k: args.count for k in counts}
    objects = gen_object_set(ObjectSetSpec(counts, cfg.mass_range, cfg.friction_range,
                                           cfg.joint_friction_range), config.seed)
    out = config.output.directory
    save_object_set(os.path.join(out, 'objects'), objects)
    train, val, test = split_objects(objects)
    FileManager.save_yaml(os.path.join(out, 'split.yaml'), {
        'train': [o.name for o in train], 'validation': [o.name for o in val], 'test': [o.name for o in test]})
    write_manifest(out, config, 'gen-objects')
    _summary('gen-objects', {'objects': len(objects), 'train': len(train), 'validation': len(val),
                             'test': len(test), 'folder': os.path.join(out, 'objects')})
    return EXIT_OK


def cmd_fit_shape(args) -> int:
    config = _config(args)
    points, view_ids = FileManager.load_cloud(args.cloud)
    cloud = PointCloud(points, view_ids)
    if args.multi:
        kwargs = {'O_th': args.o_th} if args.o_th is not None else {}
        fits = multi_sq_recover(cloud, rng_seed=config.seed, **kwargs)
    else:
        fits = [ems_fit(cloud, rng_seed=config.seed)]
    out = config.output.directory
    FileManager.save_yaml(os.path.join(out, 'fit.yaml'), {'fits': [
        {**{k: float(v) for k, v in zip(SQ_FIELDS, f.sq.to_vector())}, 'sigma2': float(f.sigma2),
         'iterations': int(f.iterations), 'converged': bool(f.converged), 'switches': int(f.switches)}
        for f in fits]})
    write_manifest(out, config, 'fit-shape', {'cloud': args.cloud})
    for i, f in enumerate(fits):
        _summary(f"fit {i}", {'points': len(cloud), 'sigma2': float(f.sigma2), 'nll': float(f.nll),
                              'iterations': f.iterations, 'converged': f.converged})
    return EXIT_OK


def cmd_explore_shape(args) -> int:
    config = _config(args)
    obj = load_object(args.object)
    cam = config.camera
    run = shape_object(obj, Policy(config.interaction.policy), config.seed, None,
                       args.max_views or cam.max_views, config.thresholds.entropy, cam.candidate_views)
    out = config.output.directory
    rows = [[k + 1, r.index, r.score, r.mean_entropy, r.chamfer, int(r.registered)]
            for k, r in enumerate(run.exploration.records)]
    FileManager.write_csv(os.path.join(out, 'views.csv'), [
        ('view', '-'), ('candidate', '-'), ('score', '-'), ('mean_entropy', 'nat'), ('chamfer', 'm'),
        ('registered', '-')], rows)
    merged = run.exploration.cloud
    FileManager.save_cloud(os.path.join(out, 'merged_cloud.txt'), merged.points, merged.view_ids)
    write_manifest(out, config, 'explore-shape', {'object': args.object})
    _summary('explore-shape', {'views': run.exploration.views_used, 'converged': run.exploration.converged,
                               'shapes': len(run.exploration.fits), 'chamfer': run.chamfer})
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _config(args)
    obj = load_object(args.object)
    if args.kind in ('push', 'pull'):
        kind = ActionKind(args.kind)
    else:
        kind = select_action_type(obj.shapes, obj.links[0].shape.pose)
    if args.point is not None:
        if len(args.point) != 2 or args.direction is None:
            raise ConfigError("--point needs x,y and --direction")
        action = ActionAffordance(kind, args.point, args.direction, PUSH_SPEED, args.link)
    else:
        action = sample_affordances(obj.shapes, kind, 1, config.seed)[0]
    traj = rollout(obj, action, None, config.seed, config.interaction.steps)
    out = config.output.directory
    save_trajectory(os.path.join(out, f"{obj.name}.npz"), traj)
    rows = []
    for k in range(len(traj)):
        for link in range(obj.num_links):
            x, y, theta = traj.states[k, link, :3]
            rows.append([k + 1, float(traj.times[k]), link, x, y, theta, traj.forces[k, 0], traj.forces[k, 1],
                         int(traj.sticking[k])])
    FileManager.write_csv(os.path.join(out, 'trajectory.csv'), [
        ('step', '-'), ('time', 's'), ('link', '-'), ('x', 'm'), ('y', 'm'), ('theta', 'rad'),
        ('force_x', 'N'), ('force_y', 'N'), ('sticking', '-')], rows)
    write_manifest(out, config, 'simulate', {'object': args.object})
    final = traj.final_state[0]
    _summary('simulate', {'steps': len(traj), 'kind': kind.value, 'final_x': float(final[0]),
                          'final_y': float(final[1]), 'final_theta': float(final[2]),
                          'fallback_steps': traj.fallback_steps})
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config(args)
    objects = load_object_set(args.objects) if args.objects else gen_object_set(ObjectSetSpec(
        dict(config.objects.counts), config.objects.mass_range, config.objects.friction_range,
        config.objects.joint_friction_range), config.seed)
    kind = ActionKind(args.kind if args.kind in ('push', 'pull') else ActionKind.PUSH.value)
    model_type = args.model or (config.filter.model if config.filter.model != 'analytical' else 'graph')
    train, val, _ = split_objects(objects)
    links = {o.num_links for o in train}
    if len(links) != 1 and model_type == 'ff':
        raise ConfigError("The feed-forward model needs objects with a single link count")
    manager = ModelManager()
    model = manager.create_model(model_type, kind, min(links) if links else 1)
    tc = config.training
    state = TrainState.create(model, tc.lr, tc.capacity)
    threshold = config.thresholds.validation if args.threshold is None else args.threshold
    result = iterative_train(state, train, val or train, Policy(config.interaction.policy), threshold,
                             config.seed, args.budget or tc.budget, tc.actions_per_round,
                             config.interaction.steps, config.filter.num_points, tc.max_epochs,
                             tc.batch_size, config.interaction.lookahead, config.interaction.candidates)
    out = config.output.directory
    manager.save_model(os.path.join(out, f"{model_type}_{kind.value}.ckpt"))
    FileManager.write_csv(os.path.join(out, 'training.csv'), [('epoch', '-'), ('validation_error', 'mixed')],
                          [[i + 1, e] for i, e in enumerate(result.validation_history)])
    write_manifest(out, config, 'train')
    _summary('train', {'interactions': result.interactions, 'rounds': result.rounds,
                       'converged': result.converged, 'rejected_steps': state.rejected,
                       'validation_error': result.validation_history[-1] if result.validation_history
                       else float('nan')})
    return EXIT_OK


def _ranges(args, obj):
    if args.objects:
        return param_ranges(load_object_set(args.objects))
    return param_ranges([obj])


def _nrmse_summary(record) -> dict:
    items = {f"nrmse_{k}": v for k, v in record.nrmse.items()}
    items.update({'nrmse_overall': record.overall, 'com_error': record.com_error,
                  'interactions': record.interactions})
    return items


def cmd_infer(args) -> int:
    config = _config(args)
    obj = load_object(args.object)
    model = _model(args, config, obj.num_links)
    it, fc = config.interaction, config.filter
    run = infer_object(obj, model, _ranges(args, obj), Policy(it.policy), it.interactions, config.seed,
                       it.kind, None, it.steps, it.candidates, it.lookahead, fc.num_points, fc.shrinkage)
    out = config.output.directory
    FileManager.write_csv(os.path.join(out, 'infer.csv'), INFER_COLUMNS, run.rows)
    write_manifest(out, config, 'infer', {'object': args.object})
    _summary(f"infer {obj.name}", _nrmse_summary(run.record))
    return EXIT_OK


def cmd_explore(args) -> int:
    config = _config(args)
    obj = load_object(args.object)
    cam = config.camera
    policy = Policy(config.interaction.policy)
    shape = shape_object(obj, policy, config.seed, None, cam.max_views, config.thresholds.entropy,
                         cam.candidate_views)
    kind = select_action_type(shape.shapes, obj.links[0].shape.pose)
    logger.info(f"{obj.name}: {len(shape.shapes)} link(s), selected {kind.value}")
    model = _model(args, config, obj.num_links)
    it, fc = config.interaction, config.filter
    run = infer_object(obj, model, _ranges(args, obj), policy, it.interactions, config.seed, kind.value,
                       shape.shapes, it.steps, it.candidates, it.lookahead, fc.num_points, fc.shrinkage)
    run.record.chamfer = shape.chamfer
    out = config.output.directory
    FileManager.write_csv(os.path.join(out, 'infer.csv'), INFER_COLUMNS, run.rows)
    write_manifest(out, config, 'explore', {'object': args.object})
    _summary(f"explore {obj.name}", {'views': shape.exploration.views_used, 'chamfer': shape.chamfer,
                                     'kind': kind.value, **_nrmse_summary(run.record)})
    return EXIT_OK


def _phi(args, obj):
    if args.params:
        phi = np.asarray(args.params, dtype=float)
        if phi.size != obj.param_dim:
            raise ConfigError(f"--params needs {obj.param_dim} values for {obj.name}")
        return phi
    return None


def cmd_track(args) -> int:
    config = _config(args)
    obj = load_object(args.object)
    model = _model(args, config, obj.num_links)
    run = track_object(obj, model, config.seed, _phi(args, obj), config.interaction.kind,
                       config.interaction.steps, config.filter.num_points)
    out = config.output.directory
    rows = []
    for k in range(len(run.truth)):
        for link in range(obj.num_links):
            rows.append([k + 1, (k + 1) * DT, link, *run.truth[k, link, :2], *run.estimated[k, link, :2],
                         *run.frozen[k, link, :2]])
    FileManager.write_csv(os.path.join(out, 'track.csv'), [
        ('step', '-'), ('time', 's'), ('link', '-'), ('true_x', 'm'), ('true_y', 'm'),
        ('estimated_x', 'm'), ('estimated_y', 'm'), ('prior_x', 'm'), ('prior_y', 'm')], rows)
    write_manifest(out, config, 'track', {'object': args.object})
    _summary(f"track {obj.name}", {'mse_with_params': run.with_params,
                                   'mse_without_params': run.without_params})
    return EXIT_OK


def cmd_control(args) -> int:
    config = _config(args)
    obj = load_object(args.object)
    model = _model(args, config, obj.num_links)
    goal = GoalSpec(args.goal if args.goal else config.interaction.goal)
    phi = _phi(args, obj)
    phi = obj.param_vector() if phi is None else phi
    run = control_object(obj, model, phi, goal, config.seed, config.interaction.control_budget,
                         tolerance=config.thresholds.goal_tolerance)
    out = config.output.directory
    rows = []
    for label, results in (('estimated', run.estimated), ('default', run.default)):
        for t, res in enumerate(results):
            rows.append([label, t, len(res.actions), *res.pose, res.cost, int(res.reached)])
    FileManager.write_csv(os.path.join(out, 'control.csv'), [
        ('params', '-'), ('trial', '-'), ('segments', '-'), ('x', 'm'), ('y', 'm'), ('theta', 'rad'),
        ('cost', 'mixed'), ('reached', '-')], rows)
    write_manifest(out, config, 'control', {'object': args.object, 'goal': list(goal.target)})
    _summary(f"control {obj.name}", {'cost_estimated': run.estimated_cost, 'cost_default': run.default_cost})
    return EXIT_OK


def cmd_detect_change(args) -> int:
    config = _config(args)
    obj = load_object(args.object)
    model = _model(args, config, obj.num_links)
    th = config.thresholds
    run = detect_object(obj, model, config.seed, args.tilt_analog, _phi(args, obj), config.interaction.steps,
                        th.change_window, th.change_ratio, th.calibration_seconds, config.filter.num_points)
    out = config.output.directory
    rows = [[k + 1, (k + 1) * run.dt, float(v), float(t)]
            for k, (v, t) in enumerate(zip(run.trace.visual, run.trace.tactile))]
    FileManager.write_csv(os.path.join(out, 'likelihood.csv'), [
        ('step', '-'), ('time', 's'), ('visual', '-'), ('tactile', '-')], rows)
    write_manifest(out, config, 'detect-change', {'object': args.object, 'tilt_analog': args.tilt_analog})
    _summary(f"detect-change {obj.name}", {
        'decided': run.decision.decided, 'changed': run.decision.changed, 'onset': run.onset_seconds,
        'injected': float('nan') if run.injected_step is None else run.injected_step * run.dt})
    return EXIT_OK


def cmd_run_experiment(args) -> int:
    config = _config(args)
    records = run_experiment(config, args.require_ckpt)
    failed = [r.object_name for r in records if r.failed]
    _summary('run-experiment', {'objects': len(records), 'failed': len(failed),
                                'output': config.output.directory})
    return EXIT_OK


# --- Parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='pushfilter', description='Interactive visuo-tactile object perception')
    parser.add_argument('--version', action='version', version=f"pushfilter {VERSION}")
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)

    def command(name, fn, help_text, objects=False, model=False, interaction=False, object_alias=None):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        p.add_argument('--config', help='Experiment YAML file')
        p.add_argument('--out', '--out-dir', dest='out', help='Output directory (overrides output.directory)')
        p.add_argument('--seed', type=int, help='Run seed (overrides the config and the environment)')
        if objects:
            flags = ('--object', object_alias) if object_alias else ('--object',)
            p.add_argument(*flags, dest='object', required=True, help='Object YAML file')
            p.add_argument('--objects', help='Object set folder for parameter ranges')
        if model:
            p.add_argument('--model', choices=('graph', 'ff', 'analytical'))
            p.add_argument('--checkpoint', help='Model checkpoint')
            p.add_argument('--require-ckpt', action='store_true', help='Fail without a checkpoint')
            p.add_argument('--num-points', type=int, help='Sigma points per step')
        if interaction:
            p.add_argument('--kind', choices=('auto', 'push', 'pull'))
            p.add_argument('--policy', '--strategy', dest='policy', choices=[p.value for p in Policy])
            p.add_argument('--steps', type=int, help='Steps per interaction')
        return p

    p = command('gen-objects', cmd_gen_objects, 'Generate a synthetic object set')
    p.add_argument('--count', type=int, help='Objects per kind')
    p = command('fit-shape', cmd_fit_shape, 'Fit superquadrics to a point cloud file')
    p.add_argument('--cloud', required=True, help='Point cloud (.txt, .xyz, .pts)')
    p.add_argument('--multi', action='store_true', help='Recover several superquadrics')
    p.add_argument('--o-th', type=int, help='Outlier count that stops multi-shape recovery')
    p.add_argument('--o-th', type=int, help='Outlier count that stops multi-shape recovery')
    p = command('explore-shape', cmd_explore_shape, 'Next-best-view shape exploration', objects=True,
                interaction=True, object_alias='--scene')
    p.add_argument('--max-views', type=int)
    p = command('simulate', cmd_simulate, 'Simulate one push or pull', objects=True, interaction=True)
    p.add_argument('--point', type=_floats, help='Contact point x,y')
    p.add_argument('--direction', type=float, help='Push direction (rad)')
    p.add_argument('--link', type=int, default=0)
    p = command('train', cmd_train, 'Iteratively train a learned process model', model=True,
                interaction=True)
    p.add_argument('--objects', help='Object set folder (generated from the config otherwise)')
    p.add_argument('--threshold', type=float, help='Validation error threshold')
    p.add_argument('--budget', type=int, help='Interaction budget')
    p = command('infer', cmd_infer, 'Infer physical parameters of one object', objects=True, model=True,
                interaction=True)
    p.add_argument('--interactions', type=int)
    p = command('explore', cmd_explore, 'Shape exploration followed by parameter inference',
                objects=True, model=True, interaction=True)
    p.add_argument('--interactions', type=int)
    for name, fn, text in (('track', cmd_track, 'Pose tracking with and without parameters'),
                           ('control', cmd_control, 'Goal-driven pushing with iCEM'),
                           ('detect-change', cmd_detect_change, 'Observation-likelihood change detection')):
        p = command(name, fn, text, objects=True, model=True, interaction=True)
        p.add_argument('--params', type=_floats, help='Parameter estimate, comma separated')
        if name == 'control':
            p.add_argument('--goal', type=_floats, help='Goal pose x,y,theta')
        if name == 'detect-change':
            p.add_argument('--tilt-analog', action='store_true', help='Inject a tilted-support force bias')
    p = command('run-experiment', cmd_run_experiment, 'Run the configured experiment suite')
    p.add_argument('--require-ckpt', action='store_true', help='Fail without a checkpoint')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the subcommand and map failures to exit codes."""
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    if not getattr(args, 'func', None):
        build_parser().print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    except PushFilterError as exc:
        logger.error(str(exc))
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
