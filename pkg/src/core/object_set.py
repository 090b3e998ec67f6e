"""
Synthetic object sets and their on-disk formats.

Objects are written as one YAML file each; trajectories as .npz archives.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..config.constants import (
    ObjectKind, ActionKind, OBJECTS_PER_KIND, MASS_RANGE, FRICTION_RANGE, JOINT_FRICTION_RANGE,
    SPLIT_FRACTIONS
)
from ..utils.file_operations import FileManager
from .errors import ConfigError, DomainError
from .push_simulator import ActionAffordance, Joint, Link, RigidObjectModel, Trajectory
from .superquadric import SuperquadricParams, footprint_value

logger = logging.getLogger(__name__)

OBJECT_EXTENSION = '.yaml'

# Shape sampling ranges (m / dimensionless)
EPS_RANGE = (0.2, 1.0)
SINGLE_AXIS_RANGE = (0.035, 0.06)
LONG_AXIS_RANGE = (0.05, 0.08)
SHORT_AXIS_RANGE = (0.025, 0.04)
HEIGHT_RANGE = (0.02, 0.04)
TAPER_PROBABILITY = 0.3
KAPPA1_RANGE = (-0.4, 0.4)
KAPPA2_RANGE = (0.0, 0.3)
# Initial placement of the (first) link in the robot frame
PLACEMENT_X = (0.4, 0.55)
PLACEMENT_Y = (0.0, 0.45)
COM_FRACTION = 0.5


@dataclass
class ObjectSetSpec:
    """Counts per object kind and the ranges physical parameters are drawn from."""
    counts: Dict[str, int] = field(default_factory=lambda: {k.value: OBJECTS_PER_KIND for k in ObjectKind})
    mass_range: Tuple[float, float] = MASS_RANGE
    friction_range: Tuple[float, float] = FRICTION_RANGE
    joint_friction_range: Tuple[float, float] = JOINT_FRICTION_RANGE

    def __post_init__(self):
        for name in ('mass_range', 'friction_range', 'joint_friction_range'):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"{name} must be a non-degenerate interval, got {(lo, hi)}")
            setattr(self, name, (float(lo), float(hi)))
        if self.mass_range[0] <= 0 or self.friction_range[0] <= 0:
            raise ConfigError("Masses and frictions must be positive")
        if not (0.0 <= self.joint_friction_range[0] and self.joint_friction_range[1] <= 1.0):
            raise ConfigError("Joint frictions must lie in [0, 1]")
        for kind, n in self.counts.items():
            ObjectKind(kind)
            if n < 0:
                raise ConfigError(f"Negative object count for {kind}")


def _draw_shape(rng, a_x: float, a_y: float, pose, taper: bool = False) -> SuperquadricParams:
    a_z = rng.uniform(*HEIGHT_RANGE)
    kappa1 = kappa2 = 0.0
    if taper and rng.uniform() < TAPER_PROBABILITY:
        kappa1, kappa2 = rng.uniform(*KAPPA1_RANGE), rng.uniform(*KAPPA2_RANGE)
    return SuperquadricParams(
        float(rng.uniform(*EPS_RANGE)), float(rng.uniform(*EPS_RANGE)), float(a_x), float(a_y),
        float(a_z), float(kappa1), float(kappa2), float(pose[0]), float(pose[1]), float(pose[2]),
        float(a_z))


def _draw_com(rng, sq: SuperquadricParams) -> Tuple[float, float]:
    for _ in range(100):
        com = rng.uniform(-COM_FRACTION, COM_FRACTION, 2) * [sq.a_x, sq.a_y]
        if footprint_value(sq, com) < 1.0:
            return float(com[0]), float(com[1])
    return 0.0, 0.0


def _draw_link(rng, spec: ObjectSetSpec, sq: SuperquadricParams) -> Link:
    return Link(sq, float(rng.uniform(*spec.mass_range)), _draw_com(rng, sq),
                float(rng.uniform(*spec.friction_range)))


def generate_object(kind: ObjectKind, name: str, spec: ObjectSetSpec, rng) -> RigidObjectModel:
    """Draw one object of a kind; two-link objects are joined end to end along the first link's x axis."""
    kind = ObjectKind(kind)
    theta = float(rng.uniform(-np.pi, np.pi))
    pose = (float(rng.uniform(*PLACEMENT_X)), float(rng.uniform(*PLACEMENT_Y)), theta)
    if kind is ObjectKind.HOMOGENEOUS:
        sq = _draw_shape(rng, rng.uniform(*SINGLE_AXIS_RANGE), rng.uniform(*SINGLE_AXIS_RANGE), pose,
                         taper=True)
        return RigidObjectModel((_draw_link(rng, spec, sq),), (), kind, name)

    first = _draw_shape(rng, rng.uniform(*LONG_AXIS_RANGE), rng.uniform(*SHORT_AXIS_RANGE), pose)
    a_x1 = float(rng.uniform(*LONG_AXIS_RANGE))
    axis = np.array([np.cos(theta), np.sin(theta)])
    anchor = first.pose[:2] + first.a_x * axis
    center = anchor + a_x1 * axis
    second = _draw_shape(rng, a_x1, rng.uniform(*SHORT_AXIS_RANGE), (center[0], center[1], theta))
    links = (_draw_link(rng, spec, first), _draw_link(rng, spec, second))
    f_j = 1.0 if kind is ObjectKind.HETEROGENEOUS else float(rng.uniform(*spec.joint_friction_range))
    return RigidObjectModel(links, (Joint(0, 1, tuple(anchor), f_j),), kind, name)


def gen_object_set(spec: ObjectSetSpec, seed: int = 0) -> List[RigidObjectModel]:
    """
    Deterministic object set, kinds in the order homogeneous, heterogeneous, articulated.

    Args:
        spec: Counts and parameter ranges
        seed: Seed of all draws

    Returns:
        Objects named '<kind>_<index>'
    """
    rng = np.random.default_rng(seed)
    objects = []
    for kind in ObjectKind:
        for i in range(spec.counts.get(kind.value, 0)):
            objects.append(generate_object(kind, f"{kind.value}_{i:03d}", spec, rng))
    logger.info(f"Generated {len(objects)} objects with seed {seed}")
    return objects


def split_objects(objects: Sequence[RigidObjectModel],
                  fractions: Tuple[float, float, float] = SPLIT_FRACTIONS
                  ) -> Tuple[List[RigidObjectModel], List[RigidObjectModel], List[RigidObjectModel]]:
    """Train/validation/test split by index within every object kind."""
    train, val, test = [], [], []
    for kind in ObjectKind:
        group = [o for o in objects if o.kind is kind]
        n = len(group)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        train += group[:n_train]
        val += group[n_train:n_train + n_val]
        test += group[n_train + n_val:]
    return train, val, test


# --- Object files -------------------------------------------------------------------

def object_to_dict(obj: RigidObjectModel) -> dict:
    links = []
    for link in obj.links:
        sq = link.shape
        links.append({
            'shape': {k: float(v) for k, v in zip(
                ('eps1', 'eps2', 'a_x', 'a_y', 'a_z', 'kappa1', 'kappa2', 'x0', 'y0', 'theta0', 'z0'),
                sq.to_vector())},
            'mass': float(link.mass),
            'friction': float(link.friction),
            'com': [float(c) for c in link.com],
        })
    joints = [{'parent': j.parent, 'child': j.child, 'anchor': [float(c) for c in j.anchor],
               'friction': float(j.friction)} for j in obj.joints]
    return {'name': obj.name, 'kind': obj.kind.value, 'links': links, 'joints': joints}


def object_from_dict(data: dict) -> RigidObjectModel:
    try:
        links = tuple(
            Link(SuperquadricParams(**{k: float(v) for k, v in l['shape'].items()}), float(l['mass']),
                 tuple(l.get('com', (0.0, 0.0))), float(l['friction']))
            for l in data['links'])
        joints = tuple(Joint(int(j['parent']), int(j['child']), tuple(j['anchor']), float(j['friction']))
                       for j in data.get('joints', []))
        return RigidObjectModel(links, joints, ObjectKind(data['kind']), str(data['name']))
    except (KeyError, TypeError, DomainError, ValueError) as exc:
        raise ConfigError(f"Invalid object description: {exc}")


def save_object(path: str, obj: RigidObjectModel):
    FileManager.save_yaml(path, object_to_dict(obj))


def load_object(path: str) -> RigidObjectModel:
    return object_from_dict(FileManager.load_yaml(path))


def save_object_set(folder: str, objects: Sequence[RigidObjectModel]) -> List[str]:
    os.makedirs(folder, exist_ok=True)
    paths = []
    for obj in objects:
        path = os.path.join(folder, obj.name + OBJECT_EXTENSION)
        save_object(path, obj)
        paths.append(path)
    return paths


def load_object_set(folder: str) -> List[RigidObjectModel]:
    names = FileManager.get_file_list(folder, [OBJECT_EXTENSION])
    if not names:
        raise ConfigError(f"No object files in {folder}")
    return [load_object(os.path.join(folder, n)) for n in names]


# --- Trajectory files ------------------------------------------------------------

def save_trajectory(path: str, traj: Trajectory):
    a = traj.action
    FileManager.save_arrays(path, {
        'object_name': np.array(traj.object_name),
        'action_kind': np.array(a.kind.value),
        'action': np.array([a.point[0], a.point[1], a.direction, a.speed, a.link]),
        'dt': np.array(traj.dt),
        'initial_state': traj.initial_state,
        'times': traj.times,
        'states': traj.states,
        'robot': traj.robot,
        'forces': traj.forces,
        'observations': traj.observations,
        'noise_std': traj.noise_std,
        'sticking': traj.sticking,
        'occlusion': traj.occlusion,
        'fallback_steps': np.array(traj.fallback_steps),
    })


def load_trajectory(path: str) -> Trajectory:
    data = FileManager.load_arrays(path)
    try:
        a = data['action']
        action = ActionAffordance(ActionKind(str(data['action_kind'])), a[:2], float(a[2]), float(a[3]),
                                  int(a[4]))
        return Trajectory(str(data['object_name']), action, float(data['dt']), data['initial_state'],
                          data['times'], data['states'], data['robot'], data['forces'],
                          data['observations'], data['noise_std'], data['sticking'].astype(bool),
                          data['occlusion'], int(data['fallback_steps']))
    except (KeyError, ValueError, DomainError) as exc:
        raise ConfigError(f"Invalid trajectory file {path}: {exc}")
