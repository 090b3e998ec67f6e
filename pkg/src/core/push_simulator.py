"""
Quasi-static planar simulator for pushing and pulling one- and two-link objects.

Object motion follows the ellipsoidal limit-surface model: velocities are
instantaneous maps of the robot motion, never integrated accelerations.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from ..config.constants import (
    ObjectKind, ActionKind, GRAVITY, DT, HORIZON_STEPS, MAX_SPEED, ROBOT_FRICTION,
    CHAR_LENGTH_RATIO, FIXED_POINT_MAX_ITER, FIXED_POINT_TOL, OBS_VECTOR_SIZE
)
from .camera import CameraModel
from .errors import DomainError
from .observation import (
    SegmentedCloud, InteractionState, ObservationVector, render_visual, synthesize_noise,
    occlusion_fraction, observation_camera
)
from .superquadric import SuperquadricParams, footprint_value, footprint_radius, footprint_normal
from ..utils.geometry import RigidGeometry

logger = logging.getLogger(__name__)

# Pusher-to-boundary gap (m) still counted as contact
CONTACT_TOLERANCE = 2e-3


# --- Object model ------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    """One rigid link: footprint shape (its pose is the initial link pose) and physical parameters."""
    shape: SuperquadricParams
    mass: float
    com: Tuple[float, float] = (0.0, 0.0)
    friction: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, 'com', tuple(float(c) for c in np.asarray(self.com).reshape(2)))
        if self.mass <= 0:
            raise DomainError(f"Link mass must be positive, got {self.mass}")
        if self.friction <= 0:
            raise DomainError(f"Link friction must be positive, got {self.friction}")
        if footprint_value(self.shape, np.array(self.com)) >= 1.0:
            raise DomainError(f"Center of mass {self.com} lies outside the link footprint")

    @property
    def char_length(self) -> float:
        return CHAR_LENGTH_RATIO * max(self.shape.a_x, self.shape.a_y)

    @property
    def max_friction_force(self) -> float:
        """Support friction reaction f * m * g."""
        return self.friction * self.mass * GRAVITY

    @property
    def initial_pose(self) -> np.ndarray:
        return self.shape.pose


@dataclass(frozen=True)
class Joint:
    """Revolute joint; anchor is the world position at the initial configuration."""
    parent: int
    child: int
    anchor: Tuple[float, float]
    friction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'anchor', tuple(float(c) for c in np.asarray(self.anchor).reshape(2)))
        if not 0.0 <= self.friction <= 1.0:
            raise DomainError(f"Joint friction must lie in [0, 1], got {self.friction}")


@dataclass(frozen=True)
class RigidObjectModel:
    """A one- or two-link planar object."""
    links: Tuple[Link, ...]
    joints: Tuple[Joint, ...] = ()
    kind: ObjectKind = ObjectKind.HOMOGENEOUS
    name: str = 'object'

    def __post_init__(self):
        object.__setattr__(self, 'links', tuple(self.links))
        object.__setattr__(self, 'joints', tuple(self.joints))
        object.__setattr__(self, 'kind', ObjectKind(self.kind))
        L = len(self.links)
        if L not in (1, 2):
            raise DomainError(f"Objects have 1 or 2 links, got {L}")
        if len(self.joints) != L - 1:
            raise DomainError(f"{L} links need {L - 1} joints, got {len(self.joints)}")
        if (self.kind is ObjectKind.HOMOGENEOUS) != (L == 1):
            raise DomainError(f"{self.kind.value} object with {L} links")
        for j in self.joints:
            if {j.parent, j.child} != {0, 1}:
                raise DomainError("Joint must connect links 0 and 1")
            if self.kind is ObjectKind.HETEROGENEOUS and j.friction != 1.0:
                raise DomainError("Heterogeneous objects have rigid joints (f_j = 1)")

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def param_dim(self) -> int:
        return 5 * self.num_links - 1

    @property
    def belief_dim(self) -> int:
        return 11 * self.num_links - 1

    @property
    def shapes(self) -> List[SuperquadricParams]:
        return [link.shape for link in self.links]

    def initial_state(self) -> np.ndarray:
        """Link states (L, 6): pose (x, y, theta) and zero twist."""
        state = np.zeros((self.num_links, 6))
        state[:, :3] = [link.initial_pose for link in self.links]
        return state

    def param_vector(self) -> np.ndarray:
        """[m, f, com_x, com_y] per link followed by the joint frictions."""
        phi = [[link.mass, link.friction, link.com[0], link.com[1]] for link in self.links]
        return np.concatenate([np.ravel(phi), [j.friction for j in self.joints]])

    def with_param_vector(self, phi) -> 'RigidObjectModel':
        """Copy with physical parameters taken from a parameter vector."""
        phi = np.asarray(phi, dtype=float).reshape(-1)
        if phi.size != self.param_dim:
            raise DomainError(f"Expected {self.param_dim} parameters, got {phi.size}")
        links = tuple(
            replace(link, mass=float(phi[4 * i]), friction=float(phi[4 * i + 1]),
                    com=(float(phi[4 * i + 2]), float(phi[4 * i + 3])))
            for i, link in enumerate(self.links)
        )
        joints = tuple(
            replace(j, friction=float(phi[4 * self.num_links + i])) for i, j in enumerate(self.joints)
        )
        return replace(self, links=links, joints=joints)

    def joint_anchors(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Per link index: joint anchor in that link's frame, for links 0 and 1."""
        if not self.joints:
            return []
        anchor = np.array(self.joints[0].anchor)
        return [RigidGeometry.world_to_local_2d(anchor, link.initial_pose) for link in self.links]

    @property
    def joint_friction(self) -> float:
        return self.joints[0].friction if self.joints else 1.0

    def center_xy(self) -> np.ndarray:
        return np.mean([link.initial_pose[:2] for link in self.links], axis=0)


# --- Action ------------------------------------------------------------------

@dataclass(frozen=True)
class ActionAffordance:
    """
    Push or pull primitive.

    point is the contact point (push) or grasp point (pull) in the world,
    direction the robot heading in radians, speed in m/s and link the index of
    the touched link.
    """
    kind: ActionKind
    point: Tuple[float, float]
    direction: float
    speed: float
    link: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'kind', ActionKind(self.kind))
        object.__setattr__(self, 'point', tuple(float(c) for c in np.asarray(self.point).reshape(2)))
        if not np.isfinite(self.direction) or not np.isfinite(self.speed):
            raise DomainError("Non-finite action")
        if self.speed < 0 or self.speed > MAX_SPEED + 1e-12:
            raise DomainError(f"Speed {self.speed} outside [0, {MAX_SPEED}] m/s")

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([np.cos(self.direction), np.sin(self.direction)])

    def robot_position(self, t: float) -> np.ndarray:
        """Pusher or gripper position at time t after the start."""
        return np.array(self.point) + self.velocity * t


# --- Limit-surface kernel (link frame, relative to the center of mass) ---------------

def limit_surface_twist(c, v_p, l):
    """
    CoM velocity and angular rate produced by a contact-point velocity.

    Args:
        c: Contact point relative to the CoM (..., 2)
        v_p: Contact-point velocity (..., 2)
        l: Characteristic length of the limit surface (...)

    Returns:
        Tuple (v_o (..., 2), omega (...))
    """
    c = np.asarray(c, dtype=float)
    v_p = np.asarray(v_p, dtype=float)
    l2 = np.asarray(l, dtype=float) ** 2
    cx, cy = c[..., 0], c[..., 1]
    den = l2 + cx * cx + cy * cy
    vx = ((l2 + cx * cx) * v_p[..., 0] + cx * cy * v_p[..., 1]) / den
    vy = ((l2 + cy * cy) * v_p[..., 1] + cx * cy * v_p[..., 0]) / den
    omega = (cx * vy - cy * vx) / l2
    return np.stack([vx, vy], axis=-1), omega


def motion_cone(c, n, l, mu_r: float = ROBOT_FRICTION):
    """Right and left boundary contact velocities of the motion cone."""
    alpha = np.arctan(mu_r)
    c = np.asarray(c, dtype=float)
    l2 = np.asarray(l, dtype=float) ** 2
    edges = []
    for angle in (-alpha, alpha):
        f = RigidGeometry.rotate_vectors_2d(n, angle)
        m = RigidGeometry.cross2d(c, f)
        edges.append(f + (m / l2)[..., None] * RigidGeometry.perp(c))
    return edges[0], edges[1]


def push_twist(c, n, u, l, mu_r: float = ROBOT_FRICTION):
    """
    Object twist for a point pusher.

    Args:
        c: Contact point relative to the CoM (..., 2)
        n: Inward contact normal (..., 2)
        u: Pusher velocity (..., 2)
        l: Characteristic length (...)
        mu_r: Pusher-object friction coefficient

    Returns:
        Tuple (v_o, omega, sticking, contact); no contact when u . n <= 0
    """
    c = np.asarray(c, dtype=float)
    n = np.asarray(n, dtype=float)
    u = np.broadcast_to(np.asarray(u, dtype=float), c.shape)
    un = (u * n).sum(-1)
    contact = un > 0
    v_right, v_left = motion_cone(c, n, l, mu_r)
    right_of = RigidGeometry.cross2d(v_right, u) < 0
    left_of = RigidGeometry.cross2d(u, v_left) < 0
    sticking = contact & ~right_of & ~left_of
    edge = np.where(right_of[..., None], v_right, v_left)
    en = (edge * n).sum(-1)
    scale = un / np.where(np.abs(en) > 1e-300, en, 1e-300)
    v_p = np.where(sticking[..., None], u, scale[..., None] * edge)
    v_o, omega = limit_surface_twist(c, v_p, l)
    v_o = np.where(contact[..., None], v_o, 0.0)
    omega = np.where(contact, omega, 0.0)
    return v_o, omega, sticking, contact


def limit_surface_force(v_o, omega, l, fmax):
    """Friction force on the limit surface for a twist (zero for a body at rest)."""
    v_o = np.asarray(v_o, dtype=float)
    speed = np.sqrt((v_o ** 2).sum(-1) + (np.asarray(l) * omega) ** 2)
    k = np.where(speed > 0, np.asarray(fmax) / np.where(speed > 0, speed, 1.0), 0.0)
    return k[..., None] * v_o


# --- Rigid-body stepping ---------------------------------------------------------

@dataclass
class PlanarMotion:
    """Instantaneous motion: pivot velocity and angular rate (world frame)."""
    pivot: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray

    def velocity_at(self, points) -> np.ndarray:
        return self.velocity + self.omega[..., None] * RigidGeometry.perp(np.asarray(points) - self.pivot)


def apply_planar_motion(poses, pivot, velocity, omega, dt: float) -> np.ndarray:
    """Rotate poses by omega*dt about pivot, then translate by velocity*dt."""
    poses = np.asarray(poses, dtype=float)
    delta = np.asarray(omega, dtype=float) * dt
    rel = poses[..., :2] - pivot
    xy = pivot + RigidGeometry.rotate_vectors_2d(rel, delta) + np.asarray(velocity) * dt
    return np.concatenate([xy, (poses[..., 2] + delta)[..., None]], axis=-1)


def locate_contact(shape: SuperquadricParams, poses, pusher):
    """
    Boundary point under the pusher, along the ray from the link origin.

    Returns:
        Tuple (contact point (B, 2) and inward normal (B, 2) in the link frame, gap (B,) in m)
    """
    q = RigidGeometry.world_to_local_2d(pusher, poses)
    angle = np.arctan2(q[..., 1], q[..., 0])
    r = footprint_radius(shape, angle)
    c = r[..., None] * np.stack([np.cos(angle), np.sin(angle)], -1)
    n = -footprint_normal(shape, c.reshape(-1, 2)).reshape(c.shape)
    return c, n, np.linalg.norm(q, axis=-1) - r


@dataclass
class RigidPush:
    """Batched result of pushing rigid bodies for one step."""
    motion: PlanarMotion
    force: np.ndarray
    sticking: np.ndarray
    contact: np.ndarray


def rigid_push(poses, shape: SuperquadricParams, com, l, fmax, pusher, u,
               mu_r: float = ROBOT_FRICTION) -> RigidPush:
    """
    Push rigid bodies, batched over B hypotheses.

    Args:
        poses: Pose of the contacted link frame (B, 3)
        shape: Footprint of the contacted link
        com: Center of mass in the contacted link frame (B, 2) or (2,)
        l: Characteristic length (B,) or scalar
        fmax: Maximum support friction force (B,) or scalar
        pusher: Pusher position in the world (B, 2) or (2,)
        u: Pusher velocity in the world (2,)
        mu_r: Pusher-object friction

    Returns:
        RigidPush with world-frame motion about the CoM and the force applied by the pusher
    """
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    B = len(poses)
    com = np.broadcast_to(np.asarray(com, dtype=float), (B, 2))
    l = np.broadcast_to(np.asarray(l, dtype=float), (B,))
    fmax = np.broadcast_to(np.asarray(fmax, dtype=float), (B,))
    pusher = np.broadcast_to(np.asarray(pusher, dtype=float), (B, 2))

    c_geo, n, gap = locate_contact(shape, poses, pusher)
    u_local = RigidGeometry.rotate_vectors_2d(np.asarray(u, dtype=float), -poses[:, 2])
    v_o, omega, sticking, contact = push_twist(c_geo - com, n, u_local, l, mu_r)
    touching = gap <= CONTACT_TOLERANCE
    contact = contact & touching
    v_o = np.where(contact[:, None], v_o, 0.0)
    omega = np.where(contact, omega, 0.0)
    force = limit_surface_force(v_o, omega, l, fmax)
    motion = PlanarMotion(
        RigidGeometry.local_to_world_2d(com, poses),
        RigidGeometry.rotate_vectors_2d(v_o, poses[:, 2]),
        omega,
    )
    return RigidPush(motion, RigidGeometry.rotate_vectors_2d(force, poses[:, 2]),
                     sticking & contact, contact)


@dataclass
class StepResult:
    """State after one simulator step and the force the robot applied."""
    state: np.ndarray
    force: np.ndarray
    sticking: bool
    contact: bool
    fallback: bool = False


def _with_twist(state, new_poses, dt: float) -> np.ndarray:
    out = np.zeros_like(state)
    out[:, :3] = new_poses
    out[:, 3:] = (new_poses - state[:, :3]) / dt
    return out


def _no_motion(state) -> StepResult:
    out = state.copy()
    out[:, 3:] = 0.0
    return StepResult(out, np.zeros(2), False, False)


def push_step_analytical(link_state, link: Link, action: ActionAffordance, dt: float = DT,
                         pusher=None, mu_r: float = ROBOT_FRICTION) -> StepResult:
    """
    One step of a pushed single link.

    Args:
        link_state: (6,) or (1, 6) pose and twist
        link: Link shape and parameters
        action: Push affordance
        dt: Time step in seconds
        pusher: Current pusher position (action.point by default)
        mu_r: Pusher-object friction

    Returns:
        StepResult with state (1, 6)
    """
    state = np.asarray(link_state, dtype=float).reshape(1, 6)
    pusher = action.point if pusher is None else pusher
    res = rigid_push(state[:, :3], link.shape, link.com, link.char_length,
                     link.max_friction_force, pusher, action.velocity, mu_r)
    if not res.contact[0]:
        return _no_motion(state)
    m = res.motion
    poses = apply_planar_motion(state[:, :3], m.pivot, m.velocity, m.omega, dt)
    return StepResult(_with_twist(state, poses, dt), res.force[0], bool(res.sticking[0]), True)


@dataclass
class CompositeBody:
    """Rigid composite expressed in one link frame."""
    com: np.ndarray
    char_length: float
    max_friction_force: float


def composite_body(obj: RigidObjectModel, poses, frame: int) -> CompositeBody:
    """
    Merge all links at their current poses into one rigid body.

    The CoM is mass weighted and the characteristic length combines each link's
    own length with its CoM offset (parallel-axis form).
    """
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    masses = np.array([link.mass for link in obj.links])
    coms = np.array([RigidGeometry.local_to_world_2d(np.array(link.com), poses[i])
                     for i, link in enumerate(obj.links)])
    com_w = (masses[:, None] * coms).sum(0) / masses.sum()
    lengths = np.array([link.char_length for link in obj.links])
    l2 = (masses * (lengths ** 2 + ((coms - com_w) ** 2).sum(1))).sum() / masses.sum()
    fmax = sum(link.max_friction_force for link in obj.links)
    return CompositeBody(RigidGeometry.world_to_local_2d(com_w, poses[frame]), float(np.sqrt(l2)), fmax)


def contacted_link(obj: RigidObjectModel, state, pusher) -> int:
    """Link whose boundary is closest to the pusher."""
    poses = np.asarray(state, dtype=float).reshape(-1, 6)[:, :3]
    gaps = [locate_contact(link.shape, poses[i:i + 1], pusher)[2][0] for i, link in enumerate(obj.links)]
    return int(np.argmin(gaps))


def _free_pivot_push(obj: RigidObjectModel, poses, j: int, pusher, u, mu_r: float):
    """
    Push link j dragging the other link through a frictionless joint.

    The dragged link loads the joint with a point friction force whose share of
    its maximum is found by fixed-point iteration on the dragged link's motion.

    Returns:
        Tuple (RigidPush of link j, angular rate of the dragged link, converged)
    """
    k = 1 - j
    lj, lk = obj.links[j], obj.links[k]
    anchors = obj.joint_anchors()
    a_j, a_k = anchors[j], anchors[k]
    com_j = np.array(lj.com)
    c_a = a_k - np.array(lk.com)
    anchor_w = RigidGeometry.local_to_world_2d(a_j, poses[j])

    rho = 1.0
    res, omega_k = None, 0.0
    for _ in range(FIXED_POINT_MAX_ITER):
        w_j, w_a = lj.max_friction_force, rho * lk.max_friction_force
        total = w_j + w_a
        com_aug = (w_j * com_j + w_a * a_j) / total
        l2 = (w_j * (lj.char_length ** 2 + np.sum((com_j - com_aug) ** 2))
              + w_a * np.sum((a_j - com_aug) ** 2)) / total
        res = rigid_push(poses[j:j + 1], lj.shape, com_aug, np.sqrt(l2), total, pusher, u, mu_r)
        v_a = res.motion.velocity_at(anchor_w)[0]
        v_local = RigidGeometry.rotate_vectors_2d(v_a, -poses[k, 2])
        v_ok, omega_k = limit_surface_twist(c_a, v_local, lk.char_length)
        speed = np.sqrt(np.sum(v_ok ** 2) + (lk.char_length * omega_k) ** 2)
        rho_new = float(np.linalg.norm(v_ok) / speed) if speed > 0 else rho
        if abs(rho_new - rho) < FIXED_POINT_TOL:
            return res, float(omega_k), True
        rho = rho_new
    return res, float(omega_k), False


def multi_link_push_step(chain_state, obj: RigidObjectModel, action: ActionAffordance,
                         dt: float = DT, pusher=None, mu_r: float = ROBOT_FRICTION) -> StepResult:
    """
    One step of a pushed two-link object.

    The contacted link motion blends the rigid composite (weight f_j) with the
    free-pivot solution (weight 1 - f_j); the other link follows the contacted
    link and additionally turns about the joint anchor.

    Args:
        chain_state: Link states (2, 6)
        obj: Two-link object
        action: Push affordance
        dt: Time step
        pusher: Current pusher position (action.point by default)
        mu_r: Pusher-object friction

    Returns:
        StepResult; fallback is set when the joint fixed point did not converge
    """
    state = np.asarray(chain_state, dtype=float).reshape(-1, 6)
    if obj.num_links == 1:
        return push_step_analytical(state, obj.links[0], action, dt, pusher, mu_r)
    pusher = np.asarray(action.point if pusher is None else pusher, dtype=float)
    u = action.velocity
    poses = state[:, :3]
    j = contacted_link(obj, state, pusher)
    k = 1 - j
    f_j = obj.joint_friction

    body = composite_body(obj, poses, frame=j)
    rigid = rigid_push(poses[j:j + 1], obj.links[j].shape, body.com, body.char_length,
                       body.max_friction_force, pusher, u, mu_r)
    if not rigid.contact[0]:
        return _no_motion(state)

    pivot = rigid.motion.pivot[0]
    velocity = rigid.motion.velocity[0]
    omega_j = omega_k = float(rigid.motion.omega[0])
    force = rigid.force[0]
    sticking = bool(rigid.sticking[0])
    fallback = False
    if f_j < 1.0:
        free, omega_free_k, converged = _free_pivot_push(obj, poses, j, pusher, u, mu_r)
        if not converged:
            logger.warning("Joint fixed point did not converge; using the rigid composite")
            fallback = True
        elif free.contact[0]:
            v_free = free.motion.velocity_at(pivot)[0]
            velocity = f_j * velocity + (1.0 - f_j) * v_free
            omega_j = f_j * omega_j + (1.0 - f_j) * float(free.motion.omega[0])
            omega_k = f_j * omega_k + (1.0 - f_j) * omega_free_k
            force = f_j * force + (1.0 - f_j) * free.force[0]
            sticking = sticking and bool(free.sticking[0])

    new_poses = apply_planar_motion(poses, pivot, velocity, omega_j, dt)
    anchor_w = RigidGeometry.local_to_world_2d(obj.joint_anchors()[j], new_poses[j])
    new_poses[k] = apply_planar_motion(new_poses[k], anchor_w, np.zeros(2), omega_k - omega_j, dt)
    return StepResult(_with_twist(state, new_poses, dt), force, sticking, True, fallback)


def pull_step(chain_state, obj: RigidObjectModel, action: ActionAffordance,
              dt: float = DT, gripper=None) -> StepResult:
    """
    One step of a grasped object.

    The grasped link translates with the gripper. A second link is dragged
    through the joint and turns about the anchor with the limit-surface rate
    scaled by the joint compliance 1 - f_j.

    Args:
        chain_state: Link states (L, 6)
        obj: Object
        action: Pull affordance (action.link is the grasped link)
        dt: Time step
        gripper: Unused; the grasp pins the link to the gripper

    Returns:
        StepResult with the net force applied by the gripper
    """
    state = np.asarray(chain_state, dtype=float).reshape(-1, 6)
    u = action.velocity
    if action.speed == 0:
        return _no_motion(state)
    j = action.link
    poses = state[:, :3]
    new_poses = poses.copy()
    new_poses[j, :2] += u * dt
    force = obj.links[j].max_friction_force * u / np.linalg.norm(u)

    if obj.num_links == 2:
        k = 1 - j
        lk = obj.links[k]
        anchors = obj.joint_anchors()
        anchor_w = RigidGeometry.local_to_world_2d(anchors[j], poses[j])
        c_a = anchors[k] - np.array(lk.com)
        v_local = RigidGeometry.rotate_vectors_2d(u, -poses[k, 2])
        _, omega_free = limit_surface_twist(c_a, v_local, lk.char_length)
        omega_k = (1.0 - obj.joint_friction) * float(omega_free)
        v_com = v_local + omega_k * RigidGeometry.perp(-c_a)
        f_k = limit_surface_force(v_com, omega_k, lk.char_length, lk.max_friction_force)
        force = force + RigidGeometry.rotate_vectors_2d(f_k, poses[k, 2])
        new_poses[k] = apply_planar_motion(poses[k], anchor_w, u, omega_k, dt)
    return StepResult(_with_twist(state, new_poses, dt), force, True, True)


def step_object(state, obj: RigidObjectModel, action: ActionAffordance, dt: float = DT,
                robot_xy=None) -> StepResult:
    """Dispatch to the stepper matching the action and the number of links."""
    if action.kind is ActionKind.PULL:
        return pull_step(state, obj, action, dt, robot_xy)
    if obj.num_links == 1:
        return push_step_analytical(state, obj.links[0], action, dt, robot_xy)
    return multi_link_push_step(state, obj, action, dt, robot_xy)


# --- Rollouts ------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Ground truth and synthetic observations of one interaction."""
    object_name: str
    action: ActionAffordance
    dt: float
    initial_state: np.ndarray
    times: np.ndarray
    states: np.ndarray
    robot: np.ndarray
    forces: np.ndarray
    observations: np.ndarray
    noise_std: np.ndarray
    sticking: np.ndarray
    occlusion: np.ndarray
    fallback_steps: int = 0

    def __len__(self) -> int:
        return len(self.times)

    @property
    def poses(self) -> np.ndarray:
        return self.states[..., :3]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def segment(self, start: int, stop: int) -> 'Trajectory':
        """Sub-trajectory of steps [start, stop); its initial state is the state before start."""
        init = self.initial_state if start == 0 else self.states[start - 1]
        return replace(
            self, initial_state=init.copy(), times=self.times[start:stop],
            states=self.states[start:stop], robot=self.robot[start:stop],
            forces=self.forces[start:stop], observations=self.observations[start:stop],
            noise_std=self.noise_std[start:stop], sticking=self.sticking[start:stop],
            occlusion=self.occlusion[start:stop],
        )

    def split(self, parts: int) -> List['Trajectory']:
        edges = np.linspace(0, len(self), parts + 1).round().astype(int)
        return [self.segment(a, b) for a, b in zip(edges[:-1], edges[1:]) if b - a >= 2]


def object_cloud(obj: RigidObjectModel, n_per_link: int = 800, rng_seed=0) -> SegmentedCloud:
    """Segmented cloud of the object at its initial configuration."""
    return SegmentedCloud.from_shapes(obj.shapes, n_per_link, rng_seed, center_xy=obj.center_xy())


def rollout(obj: RigidObjectModel, action: ActionAffordance, camera: Optional[CameraModel] = None,
            seed=0, steps: int = HORIZON_STEPS, dt: float = DT,
            cloud: Optional[SegmentedCloud] = None) -> Trajectory:
    """
    Simulate an interaction and synthesize its observations.

    Args:
        obj: Object to interact with
        action: Push or pull affordance
        camera: Observation camera (64x64 overhead by default)
        seed: Seed of the observation noise and the rendered cloud
        steps: Number of steps
        dt: Time step
        cloud: Segmented cloud to render (sampled from the object by default)

    Returns:
        Trajectory
    """
    rng = np.random.default_rng(seed)
    camera = camera or observation_camera()
    cloud = cloud or object_cloud(obj, rng_seed=rng.integers(1 << 31))
    L = obj.num_links
    state = obj.initial_state()
    initial = state.copy()

    times = np.arange(1, steps + 1) * dt
    states = np.zeros((steps, L, 6))
    robot = np.zeros((steps, 2))
    forces = np.zeros((steps, 2))
    observations = np.zeros((steps, OBS_VECTOR_SIZE))
    noise_std = np.zeros((steps, 2))
    sticking = np.zeros(steps, dtype=bool)
    occlusion = np.zeros(steps)
    fallbacks = 0
    for k in range(steps):
        res = step_object(state, obj, action, dt, action.robot_position(k * dt))
        state = res.state
        fallbacks += int(res.fallback)
        robot_xy = action.robot_position((k + 1) * dt)
        occ = occlusion_fraction(state[:, :3], robot_xy, cloud)
        clean = ObservationVector(render_visual(state, cloud, camera), res.force)
        info = InteractionState(state, robot_xy, res.force, res.sticking, occ)
        observations[k], sv, st = synthesize_noise(clean, info, rng)
        states[k], robot[k], forces[k] = state, robot_xy, res.force
        noise_std[k] = (sv, st)
        sticking[k], occlusion[k] = res.sticking, occ
    if fallbacks:
        logger.warning(f"{fallbacks} steps of {obj.name} fell back to the rigid composite")
    return Trajectory(obj.name, action, dt, initial, times, states, robot, forces,
                      observations, noise_std, sticking, occlusion, fallbacks)


