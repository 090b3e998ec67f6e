"""Evaluation metrics for parameter inference, tracking and shape recovery."""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .errors import DomainError
from .push_simulator import RigidObjectModel

logger = logging.getLogger(__name__)

PARAM_NAMES = ('mass', 'friction', 'com_x', 'com_y', 'joint_friction')


def nrmse(pred, gt, normalizers) -> np.ndarray:
    """
    Root-mean-square error per parameter divided by the parameter's range.

    Args:
        pred: Predicted means (N, P) or (P,)
        gt: Ground truth of the same shape
        normalizers: Range of every parameter over the object set (P,)

    Returns:
        Per-parameter NRMSE (P,)
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    gt = np.atleast_2d(np.asarray(gt, dtype=float))
    normalizers = np.asarray(normalizers, dtype=float).reshape(-1)
    if pred.shape != gt.shape:
        raise DomainError(f"Prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if normalizers.size != pred.shape[1]:
        raise DomainError(f"Expected {pred.shape[1]} normalizers, got {normalizers.size}")
    if np.any(normalizers <= 0):
        raise DomainError("Parameter ranges must be positive")
    return np.sqrt(np.mean((pred - gt) ** 2, axis=0)) / normalizers


def com_error(pred_com, gt_com) -> np.ndarray:
    """Radial distance between predicted and true centers of mass (N, 2) -> (N,)."""
    d = np.asarray(pred_com, dtype=float).reshape(-1, 2) - np.asarray(gt_com, dtype=float).reshape(-1, 2)
    return np.linalg.norm(d, axis=1)


def tracking_mse(pred_poses, gt_poses) -> float:
    """Mean squared position error over a trajectory (T, L, 3) or (T, 3)."""
    p = np.asarray(pred_poses, dtype=float)[..., :2]
    g = np.asarray(gt_poses, dtype=float)[..., :2]
    return float(np.mean(np.sum((p - g) ** 2, axis=-1)))


def link_param_table(phi, num_links: int) -> np.ndarray:
    """Per-link rows [m, f, com_x, com_y] of a parameter vector (L, 4)."""
    return np.asarray(phi, dtype=float).reshape(-1)[:4 * num_links].reshape(num_links, 4)


def param_ranges(objects: Sequence[RigidObjectModel]) -> np.ndarray:
    """Range of each of (m, f, com_x, com_y, f_j) over an object set; zero ranges become 1."""
    rows = np.vstack([link_param_table(o.param_vector(), o.num_links) for o in objects])
    span = list(rows.max(axis=0) - rows.min(axis=0))
    joints = [j.friction for o in objects for j in o.joints]
    span.append(max(joints) - min(joints) if joints else 0.0)
    span = np.array(span)
    return np.where(span > 0, span, 1.0)


@dataclass
class MetricsRecord:
    """Outcome of one inference run on one object."""
    object_name: str
    nrmse: Dict[str, float] = field(default_factory=dict)
    com_error: float = 0.0
    tracking_mse: float = 0.0
    chamfer: float = 0.0
    interactions: int = 0
    wall_time: float = 0.0
    failed: bool = False
    message: str = ''

    def __post_init__(self):
        values = [self.com_error, self.tracking_mse, self.chamfer, self.interactions, self.wall_time]
        values += list(self.nrmse.values())
        if any(v < 0 for v in values if np.isfinite(v)):
            raise DomainError(f"Negative metric in record for {self.object_name}")

    @property
    def overall(self) -> float:
        """Mean NRMSE over mass, friction and center of mass."""
        keys = [k for k in ('mass', 'friction', 'com_x', 'com_y') if k in self.nrmse]
        return float(np.mean([self.nrmse[k] for k in keys])) if keys else float('nan')

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_params(name: str, phi_pred, obj: RigidObjectModel, ranges) -> MetricsRecord:
    """Metrics of a parameter estimate against the object's true parameters."""
    L = obj.num_links
    ranges = np.asarray(ranges, dtype=float)
    phi_pred = np.asarray(phi_pred, dtype=float).reshape(-1)
    phi_true = obj.param_vector()
    pred, gt = link_param_table(phi_pred, L), link_param_table(phi_true, L)
    scores = dict(zip(PARAM_NAMES[:4], nrmse(pred, gt, ranges[:4]).tolist()))
    if L > 1:
        scores['joint_friction'] = float(nrmse(phi_pred[4 * L:], phi_true[4 * L:], ranges[4:5])[0])
    com = float(np.mean(com_error(pred[:, 2:4], gt[:, 2:4])))
    return MetricsRecord(name, scores, com)


def summarize(records: List[MetricsRecord]) -> Dict[str, float]:
    """Mean of every NRMSE entry and of the overall score over successful records."""
    ok = [r for r in records if not r.failed]
    if not ok:
        return {}
    keys = sorted({k for r in ok for k in r.nrmse})
    out = {k: float(np.mean([r.nrmse[k] for r in ok if k in r.nrmse])) for k in keys}
    out['overall'] = float(np.mean([r.overall for r in ok]))
    out['com_error'] = float(np.mean([r.com_error for r in ok]))
    return out
