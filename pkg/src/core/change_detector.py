"""
Observation-likelihood monitoring and change detection.

The likelihood of each observation under the filter's prediction is tracked
per channel; a drop of the windowed tactile likelihood relative to its level
during the first second of the interaction signals that the environment no
longer matches the model.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from ..config.constants import CHANGE_WINDOW, CHANGE_RATIO, CALIBRATION_SECONDS, DT, GRAVITY
from .dual_filter import FilterStepResult
from .errors import DomainError
from .observation import VISUAL_SIZE
from .push_simulator import RigidObjectModel, Trajectory

logger = logging.getLogger(__name__)

# Minimum detector window in samples
MIN_WINDOW = 5
TILT_BIAS_FRACTION = 0.2


def obs_likelihood(predicted, z, r_diag) -> float:
    """
    Per-dimension geometric-mean likelihood exp(-1/2 r R^-1 r^T / dim).

    Args:
        predicted: Predicted observation
        z: Actual observation of the same length
        r_diag: Diagonal of R

    Returns:
        Likelihood in (0, 1]
    """
    predicted = np.asarray(predicted, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    r_diag = np.asarray(r_diag, dtype=float).reshape(-1)
    if not predicted.shape == z.shape == r_diag.shape:
        raise DomainError(f"Shape mismatch: {predicted.shape}, {z.shape}, {r_diag.shape}")
    if np.any(r_diag <= 0):
        raise DomainError("Observation noise variances must be positive")
    r = z - predicted
    return float(np.exp(-0.5 * np.sum(r * r / r_diag) / r.size))


@dataclass
class LikelihoodTrace:
    """Per-step visual and tactile observation likelihoods of a filter run."""
    visual: np.ndarray
    tactile: np.ndarray


def likelihood_trace(results: Sequence[FilterStepResult], observations) -> LikelihoodTrace:
    """Likelihood of every observation under the prediction at the posterior mean."""
    visual, tactile = [], []
    for res, z in zip(results, observations):
        z = np.asarray(z, dtype=float)
        pred = res.predicted_obs.detach().numpy()
        r_diag = res.r_diag.detach().numpy()
        visual.append(obs_likelihood(pred[:VISUAL_SIZE], z[:VISUAL_SIZE], r_diag[:VISUAL_SIZE]))
        tactile.append(obs_likelihood(res.force_mean.detach().numpy(), z[VISUAL_SIZE:],
                                      r_diag[VISUAL_SIZE:]))
    return LikelihoodTrace(np.array(visual), np.array(tactile))


@dataclass
class ChangeDecision:
    changed: bool
    onset: Optional[int]
    decided: bool
    calibration: float = float('nan')
    window_means: List[float] = field(default_factory=list)


def change_detector(stream, window: int = CHANGE_WINDOW, dt: float = DT,
                    calibration_seconds: float = CALIBRATION_SECONDS,
                    ratio: float = CHANGE_RATIO) -> ChangeDecision:
    """
    Flag a change when the windowed mean likelihood drops below ratio times its calibration level.

    The calibration level is the mean over the first calibration_seconds of
    the stream. Windows start after the calibration period; the onset is the
    last sample of the first flagged window.

    Args:
        stream: Likelihood samples, one per step
        window: Window length in samples (at least 5)
        dt: Sample period (s)
        calibration_seconds: Length of the calibration period
        ratio: Fraction of the calibration level that triggers a change

    Returns:
        ChangeDecision; decided is False when the stream is too short
    """
    if window < MIN_WINDOW:
        raise DomainError(f"Window must hold at least {MIN_WINDOW} samples, got {window}")
    stream = np.asarray(stream, dtype=float).reshape(-1)
    n_cal = max(1, int(round(calibration_seconds / dt)))
    if len(stream) < window or len(stream) < n_cal + window:
        logger.debug(f"Stream of {len(stream)} samples too short for a decision")
        return ChangeDecision(False, None, False)
    calibration = float(stream[:n_cal].mean())
    means = np.convolve(stream[n_cal:], np.ones(window) / window, mode='valid')
    flagged = np.nonzero(means < ratio * calibration)[0]
    if flagged.size == 0:
        return ChangeDecision(False, None, True, calibration, means.tolist())
    onset = int(n_cal + flagged[0] + window - 1)
    logger.info(f"Likelihood change detected at step {onset} ({onset * dt:.2f} s)")
    return ChangeDecision(True, onset, True, calibration, means.tolist())


def tilt_bias(obj: RigidObjectModel, direction: float, link: int = 0,
              fraction: float = TILT_BIAS_FRACTION) -> np.ndarray:
    """
    Constant tactile bias imitating a tilted support.

    Its magnitude is fraction * m * g * f of the contacted link, aligned with
    the push direction.
    """
    contacted = obj.links[link]
    magnitude = fraction * contacted.mass * GRAVITY * contacted.friction
    return magnitude * np.array([np.cos(direction), np.sin(direction)])


def inject_tactile_bias(traj: Trajectory, bias, start_step: int) -> Trajectory:
    """Copy of a trajectory whose tactile observations carry bias from start_step on."""
    obs = traj.observations.copy()
    obs[start_step:, VISUAL_SIZE:] += np.asarray(bias, dtype=float).reshape(2)
    return replace(traj, observations=obs)
