"""Bounded buffer of trajectory segments for iterative training."""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterator, List

import numpy as np

from ..config.constants import BUFFER_CAPACITY
from .observation import SegmentedCloud
from .push_simulator import RigidObjectModel, Trajectory

logger = logging.getLogger(__name__)


@dataclass
class TrainingSegment:
    """A trajectory segment with the object it was recorded on and the initial segmented cloud."""
    obj: RigidObjectModel
    cloud: SegmentedCloud
    traj: Trajectory

    def __len__(self) -> int:
        return len(self.traj)

    @property
    def robot_start(self) -> np.ndarray:
        """Robot position at the start of every step (T, 2)."""
        a = self.traj.action
        return np.stack([a.robot_position(t - self.traj.dt) for t in self.traj.times])


class TrajectoryBuffer:
    """FIFO buffer of training segments; the oldest segments are replaced first."""

    def __init__(self, capacity: int = BUFFER_CAPACITY):
        self.segments = deque(maxlen=capacity)

    @property
    def capacity(self) -> int:
        return self.segments.maxlen

    def clear(self):
        self.segments.clear()

    def add(self, segment: TrainingSegment):
        if len(segment) < 2:
            logger.debug(f"Dropping {len(segment)}-step segment of {segment.obj.name}")
            return
        if len(self.segments) == self.capacity:
            logger.debug("Trajectory buffer full; replacing the oldest segment")
        self.segments.append(segment)

    def extend(self, segments):
        for s in segments:
            self.add(s)

    def add_trajectory(self, obj: RigidObjectModel, cloud: SegmentedCloud, traj: Trajectory,
                       parts: int):
        """Split a trajectory into parts and add every segment."""
        self.extend(TrainingSegment(obj, cloud, seg) for seg in traj.split(parts))

    def minibatches(self, batch_size: int, rng) -> Iterator[List[TrainingSegment]]:
        """Shuffled minibatches covering the buffer once."""
        order = rng.permutation(len(self.segments))
        items = list(self.segments)
        for start in range(0, len(order), batch_size):
            yield [items[i] for i in order[start:start + batch_size]]

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)
