"""
Experiment configuration.

An ExperimentConfig is read from a YAML file with the sections objects,
interaction, filter, training, camera, thresholds and output. Every key is
optional; unknown keys are rejected so typos do not silently fall back to
defaults.
"""

import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

from . import __version__
from .constants import (
    ObjectKind, ActionKind, Policy, OBJECTS_PER_KIND, MASS_RANGE, FRICTION_RANGE,
    JOINT_FRICTION_RANGE, HORIZON_STEPS, AFFORDANCE_CANDIDATES, IG_LOOKAHEAD_STEPS,
    NUM_SIGMA_POINTS, KERNEL_SHRINKAGE, LEARNING_RATE, INTERACTION_BUDGET, ACTIONS_PER_ROUND,
    MAX_EPOCHS_PER_ROUND, BATCH_SIZE, BUFFER_CAPACITY, CAMERA_WIDTH, CAMERA_HEIGHT, CAMERA_FOCAL,
    MAX_VIEWS, NUM_CANDIDATE_VIEWS, ENTROPY_THRESHOLD, CHANGE_WINDOW, CHANGE_RATIO,
    CALIBRATION_SECONDS, CEM_GOAL_TOLERANCE, CEM_MAX_EXECUTIONS, DEFAULT_GOAL, SEED_ENV_VAR
)
from ..core.errors import ConfigError
from ..utils.file_operations import FileManager

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.yaml'
INTERACTION_KINDS = ('auto', ActionKind.PUSH.value, ActionKind.PULL.value)
STAGES = ('shape', 'infer', 'track', 'control', 'detect')


def _pair(value, name: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a pair of numbers, got {value!r}")
    if not lo < hi:
        raise ConfigError(f"{name} must be a non-degenerate interval, got {(lo, hi)}")
    return lo, hi


@dataclass
class ObjectsConfig:
    counts: Dict[str, int] = field(default_factory=lambda: {k.value: OBJECTS_PER_KIND for k in ObjectKind})
    mass_range: Tuple[float, float] = MASS_RANGE
    friction_range: Tuple[float, float] = FRICTION_RANGE
    joint_friction_range: Tuple[float, float] = JOINT_FRICTION_RANGE
    folder: Optional[str] = None
    limit: Optional[int] = None

    def validate(self):
        for kind, n in self.counts.items():
            try:
                ObjectKind(kind)
            except ValueError:
                raise ConfigError(f"Unknown object kind '{kind}'")
            if int(n) < 0:
                raise ConfigError(f"Negative object count for {kind}")
        self.counts = {k: int(v) for k, v in self.counts.items()}
        self.mass_range = _pair(self.mass_range, 'objects.mass_range')
        self.friction_range = _pair(self.friction_range, 'objects.friction_range')
        self.joint_friction_range = _pair(self.joint_friction_range, 'objects.joint_friction_range')
        if self.folder is not None and not os.path.isdir(self.folder):
            raise ConfigError(f"Object folder not found: {self.folder}")
        if self.limit is not None and int(self.limit) < 1:
            raise ConfigError("objects.limit must be at least 1")


@dataclass
class InteractionConfig:
    kind: str = 'auto'
    policy: str = Policy.ACTIVE.value
    interactions: int = 6
    steps: int = HORIZON_STEPS
    candidates: int = AFFORDANCE_CANDIDATES
    lookahead: int = IG_LOOKAHEAD_STEPS
    goal: Tuple[float, float, float] = DEFAULT_GOAL
    control_budget: int = CEM_MAX_EXECUTIONS

    def validate(self):
        if self.kind not in INTERACTION_KINDS:
            raise ConfigError(f"interaction.kind must be one of {INTERACTION_KINDS}, got '{self.kind}'")
        try:
            Policy(self.policy)
        except ValueError:
            raise ConfigError(f"Unknown policy '{self.policy}'")
        for name in ('interactions', 'steps', 'candidates', 'lookahead', 'control_budget'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"interaction.{name} must be at least 1")
        if len(self.goal) != 3:
            raise ConfigError("interaction.goal needs three entries (x, y, theta)")
        self.goal = tuple(float(v) for v in self.goal)


@dataclass
class FilterConfig:
    model: str = 'analytical'
    checkpoint: Optional[str] = None
    num_points: int = NUM_SIGMA_POINTS
    shrinkage: float = KERNEL_SHRINKAGE

    def validate(self):
        if self.model not in ('graph', 'ff', 'analytical'):
            raise ConfigError(f"Unknown model type '{self.model}'")
        if self.checkpoint is not None and not os.path.exists(self.checkpoint):
            raise ConfigError(f"Checkpoint not found: {self.checkpoint}")
        if int(self.num_points) < 2:
            raise ConfigError("filter.num_points must be at least 2")
        if not 0.0 < float(self.shrinkage) <= 1.0:
            raise ConfigError("filter.shrinkage must lie in (0, 1]")


@dataclass
class TrainingConfig:
    lr: float = LEARNING_RATE
    budget: int = INTERACTION_BUDGET
    actions_per_round: int = ACTIONS_PER_ROUND
    max_epochs: int = MAX_EPOCHS_PER_ROUND
    batch_size: int = BATCH_SIZE
    capacity: int = BUFFER_CAPACITY

    def validate(self):
        if float(self.lr) < 0:
            raise ConfigError("training.lr must be non-negative")
        for name in ('budget', 'actions_per_round', 'max_epochs', 'batch_size', 'capacity'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"training.{name} must be at least 1")


@dataclass
class CameraConfig:
    width: int = CAMERA_WIDTH
    height: int = CAMERA_HEIGHT
    focal: float = CAMERA_FOCAL
    max_views: int = MAX_VIEWS
    candidate_views: int = NUM_CANDIDATE_VIEWS

    def validate(self):
        if int(self.width) < 1 or int(self.height) < 1 or float(self.focal) <= 0:
            raise ConfigError("camera width, height and focal must be positive")
        if int(self.max_views) < 1 or int(self.candidate_views) < 1:
            raise ConfigError("camera.max_views and camera.candidate_views must be at least 1")


@dataclass
class ThresholdsConfig:
    entropy: float = ENTROPY_THRESHOLD
    validation: float = 0.0
    change_ratio: float = CHANGE_RATIO
    change_window: int = CHANGE_WINDOW
    calibration_seconds: float = CALIBRATION_SECONDS
    goal_tolerance: float = CEM_GOAL_TOLERANCE

    def validate(self):
        if not 0.0 < float(self.change_ratio) < 1.0:
            raise ConfigError("thresholds.change_ratio must lie in (0, 1)")
        if int(self.change_window) < 5:
            raise ConfigError("thresholds.change_window must be at least 5 samples")
        if float(self.entropy) <= 0 or float(self.calibration_seconds) <= 0:
            raise ConfigError("thresholds.entropy and thresholds.calibration_seconds must be positive")


@dataclass
class OutputConfig:
    directory: str = 'runs'
    plots: bool = True
    stages: List[str] = field(default_factory=lambda: list(STAGES))

    def validate(self):
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ConfigError(f"Unknown output stages {sorted(unknown)}, expected a subset of {STAGES}")


_SECTIONS = {
    'objects': ObjectsConfig,
    'interaction': InteractionConfig,
    'filter': FilterConfig,
    'training': TrainingConfig,
    'camera': CameraConfig,
    'thresholds': ThresholdsConfig,
    'output': OutputConfig,
}


@dataclass
class ExperimentConfig:
    """Seed plus one dataclass per configuration section."""
    seed: int = 0
    objects: ObjectsConfig = field(default_factory=ObjectsConfig)
    interaction: InteractionConfig = field(default_factory=InteractionConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    thresholds: ThresholdsConfig = field(default_factory=ThresholdsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        self.seed = int(self.seed)
        for name in _SECTIONS:
            getattr(self, name).validate()

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'ExperimentConfig':
        """
        Build a config from a parsed YAML mapping.

        Raises:
            ConfigError: Unknown section or key, or an invalid value
        """
        data = dict(data or {})
        unknown = set(data) - set(_SECTIONS) - {'seed'}
        if unknown:
            raise ConfigError(f"Unknown configuration sections {sorted(unknown)}")
        kwargs = {'seed': data.get('seed', 0)}
        for name, section_cls in _SECTIONS.items():
            values = data.get(name) or {}
            if not isinstance(values, dict):
                raise ConfigError(f"Section '{name}' must be a mapping")
            allowed = {f.name for f in fields(section_cls)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"Unknown keys in '{name}': {sorted(bad)}")
            try:
                kwargs[name] = section_cls(**values)
            except TypeError as exc:
                raise ConfigError(f"Invalid section '{name}': {exc}")
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"Invalid configuration: {exc}")

    @classmethod
    def load(cls, path: Optional[str] = None) -> 'ExperimentConfig':
        """Load a YAML config (defaults when path is None) and apply the seed override."""
        config = cls.from_dict(FileManager.load_yaml(path) if path else {})
        return config.with_env_seed()

    def with_env_seed(self) -> 'ExperimentConfig':
        value = os.environ.get(SEED_ENV_VAR)
        if value is None or value == '':
            return self
        try:
            self.seed = int(value)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{value}'")
        logger.info(f"Seed overridden by {SEED_ENV_VAR}: {self.seed}")
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        # YAML-safe: tuples become lists
        return _plain(data)

    def config_hash(self) -> str:
        return FileManager.config_hash(self.to_dict())


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def write_manifest(directory: str, config: ExperimentConfig, command: str,
                   extra: Optional[dict] = None) -> str:
    """
    Write manifest.yaml next to a run's outputs.

    Args:
        directory: Output directory
        config: Effective configuration (after the seed override)
        command: CLI subcommand that produced the outputs
        extra: Additional entries, e.g. input files

    Returns:
        Path of the manifest
    """
    path = os.path.join(directory, MANIFEST_NAME)
    FileManager.save_yaml(path, {
        'command': command,
        'version': __version__,
        'seed': config.seed,
        'config_hash': config.config_hash(),
        'thresholds': _plain(asdict(config.thresholds)),
        'config': config.to_dict(),
        **(extra or {}),
    })
    logger.debug(f"Wrote manifest {path}")
    return path
