"""Configuration package for pushfilter."""

# Centralized version - update this for new releases
__version__ = "0.3.0"
VERSION = f"v{__version__}"

from .constants import (
    COLORS,
    ObjectKind,
    ActionKind,
    Policy,
    DT,
    HORIZON_STEPS,
    NUM_SIGMA_POINTS,
    OBS_VECTOR_SIZE,
    SEED_ENV_VAR,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE
)
from .styles import PLOT_STYLE, SERIES_COLORS

__all__ = [
    '__version__',
    'VERSION',
    'COLORS',
    'ObjectKind',
    'ActionKind',
    'Policy',
    'DT',
    'HORIZON_STEPS',
    'NUM_SIGMA_POINTS',
    'OBS_VECTOR_SIZE',
    'SEED_ENV_VAR',
    'EXIT_OK',
    'EXIT_RUNTIME',
    'EXIT_USAGE',
    'PLOT_STYLE',
    'SERIES_COLORS'
]
