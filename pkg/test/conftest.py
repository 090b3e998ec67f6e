"""Shared fixtures for the pushfilter test suite."""

import os
import sys

import numpy as np
import pytest

os.environ.setdefault('QT_QPA_PLATFORM', 'offscreen')
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.superquadric import SuperquadricParams  # noqa: E402


@pytest.fixture
def unit_sphere():
    return SuperquadricParams(1.0, 1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def spheroid():
    return SuperquadricParams(1.0, 1.0, 2.0, 1.0, 1.0)


@pytest.fixture
def square_block():
    """10 cm square block resting on the table."""
    return SuperquadricParams(0.2, 0.2, 0.05, 0.05, 0.03, z0=0.03)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_square(x0, y0, theta0=0.0):
    return SuperquadricParams(0.2, 0.2, 0.05, 0.05, 0.03, x0=x0, y0=y0, theta0=theta0, z0=0.03)


@pytest.fixture
def block_object():
    """Homogeneous 10 cm block at (0.4, 0.1)."""
    from src.core.push_simulator import Link, RigidObjectModel
    return RigidObjectModel((Link(make_square(0.4, 0.1), mass=1.0, friction=0.4),), name='block')


@pytest.fixture
def articulated_pair():
    """Two blocks joined at their shared edge with joint friction 0.5."""
    from src.config.constants import ObjectKind
    from src.core.push_simulator import Joint, Link, RigidObjectModel
    links = (Link(make_square(0.4, 0.0), 1.0, friction=0.4), Link(make_square(0.4, 0.12), 1.0, friction=0.4))
    return RigidObjectModel(links, (Joint(0, 1, (0.4, 0.06), friction=0.5),), ObjectKind.ARTICULATED,
                            name='pair')
