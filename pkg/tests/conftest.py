"""Shared fixtures: default hardware objects and a seeded generator."""

import sys
from pathlib import Path

import numpy as np
import pytest

# make the sibling reference module importable as plain `reference`
sys.path.insert(0, str(Path(__file__).parent))

from mptsim.fields import TrapGeometry
from mptsim.secular import MagnetSpec


@pytest.fixture
def geom():
    return TrapGeometry()


@pytest.fixture
def spec():
    return MagnetSpec()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
