#!/usr/bin/env python3
"""
Shared pytest fixtures for the conewalk test suite
"""
import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from scripts.geometry.cone_geometry import HalfLine, Orthant
from scripts.steps.step_distributions import FiniteAtoms, StandardGaussian

CONFIG_DIR = Path(__file__).parent.parent / "config"


@pytest.fixture
def halfline():
    return HalfLine()


@pytest.fixture
def quadrant():
    return Orthant(2)


@pytest.fixture
def simple_walk():
    """+-1 steps with probability 1/2 each"""
    return FiniteAtoms([[-1.0], [1.0]], [0.5, 0.5])


@pytest.fixture
def gaussian_1d():
    return StandardGaussian(1)


@pytest.fixture
def gaussian_2d():
    return StandardGaussian(2)


@pytest.fixture
def experiments_dir():
    return CONFIG_DIR / "experiments"
