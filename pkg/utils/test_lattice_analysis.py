#!/usr/bin/env python3
"""
Tests for characteristic functions, the aperiodicity scan and the reachability probe
"""
import math

import numpy as np
import pytest

from core.exceptions import ArgumentError, PreconditionError, UnsupportedDistributionError
from scripts.geometry.cone_geometry import Orthant
from scripts.steps.lattice_analysis import (char_fn, check_aperiodicity, cmu_probe, in_deep_interior,
                                            validate_lattice)
from scripts.steps.step_distributions import FiniteAtoms, LatticeStructure, StandardGaussian

Z1 = LatticeStructure(0, np.array([[1.0]]))
Z2 = LatticeStructure(0, np.eye(2))


@pytest.fixture
def skewed_law():
    return FiniteAtoms([[2.0, -1.0], [0.0, -1.0], [-1.0, 1.0]], [0.25, 0.25, 0.5], Z2)


def test_char_fn_of_simple_walk(simple_walk):
    assert char_fn(simple_walk, [0.0]) == pytest.approx(1.0)
    assert char_fn(simple_walk, [math.pi / 3]).real == pytest.approx(0.5)
    stacked = char_fn(simple_walk, np.array([[0.0], [math.pi]]))
    assert np.allclose(stacked, [1.0, -1.0])


def test_char_fn_needs_atoms(gaussian_1d):
    with pytest.raises(UnsupportedDistributionError):
        char_fn(gaussian_1d, [0.1])


def test_simple_walk_is_periodic_with_witness_pi(simple_walk):
    verdict = check_aperiodicity(simple_walk, Z1, grid_resolution=128)
    assert verdict.status == "periodic"
    assert verdict.witness == pytest.approx([math.pi])


def test_lazy_walk_is_aperiodic():
    lazy = FiniteAtoms([[-1.0], [0.0], [1.0]], [0.25, 0.5, 0.25])
    verdict = check_aperiodicity(lazy, Z1, grid_resolution=128)
    assert verdict.status == "aperiodic"
    assert verdict.witness is None
    assert verdict.max_modulus < 1.0


def test_binomial_walk_is_aperiodic():
    law = FiniteAtoms([[-2.0], [-1.0], [0.0], [1.0], [2.0]], [1 / 16, 1 / 4, 3 / 8, 1 / 4, 1 / 16])
    assert check_aperiodicity(law, Z1, grid_resolution=256).status == "aperiodic"


def test_skewed_planar_law_is_periodic(skewed_law):
    verdict = check_aperiodicity(skewed_law, Z2, grid_resolution=64)
    assert verdict.status == "periodic"
    assert abs(char_fn(skewed_law, verdict.witness)) == pytest.approx(1.0)
    assert abs(char_fn(skewed_law, [math.pi, math.pi / 2])) == pytest.approx(1.0)


def test_aperiodicity_rejects_tiny_grid(simple_walk):
    with pytest.raises(ArgumentError):
        check_aperiodicity(simple_walk, Z1, grid_resolution=1)


def test_validate_lattice(skewed_law):
    assert validate_lattice(skewed_law, Z2)
    off_lattice = FiniteAtoms([[0.5], [-0.5]], [0.5, 0.5])
    assert not validate_lattice(off_lattice, Z1)


def test_deep_interior_membership():
    pts = np.array([[4.0, 1.0], [4.0, 0.1], [0.5, 0.5]])
    assert in_deep_interior(Orthant(2), pts, 0.1, 2.0).tolist() == [True, False, False]


def test_probe_unit_square_is_trapped(skewed_law):
    for x in ([0.5, 0.5], [1.0, 1.0], [0.2, 0.9]):
        result = cmu_probe(skewed_law, Orthant(2), x, gamma=0.1, R=2.0, n_max=8)
        assert result.status == "not-reachable-within-horizon"
        assert result.hit_step is None


def test_probe_reaches_deep_interior(skewed_law):
    direct = cmu_probe(skewed_law, Orthant(2), [2.0, 2.0], gamma=0.1, R=2.0, n_max=8)
    assert direct.status == "reachable"
    assert direct.hit_step == 1
    detour = cmu_probe(skewed_law, Orthant(2), [1.5, 0.5], gamma=0.1, R=2.0, n_max=8)
    assert detour.status == "reachable"
    assert detour.hit_step == 2


def test_probe_node_budget(skewed_law):
    result = cmu_probe(skewed_law, Orthant(2), [1.5, 0.5], gamma=0.9, R=1e6, n_max=20, node_budget=5)
    assert result.status == "inconclusive"


def test_probe_arguments(skewed_law):
    with pytest.raises(ArgumentError):
        cmu_probe(skewed_law, Orthant(2), [2.0, 2.0], 0.1, 2.0, n_max=0)
    with pytest.raises(PreconditionError):
        cmu_probe(skewed_law, Orthant(2), [-1.0, 2.0], 0.1, 2.0, n_max=4)
    with pytest.raises(UnsupportedDistributionError):
        cmu_probe(StandardGaussian(2), Orthant(2), [2.0, 2.0], 0.1, 2.0, n_max=4)


GRID = [0.25 * k for k in range(1, 13)]


@pytest.mark.parametrize("a", GRID)
@pytest.mark.parametrize("b", GRID)
def test_reachability_partitions_quarter_grid(skewed_law, a, b):
    # only the closed unit square is cut off from the deep interior
    result = cmu_probe(skewed_law, Orthant(2), [a, b], gamma=0.1, R=2.0, n_max=8)
    if a <= 1.0 and b <= 1.0:
        assert result.status == "not-reachable-within-horizon"
    else:
        assert result.status == "reachable"
        assert in_deep_interior(Orthant(2), np.array(result.witness), 0.1, 2.0)
