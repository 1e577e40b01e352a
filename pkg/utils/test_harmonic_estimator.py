#!/usr/bin/env python3
"""
Tests for Monte Carlo estimates of V, the harmonicity residual and the 1D renewal series
"""
import math

import numpy as np
import pytest

from core.exceptions import ArgumentError, PreconditionError
from scripts.analysis.harmonic_estimator import (HarmonicConfig, HarmonicEstimator, estimate_V, is_stabilized,
                                                 ladder_height_law, renewal_V_1d, renewal_function)
from scripts.geometry.cone_geometry import HalfLine, Orthant
from scripts.geometry.spectral_data import spectral_data
from scripts.simulation.killed_walk_engine import WalkConfig
from scripts.steps.step_distributions import FiniteAtoms, ProductOf1D


@pytest.fixture
def estimator(simple_walk):
    config = HarmonicConfig(horizons=[8, 16, 32], paths=20_000)
    return HarmonicEstimator(HalfLine(), simple_walk, config=config,
                             walk_config=WalkConfig(block_size=5_000, workers=2))


def test_is_stabilized():
    flat = [(8, 1.0, 0.01), (16, 1.005, 0.01), (32, 0.995, 0.01)]
    drifting = [(8, 1.0, 0.01), (16, 1.2, 0.01), (32, 1.4, 0.01)]
    assert is_stabilized(flat)
    assert not is_stabilized(drifting)
    assert not is_stabilized(flat[:2])


def test_V_of_simple_walk_is_identity(estimator):
    # u(x) = x is exactly harmonic for the +-1 walk killed at zero
    estimate = estimator.estimate_V(3.0, seed=1)
    assert abs(estimate.value - 3.0) < 5 * estimate.stderr
    assert estimate.horizon_used == 32
    assert len(estimate.curve) == 3


def test_V_tilde_uses_reversed_steps(estimator):
    estimate = estimator.estimate_V_tilde(2.0, seed=2)
    assert abs(estimate.value - 2.0) < 5 * estimate.stderr


def test_estimate_rejects_outside_point(estimator):
    with pytest.raises(PreconditionError):
        estimator.estimate_V(-1.0)


def test_harmonicity_residual_for_finite_law(estimator):
    inner = estimator.pointwise(horizon=16, paths=4_000, seed=3)
    result = estimator.harmonicity_residual(2.0, inner)
    assert result.outer_draws == 2
    assert result.survivors == 2
    assert abs(result.residual) < 5 * result.stderr


def test_harmonicity_residual_flags_function_that_is_not_harmonic():
    # u(x) = x misses the overshoot mass of the -2 step near zero
    overshoot = FiniteAtoms([[-2.0], [1.0]], [1 / 3, 2 / 3])
    estimator = HarmonicEstimator(HalfLine(), overshoot)
    identity = lambda y: (float(np.asarray(y).reshape(-1)[0]), 0.0)

    near = estimator.harmonicity_residual(1.0, identity)
    assert near.residual == pytest.approx(-1 / 3)
    assert not near.passes

    far = estimator.harmonicity_residual(3.0, identity)
    assert far.residual == pytest.approx(0.0, abs=1e-12)
    assert far.passes


def test_harmonicity_residual_accepts_exact_harmonic_function(simple_walk):
    estimator = HarmonicEstimator(HalfLine(), simple_walk)
    identity = lambda y: (float(np.asarray(y).reshape(-1)[0]), 0.0)
    for x in (1.0, 2.0, 5.0):
        result = estimator.harmonicity_residual(x, identity)
        assert result.residual == pytest.approx(0.0, abs=1e-12)
        assert result.passes


def test_pointwise_is_zero_outside_cone(estimator):
    inner = estimator.pointwise(horizon=8, paths=2_000)
    assert inner(np.array([-0.5])) == (0.0, 0.0)


def test_pointwise_is_reproducible(estimator):
    first = estimator.pointwise(horizon=8, paths=2_000, seed=4)(np.array([1.0]))
    second = estimator.pointwise(horizon=8, paths=2_000, seed=4)(np.array([1.0]))
    assert first == second


def test_ladder_height_of_simple_walk(simple_walk):
    law = ladder_height_law(simple_walk, depth=200)
    assert law.heights.tolist() == [1.0]
    assert law.masses.tolist() == pytest.approx([1.0])
    assert 0.0 < law.unresolved_mass < 0.2


def test_renewal_series_counts_integers(simple_walk):
    closed = renewal_V_1d(simple_walk, 2.5, truncation=200, ladder="descending")
    assert closed.value == pytest.approx(3.0)
    at_integer = renewal_V_1d(simple_walk, 3.0, truncation=200, ladder="descending")
    assert at_integer.value == pytest.approx(4.0)
    law = ladder_height_law(simple_walk, depth=200, ladder="descending")
    assert renewal_function(law, 3.0, convention="open").value == pytest.approx(3.0)


def test_renewal_rejects_uncentered_law():
    drift = FiniteAtoms([[-1.0], [2.0]], [0.5, 0.5])
    with pytest.raises(ArgumentError):
        ladder_height_law(drift)
    with pytest.raises(ArgumentError):
        renewal_V_1d(FiniteAtoms([[-1.0], [1.0]], [0.5, 0.5]), -1.0)


@pytest.fixture
def sqrt2_walk():
    up = 1 / (1 + math.sqrt(2))
    return FiniteAtoms([[-1.0], [math.sqrt(2)]], [1 - up, up])


def _on_jump_lattice(value, max_p=2_000, tol=1e-9):
    p = np.arange(max_p)
    q = p * math.sqrt(2) - value
    near = np.abs(q - np.round(q)) < tol
    return bool(np.any(near & (np.round(q) >= 0)))


def test_renewal_jumps_of_irrational_law(sqrt2_walk):
    law = ladder_height_law(sqrt2_walk, depth=12)
    assert law.heights.max() <= math.sqrt(2) + 1e-12
    assert any(abs(h - math.sqrt(2)) < 1e-12 for h in law.heights)

    value = renewal_function(law, 2.0)
    assert all(_on_jump_lattice(v) for v in value.jumps)
    # p sqrt(2) - q is an integer only for p = 0
    integers = [v for v in value.jumps if abs(v - round(v)) < 1e-9]
    assert integers == [0.0]
    assert value.increments.sum() == pytest.approx(value.value)


def test_renewal_function_is_monotone_in_x(sqrt2_walk):
    law = ladder_height_law(sqrt2_walk, depth=12)
    for convention in ("open", "closed"):
        values = [renewal_function(law, x, convention).value for x in (0.0, 0.5, 1.0, 1.5, 2.0)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))
    assert renewal_function(law, 1.0, "closed").value >= renewal_function(law, 1.0, "open").value


def test_renewal_matches_monte_carlo_V_for_lazy_walk():
    lazy = FiniteAtoms([[-1.0], [0.0], [1.0]], [0.25, 0.5, 0.25])
    estimator = HarmonicEstimator(HalfLine(), lazy, config=HarmonicConfig(horizons=[64, 128, 256], paths=20_000),
                                  walk_config=WalkConfig(block_size=5_000, workers=2))
    for x in (1.0, 2.5, 4.0):
        series = renewal_V_1d(lazy, x, truncation=200, convention="open", ladder="descending")
        mc = estimator.estimate_V(x, seed=5)
        # the fixed-horizon estimate still misses the overshoot of unkilled paths
        assert abs(mc.value - series.value) < 5 * mc.stderr + 0.15


def test_product_law_V_factorizes_on_orthant(simple_walk):
    lazy = FiniteAtoms([[-1.0], [0.0], [1.0]], [0.25, 0.5, 0.25])
    product = ProductOf1D([simple_walk, lazy])
    cone = Orthant(2)
    scale = float(spectral_data(cone).u(np.array([1.0, 1.0])))
    x = np.array([2.0, 3.0])
    first = renewal_V_1d(simple_walk, x[0], truncation=200, convention="open", ladder="descending").value
    second = renewal_V_1d(lazy, x[1], truncation=200, convention="open", ladder="descending").value
    estimate = estimate_V(x, product, cone, horizons=[16, 32, 64], paths=20_000, seed=6)
    assert abs(estimate.value - scale * first * second) < 5 * estimate.stderr
