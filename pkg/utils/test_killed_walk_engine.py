#!/usr/bin/env python3
"""
Tests for random streams, the killed-walk engine and the Brownian exit oracle
"""
import math

import numpy as np
import pytest
from scipy.stats import norm

from core.exceptions import ArgumentError, PreconditionError
from scripts.geometry.cone_geometry import Box, HalfLine, Orthant, thicken
from scripts.simulation.brownian_exit import BrownianConfig, brownian_exit_tail, orthogonal_facets
from scripts.simulation.killed_walk_engine import (BoxTarget, KilledFunctional, KilledWalkEngine,
                                                   Reservoir, WalkConfig, paired_events,
                                                   simulate_exit, simulate_reverse_exit, survival_batch)
from scripts.simulation.random_streams import StreamFactory
from scripts.steps.step_distributions import FiniteAtoms


def test_streams_are_reproducible_and_separated():
    factory = StreamFactory(42)
    a = factory.stream("tail", 0).random(5)
    b = StreamFactory(42).stream("tail", 0).random(5)
    c = factory.stream("tail", 1).random(5)
    d = factory.stream("llt", 0).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert factory.child("x") == StreamFactory(42).child("x")


def test_simulate_exit_deterministic_drift():
    down = FiniteAtoms([[-1.0]], [1.0])
    record = simulate_exit(2.5, down, HalfLine(), 10, np.random.default_rng(0), horizons=[1, 2, 5])
    assert record.exit_time == 3
    assert record.survived_to == [True, True, False]
    assert record.endpoints[2] == [0.5]
    assert not record.censored


def test_simulate_exit_censoring():
    up = FiniteAtoms([[1.0]], [1.0])
    record = simulate_exit(0.5, up, HalfLine(), 4, np.random.default_rng(0))
    assert record.censored
    assert record.endpoints[4] == [4.5]


def test_reverse_exit_uses_negated_steps():
    up = FiniteAtoms([[1.0]], [1.0])
    record = simulate_reverse_exit(1.5, up, HalfLine(), 5, np.random.default_rng(0))
    assert record.exit_time == 2


def test_start_outside_region():
    with pytest.raises(PreconditionError):
        simulate_exit(-1.0, FiniteAtoms([[1.0]], [1.0]), HalfLine(), 3, np.random.default_rng(0))


def test_survival_batch_argument_checks(simple_walk):
    engine = KilledWalkEngine()
    with pytest.raises(ArgumentError):
        engine.survival_batch(1.0, simple_walk, HalfLine(), [4, 2], 5000)
    with pytest.raises(ArgumentError):
        engine.survival_batch(1.0, simple_walk, HalfLine(), [2, 4], 10)


def test_simple_walk_survival_matches_ballot_numbers(simple_walk):
    table = survival_batch(1.0, simple_walk, HalfLine(), [1, 2, 3, 4], 40_000, master_seed=5,
                           block_size=5_000, workers=2)
    exact = [math.comb(n, n // 2) / 2 ** n for n in (1, 2, 3, 4)]
    assert np.all(np.abs(table.phat() - exact) < 5 * table.stderr() + 1e-12)
    # every surviving endpoint is a positive integer of the right parity
    ends = table.survivor_endpoints[3][:, 0]
    assert np.all(ends > 0)
    assert set(np.unique(ends)) <= {2.0, 4.0}


def test_survival_table_identical_for_any_worker_count(gaussian_2d):
    kwargs = dict(total_paths=12_000, master_seed=9, block_size=2_000)
    one = survival_batch([1.0, 1.0], gaussian_2d, Orthant(2), [5, 20], workers=1, **kwargs)
    many = survival_batch([1.0, 1.0], gaussian_2d, Orthant(2), [5, 20], workers=6, **kwargs)
    assert one.counts == many.counts
    assert np.array_equal(one.survivor_endpoints[20], many.survivor_endpoints[20])


def test_extra_region_none_never_kills(simple_walk):
    engine = KilledWalkEngine(WalkConfig(master_seed=1, block_size=1_000, workers=1))
    table = engine.survival_batch(1.0, simple_walk, HalfLine(), [3, 6], 2_000, extra_regions=[None])
    assert table.region_counts[1] == [2_000, 2_000]
    assert table.phat(1) == pytest.approx([1.0, 1.0])


def test_box_targets_and_functionals(simple_walk):
    engine = KilledWalkEngine(WalkConfig(master_seed=3, block_size=1_000, workers=2))
    target = BoxTarget("near", {2: Box((0.5,), (1.5,))})
    ones = KilledFunctional("ones", lambda pts: np.ones(len(pts)))
    table = engine.survival_batch(1.0, simple_walk, HalfLine(), [2, 4], 4_000, targets=[target],
                                  functionals=[ones])
    # survivors at n=2 sit at 1 or 3, each with probability 1/4
    assert table.box_hits["near"][1] == 0
    assert abs(table.box_phat("near")[0] - 0.25) < 0.04
    mean, _ = table.functional_mean("ones")
    assert mean == pytest.approx(table.phat())
    assert table.box_phat("near")[0] <= table.phat()[0]


def test_thickened_region_survives_longer(gaussian_2d):
    engine = KilledWalkEngine(WalkConfig(master_seed=11, block_size=5_000, workers=2))
    outer = thicken(Orthant(2), 1.0, "-")
    table = engine.survival_batch([1.0, 1.0], gaussian_2d, Orthant(2), [10], 10_000, extra_regions=[outer])
    assert table.region_counts[1][0] >= table.region_counts[0][0]


def test_reservoir_merge_order_insensitive():
    rng = np.random.default_rng(0)
    keys_a, keys_b = rng.random(50), rng.random(50)
    pts_a, pts_b = rng.random((50, 2)), rng.random((50, 2))
    left, right = Reservoir(20, 2), Reservoir(20, 2)
    left.offer(keys_a, pts_a)
    left.offer(keys_b, pts_b)
    right.offer(keys_b, pts_b)
    right.offer(keys_a, pts_a)
    assert np.array_equal(left.points, right.points)
    assert len(left.keys) == 20


def test_paired_events_on_a_fixed_sequence():
    incs = np.array([[[1.0], [1.0]]])
    forward, backward = paired_events(incs, np.array([0.5]), np.array([2.5]), HalfLine(), HalfLine(),
                                      Box((2.0,), (3.0,)), Box((0.0,), (1.0,)))
    assert forward.tolist() == [True]
    assert backward.tolist() == [True]


def test_brownian_halfline_tail():
    estimate = brownian_exit_tail(1.0, HalfLine(), 1.0, 20_000, master_seed=2,
                                  config=BrownianConfig(block_size=5_000, workers=2))
    assert estimate.bridge_corrected
    exact = 2 * norm.cdf(1.0) - 1
    assert abs(estimate.value - exact) < 5 * estimate.stderr + 1e-3


def test_brownian_orthant_tail_factorizes():
    estimate = brownian_exit_tail([1.0, 1.0], Orthant(2), 1.0, 20_000, master_seed=4,
                                  config=BrownianConfig(block_size=5_000, workers=2))
    exact = (2 * norm.cdf(1.0) - 1) ** 2
    assert abs(estimate.value - exact) < 5 * estimate.stderr + 1e-3


def test_orthogonal_facets_detects_orthant():
    assert orthogonal_facets(Orthant(3)) is not None


def test_brownian_rejects_coarse_dt():
    with pytest.raises(ArgumentError):
        brownian_exit_tail(1.0, HalfLine(), 1.0, 100, dt=0.1)
