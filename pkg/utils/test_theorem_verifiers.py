#!/usr/bin/env python3
"""
Tests for the theorem verifiers on small budgets
"""
import math

import numpy as np
import pytest

from core.exceptions import AperiodicityError, ArgumentError
from scripts.analysis.cone_constants import compute_constants
from scripts.analysis.harmonic_estimator import HarmonicConfig
from scripts.geometry.cone_geometry import Box, HalfLine, LinearImage as ConeImage, Orthant
from scripts.simulation.killed_walk_engine import WalkConfig
from scripts.steps.step_distributions import FiniteAtoms, LatticeStructure, StandardGaussian
from scripts.verification.theorem_verifiers import (TheoremVerifier, VerifierSettings, box_quadrature,
                                                    decide_verdict, lattice_structure_of, prepare_problem)

PLANAR_STEPS = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]


def make_verifier(cone, dist, paths=20_000, harmonic_horizons=(8, 16, 32), seed=11):
    problem = prepare_problem(cone, dist)
    constants = compute_constants(problem.cone, problem.spectral)
    settings = VerifierSettings(paths=paths,
                                harmonic=HarmonicConfig(horizons=list(harmonic_horizons), paths=5_000,
                                                        outer_paths=50, inner_paths=1_000, inner_horizon=16))
    walk = WalkConfig(master_seed=seed, block_size=5_000, workers=2, reservoir_capacity=50_000)
    return TheoremVerifier(problem, constants, settings, walk)


def test_decide_verdict():
    assert decide_verdict(1.05, 0.01, 0.1) == "pass"
    assert decide_verdict(1.5, 0.01, 0.1) == "fail"
    assert decide_verdict(1.5, 0.2, 0.1) == "inconclusive"
    assert decide_verdict(float("nan"), 0.01, 0.1) == "inconclusive"


def test_lattice_structure_of():
    assert lattice_structure_of(StandardGaussian(2)) is None
    integer = lattice_structure_of(FiniteAtoms([[-1.0], [1.0]], [0.5, 0.5]))
    assert integer.rank == 1 and integer.vector_dim == 0
    real = lattice_structure_of(FiniteAtoms([[-0.5], [0.5]], [0.5, 0.5]))
    assert real.rank == 0 and real.vector_dim == 1
    declared = LatticeStructure(0, np.array([[2.0]]))
    assert lattice_structure_of(FiniteAtoms([[-2.0], [2.0]], [0.5, 0.5], declared)) is declared


def test_box_quadrature_is_exact_for_polynomials():
    box = Box((0.0, 0.0), (1.0, 2.0))
    assert box_quadrature(box, lambda y: y[:, 0] * y[:, 1]) == pytest.approx(1.0)


def test_prepare_problem_whitens_cone_and_law():
    law = FiniteAtoms([[2.0, -1.0], [0.0, -1.0], [-1.0, 1.0]], [0.25, 0.25, 0.5])
    problem = prepare_problem(Orthant(2), law)
    _, cov = problem.dist.moments()
    assert np.allclose(cov, np.eye(2), atol=1e-10)
    assert isinstance(problem.cone, ConeImage)
    assert problem.spectral.family == "wedge"
    assert problem.summary()['cone'] == "orthant(2)"


def test_prepare_problem_dimension_mismatch(gaussian_1d):
    with pytest.raises(ArgumentError):
        prepare_problem(Orthant(2), gaussian_1d)


def test_tail_of_simple_walk(simple_walk):
    verifier = make_verifier(HalfLine(), simple_walk)
    report = verifier.verify_tail(1.0, [16, 32, 64, 128])
    assert report.checks['exact_agreement'] == "pass"
    assert report.checks['slope'] == "pass"
    assert report.checks['envelope'] == "pass"
    assert report.verdict in ("pass", "inconclusive")
    assert len(report.rows) == 4
    assert 'rows' not in report.to_dict()


def test_tail_needs_four_horizons(simple_walk):
    verifier = make_verifier(HalfLine(), simple_walk)
    with pytest.raises(ArgumentError):
        verifier.verify_tail(1.0, [8, 16, 32])


def test_local_limit_refuses_periodic_law(simple_walk):
    verifier = make_verifier(HalfLine(), simple_walk)
    with pytest.raises(AperiodicityError) as info:
        verifier.verify_stone_llt(1.0, [64], [1.0])
    assert info.value.witness == pytest.approx([math.pi])
    with pytest.raises(AperiodicityError):
        verifier.verify_return_prob(1.0, Box((1.0,), (2.0,)), [64, 128])


def test_return_probability_lazy_walk_halfline():
    # whitened lattice spacing sqrt(2); the box holds the single lattice point 4 sqrt(2)
    lazy = FiniteAtoms([[-1.0], [0.0], [1.0]], [0.25, 0.5, 0.25])
    verifier = make_verifier(HalfLine(), lazy, paths=100_000, harmonic_horizons=(64, 128, 256))
    h = math.sqrt(2.0)
    box = Box((3 * h + 0.05,), (4 * h + 0.05,))
    report = verifier.verify_return_prob(h, box, [50, 100, 200])

    assert report.name == "return"
    assert report.checks['envelope'] == "pass"
    assert report.checks['ratio'] == "pass"
    assert report.details['largest_feasible_horizon'] == 200
    assert report.rows[-1]['hits'] >= 150
    assert abs(report.ratio - 1.0) < 0.3
    assert report.verdict == "pass"


def test_local_limit_gaussian_halfline(gaussian_1d):
    verifier = make_verifier(HalfLine(), gaussian_1d, paths=50_000, harmonic_horizons=(50, 100, 200))
    report = verifier.verify_stone_llt(1.0, [100], [1.0], delta=5.0)
    assert report.name == "llt"
    assert report.rows[0]['hits'] >= 300
    assert abs(report.ratio - 1.0) < 0.35


def test_weak_limit_report_shape(gaussian_1d):
    verifier = make_verifier(HalfLine(), gaussian_1d, harmonic_horizons=(16, 32, 64))
    report = verifier.verify_weak_limit(1.0, 64)
    assert report.name == "weak-limit"
    assert 0.0 < report.predicted <= 1.0
    assert report.details['survivors'] > 0
    assert 'mode' in report.details


def test_duality_inclusions_hold_exactly():
    walk = FiniteAtoms(PLANAR_STEPS, [0.25] * 4)
    verifier = make_verifier(Orthant(2), walk)
    report = verifier.verify_duality([([1.0, 1.0], [2.0, 2.0])], delta=0.5, delta_tilde=1.0, horizon=4)
    assert report.details['tested'] == 2
    assert all(row['method'] == 'exact' for row in report.rows)
    assert report.verdict == "pass"


def test_duality_skips_invalid_thickening():
    walk = FiniteAtoms(PLANAR_STEPS, [0.25] * 4)
    verifier = make_verifier(Orthant(2), walk)
    report = verifier.verify_duality([([1.0, 1.0], [2.0, 2.0])], delta=1.0, delta_tilde=0.5, horizon=2)
    assert any(row['status'] == 'skipped' for row in report.rows)


def test_gaussian_bounds_free_walk_matches_normal_law(gaussian_1d):
    verifier = make_verifier(HalfLine(), gaussian_1d, harmonic_horizons=(16, 32, 64))
    report = verifier.check_gaussian_bounds(2.0, [0.5, 1.0], 1.0, [16, 32, 64])
    assert report.checks['exact_agreement'] == "pass"
    assert set(report.checks) >= {'free', 'killed', 'gaussian_tail'}
    assert len(report.plot_rows) == 3


def test_harmonic_report_for_simple_walk(simple_walk):
    verifier = make_verifier(HalfLine(), simple_walk)
    report = verifier.verify_harmonic(2.0)
    assert report.checks['positive'] == "pass"
    assert report.checks['growth'] == "pass"
    assert report.predicted == pytest.approx(2.0)
    assert abs(report.estimated - 2.0) < 5 * report.estimated_stderr
