#!/usr/bin/env python3
"""
Tests for confidence intervals, log-log fits, ratios and histogram comparison
"""
import math

import numpy as np
import pytest

from core.exceptions import ArgumentError
from scripts.analysis.stats_toolkit import (envelope_trend, gaussian_envelope, histogram_compare,
                                            loglog_fit, ratio_with_ci, wilson_ci, worst_verdict)


def test_wilson_interval_contains_point():
    ci = wilson_ci(30, 100)
    assert ci.low < 0.3 < ci.high
    assert ci.point == pytest.approx(0.3)


def test_wilson_interval_edges():
    assert wilson_ci(0, 50).low == 0.0
    assert wilson_ci(50, 50).high == 1.0
    with pytest.raises(ArgumentError):
        wilson_ci(5, 0)
    with pytest.raises(ArgumentError):
        wilson_ci(6, 5)


def test_loglog_fit_recovers_exponent():
    ns = np.array([64, 128, 256, 512, 1024])
    values = 0.8 * ns ** -0.5
    fit = loglog_fit(ns, values)
    assert fit.slope == pytest.approx(-0.5)
    assert fit.intercept == pytest.approx(math.log(0.8))
    assert not fit.weighted


def test_weighted_loglog_fit_and_dropped_points():
    ns = np.array([10, 20, 40, 80, 160, 320])
    values = 2.0 * ns ** -1.0
    values[-1] = 0.0
    fit = loglog_fit(ns, values, stderrs=np.full(6, 1e-3))
    assert fit.dropped == 1
    assert fit.n_points == 5
    assert fit.slope == pytest.approx(-1.0, abs=1e-9)
    assert fit.slope_se > 0


def test_loglog_fit_needs_enough_points():
    with pytest.raises(ArgumentError):
        loglog_fit([1, 2, 3], [1.0, 0.5, 0.3])


def test_ratio_with_ci():
    est = ratio_with_ci(1.0, 0.01, 2.0, 0.02)
    assert est.ratio == pytest.approx(0.5)
    assert est.stderr == pytest.approx(math.sqrt(0.01 ** 2 + 0.25 * 0.02 ** 2) / 2.0)
    assert not est.inconclusive
    assert ratio_with_ci(1.0, 0.1, 0.01, 0.01).inconclusive


def test_histogram_compare_perfect_match():
    predicted = np.array([0.2, 0.3, 0.4])
    counts = (predicted * 10_000).astype(int)
    result = histogram_compare(counts, predicted, 10_000)
    assert result.max_rel_dev == pytest.approx(0.0, abs=1e-12)
    assert result.tv_distance == pytest.approx(0.0, abs=1e-12)
    assert result.bins_used == 3


def test_histogram_compare_counts_outside_mass():
    result = histogram_compare([5_000, 5_000], [0.25, 0.25], 10_000, min_hits=10)
    # observed puts nothing outside the bins, predicted leaves half outside
    assert result.tv_distance == pytest.approx(0.5)
    with pytest.raises(ArgumentError):
        histogram_compare([1, 2], [0.7, 0.7], 10)


def test_envelope_trend_flags_growth():
    ns = [10, 100, 1000, 10000]
    assert not envelope_trend(ns, [1.0, 1.01, 0.99, 1.0]).diverges
    assert envelope_trend(ns, [1.0, 3.0, 9.0, 27.0]).diverges


def test_gaussian_envelope_fits_decay():
    t = np.array([0.5, 1.0, 1.5, 2.0])
    result = gaussian_envelope(t, 3.0 * np.exp(-0.5 * t ** 2))
    assert result['c'] == pytest.approx(0.5)
    assert result['C'] == pytest.approx(3.0)


def test_worst_verdict_order():
    assert worst_verdict(["pass", "inconclusive", "fail"]) == "fail"
    assert worst_verdict(["pass", "inconclusive"]) == "inconclusive"
    assert worst_verdict(["pass", "pass"]) == "pass"
    assert worst_verdict([]) == "inconclusive"
