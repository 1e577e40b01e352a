#!/usr/bin/env python3
"""
ConeWalk - Statistics Toolkit
Confidence intervals, weighted log-log fits, ratios and histogram comparisons.

Features:
- Wilson score intervals for survival proportions
- Weighted least-squares log-log slope fits with conservative standard errors
- Ratio estimates with first-order error propagation
- Binned comparison of empirical and predicted masses
- Divergence test for per-horizon envelope constants
- Gaussian envelope fit C exp(-c t^2)
"""
import logging
import math
import sys
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import statsmodels.api as sm
from statsmodels.stats.proportion import proportion_confint

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import ArgumentError

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 4


@dataclass
class ConfidenceInterval:
    point: float
    low: float
    high: float
    level: float
    method: str = "wilson"

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class LogLogFit:
    slope: float
    slope_se: float
    intercept: float
    intercept_se: float
    n_points: int
    dropped: int
    weighted: bool

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class RatioEstimate:
    ratio: float
    stderr: float
    inconclusive: bool

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class HistogramComparison:
    max_rel_dev: float
    tv_distance: float
    tv_stderr: float
    bins_used: int

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class EnvelopeTrend:
    slope: float
    slope_se: float
    diverges: bool
    max_constant: float

    def to_dict(self) -> Dict:
        return asdict(self)


def wilson_ci(successes: int, trials: int, level: float = 0.95) -> ConfidenceInterval:
    if trials <= 0:
        raise ArgumentError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ArgumentError("successes must lie in [0, trials]")
    low, high = proportion_confint(successes, trials, alpha=1 - level, method="wilson")
    if successes == 0:
        low = 0.0
    if successes == trials:
        high = 1.0
    return ConfidenceInterval(successes / trials, float(max(low, 0.0)), float(min(high, 1.0)), level)


def loglog_fit(ns: Sequence[float], values: Sequence[float], stderrs: Sequence[float] = None) -> LogLogFit:
    """Fit log(value) = intercept + slope log(n); weights 1 / var(log value) when standard errors are given"""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    se = np.zeros_like(values) if stderrs is None else np.asarray(stderrs, dtype=float)
    keep = values > 0
    dropped = int((~keep).sum())
    if keep.sum() < MIN_FIT_POINTS:
        raise ArgumentError(f"log-log fit needs at least {MIN_FIT_POINTS} positive points, got {int(keep.sum())}")
    ns, values, se = ns[keep], values[keep], se[keep]
    X = sm.add_constant(np.log(ns))
    y = np.log(values)

    weighted = bool(np.all(se > 0))
    if weighted:
        var = (se / values) ** 2
        result = sm.WLS(y, X, weights=1.0 / var).fit()
        # standard errors taken at face value, without residual rescaling
        fixed = np.sqrt(np.diag(np.linalg.inv(X.T @ (X / var[:, None]))))
        bse = np.maximum(np.asarray(result.bse), fixed)
    else:
        result = sm.OLS(y, X).fit()
        bse = np.asarray(result.bse)
    bse = np.nan_to_num(bse, nan=0.0)
    params = np.asarray(result.params)
    return LogLogFit(float(params[1]), float(bse[1]), float(params[0]), float(bse[0]),
                     int(len(ns)), dropped, weighted)


def ratio_with_ci(a: float, se_a: float, b: float, se_b: float) -> RatioEstimate:
    """a / b with delta-method standard error; inconclusive when b is within 3 se of zero"""
    if not b > 3 * se_b or b == 0:
        return RatioEstimate(float("nan"), float("inf"), True)
    ratio = a / b
    stderr = math.sqrt(se_a ** 2 + ratio ** 2 * se_b ** 2) / abs(b)
    return RatioEstimate(ratio, stderr, False)


def histogram_compare(counts: Sequence[int], predicted: Sequence[float], total: int,
                      min_hits: int = 500) -> HistogramComparison:
    """Max relative deviation over well-populated bins and total variation, mass outside bins included"""
    counts = np.asarray(counts, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if counts.shape != predicted.shape:
        raise ArgumentError("counts and predicted masses differ in shape")
    if total <= 0:
        raise ArgumentError("total must be positive")
    if predicted.sum() > 1 + 1e-9:
        raise ArgumentError(f"predicted masses sum to {predicted.sum():.6f} > 1")
    observed = counts / total
    used = (counts >= min_hits) & (predicted > 0)
    rel = np.abs(observed[used] / predicted[used] - 1.0)
    outside_obs = max(1.0 - observed.sum(), 0.0)
    outside_pred = max(1.0 - predicted.sum(), 0.0)
    tv = 0.5 * (np.abs(observed - predicted).sum() + abs(outside_obs - outside_pred))
    tv_se = 0.5 * float(np.sum(np.sqrt(predicted * (1 - predicted) / total)))
    return HistogramComparison(float(rel.max()) if len(rel) else float("nan"), float(tv), tv_se, int(used.sum()))


def envelope_trend(ns: Sequence[float], constants: Sequence[float], stderrs: Sequence[float] = None,
                   tolerance: float = 0.1) -> EnvelopeTrend:
    """Slope of log C_n against log n; diverges when it exceeds tolerance + 3 se"""
    ns = np.asarray(ns, dtype=float)
    constants = np.asarray(constants, dtype=float)
    keep = constants > 0
    if keep.sum() < 2:
        return EnvelopeTrend(0.0, float("inf"), False, float(constants.max(initial=0.0)))
    X = sm.add_constant(np.log(ns[keep]))
    y = np.log(constants[keep])
    if keep.sum() == 2:
        slope = float((y[1] - y[0]) / (X[1, 1] - X[0, 1]))
        slope_se = 0.0
        if stderrs is not None:
            rel = np.asarray(stderrs, dtype=float)[keep] / constants[keep]
            slope_se = float(math.sqrt((rel ** 2).sum()) / abs(X[1, 1] - X[0, 1]))
    else:
        result = sm.OLS(y, X).fit()
        slope, slope_se = float(result.params[1]), float(np.nan_to_num(result.bse[1]))
    diverges = slope > tolerance + 3 * slope_se
    return EnvelopeTrend(slope, slope_se, bool(diverges), float(constants.max()))


def gaussian_envelope(distances: Sequence[float], values: Sequence[float]) -> Dict[str, float]:
    """Smallest C with values <= C exp(-c t^2) for the least-squares decay rate c"""
    t2 = np.asarray(distances, dtype=float) ** 2
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if keep.sum() < 2:
        return {'C': float(values.max(initial=0.0)), 'c': 0.0, 'points': int(keep.sum())}
    result = sm.OLS(np.log(values[keep]), sm.add_constant(t2[keep])).fit()
    c = max(float(-result.params[1]), 0.0)
    C = float(np.max(values[keep] * np.exp(c * t2[keep])))
    return {'C': C, 'c': c, 'points': int(keep.sum())}


def worst_verdict(verdicts: List[str]) -> str:
    """fail beats inconclusive beats pass"""
    if "fail" in verdicts:
        return "fail"
    if "inconclusive" in verdicts or not verdicts:
        return "inconclusive"
    return "pass"
