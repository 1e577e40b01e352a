#!/usr/bin/env python3
"""
ConeWalk - Cone Constants
Gaussian-weighted cone integrals and the limit constants H0, kappa0 and kappa1.

Features:
- Radial/angular factorization of integrals of u^k e^{-|y|^2/2}
- Closed-form kappa0 for half-lines, half-spaces and orthants
- Weighted fit of kappa0 from the Brownian exit oracle, with a universality cross-check
- kappa1 = kappa0^2 H0^2 integral(u^2 e^{-|y|^2/2}) with propagated error
"""
import logging
import math
import sys
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import statsmodels.api as sm
from scipy import integrate
from scipy.special import gamma

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import ArgumentError, UnsupportedSpectralError
from scripts.geometry.cone_geometry import Cone
from scripts.geometry.spectral_data import SpectralData, orthant_cap_integral, sphere_area, spectral_data
from scripts.simulation.brownian_exit import BrownianConfig, brownian_exit_tail

logger = logging.getLogger(__name__)

QUADRATURE_TOL = 1e-8


@dataclass
class KappaFitConfig:
    """Brownian budget for the kappa0 fit"""
    paths: int = 20_000
    scaled_grid: List[float] = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.3, 0.45, 0.6])
    dt_fraction: float = 1e-3
    continuity_correction: bool = True
    workers: int = 4


@dataclass
class KappaEstimate:
    value: float
    stderr: float
    method: str                        # closed-form, fit
    status: str = "ok"                 # ok, universality-failed, fit-failed
    diagnostics: Dict = field(default_factory=dict)


@dataclass
class ConstantSet:
    H0: float
    kappa0: float
    kappa0_stderr: float
    kappa1: float
    kappa1_stderr: float
    u_integral: float
    u2_integral: float
    p: float
    lambda1: float
    kappa0_method: str = "closed-form"
    kappa0_status: str = "ok"

    def to_dict(self) -> Dict:
        return asdict(self)


def radial_integral(k: int, p: float, d: int) -> float:
    """int_0^inf r^{kp+d-1} e^{-r^2/2} dr"""
    s = k * p + d
    return 2 ** ((s - 2) / 2) * gamma(s / 2)


def angular_integral(spectral: SpectralData, k: int) -> Tuple[float, float]:
    """int over the cap of m1^k, with an error bound"""
    c = spectral.normalization
    d = spectral.d
    if spectral.family == "halfline":
        return c ** k, 0.0
    if spectral.family == "halfspace":
        if k == 1:
            value = c * math.pi ** ((d - 1) / 2) / gamma((d + 1) / 2)
        elif k == 2:
            value = c * c * sphere_area(d) / (2 * d)
        else:
            raise ArgumentError("power must be 1 or 2")
        return value, 1e-15 * value
    if spectral.family == "orthant":
        if k == 1:
            value = c / (2 ** (d - 1) * gamma(d))
        elif k == 2:
            value = c * c * orthant_cap_integral(d)
        else:
            raise ArgumentError("power must be 1 or 2")
        return value, 1e-15 * value
    if spectral.family == "wedge":
        alpha = spectral.opening
        value, err = integrate.quad(lambda phi: (c * math.sin(math.pi * phi / alpha)) ** k, 0.0, alpha,
                                    epsabs=QUADRATURE_TOL, epsrel=QUADRATURE_TOL)
        return value, err
    raise UnsupportedSpectralError(f"no cap integral for family {spectral.family}")


def gaussian_cone_integral(cone: Cone, spectral: Optional[SpectralData] = None, power: int = 1) -> Tuple[float, float]:
    """int_C u(y)^power e^{-|y|^2/2} dy as (value, error bound)"""
    if power not in (1, 2):
        raise ArgumentError("power must be 1 or 2")
    spectral = spectral or spectral_data(cone)
    radial = radial_integral(power, spectral.p, spectral.d)
    angular, err = angular_integral(spectral, power)
    return radial * angular, radial * err


def _closed_form_kappa0(spectral: SpectralData) -> Optional[float]:
    """kappa0 for m1 = c * (L2-normalized m1); halfline and halfspace give sqrt(2/pi) / c"""
    c = spectral.normalization
    if spectral.family in ("halfline", "halfspace"):
        return math.sqrt(2 / math.pi) / c
    if spectral.family == "orthant":
        return (2 / math.pi) ** (spectral.d / 2) / c
    return None


def default_fit_points(cone: Cone, spectral: SpectralData) -> List[np.ndarray]:
    """Two unit starting points: the bisector and a third of the opening"""
    if spectral.family == "wedge":
        start, alpha = spectral.start_angle, spectral.opening
        angles = [start + alpha / 2, start + alpha / 3]
        points = [np.array([math.cos(a), math.sin(a)]) for a in angles]
        if spectral.frame is not None:
            points = [spectral.frame.T @ p for p in points]
        return points
    one = np.ones(cone.dim) / math.sqrt(cone.dim)
    other = one.copy()
    other[0] *= 0.5
    return [one, other / np.linalg.norm(other)]


def fit_kappa0_at(x, cone: Cone, spectral: SpectralData, config: KappaFitConfig, seed: int) -> Dict:
    """Intercept of t^{p/2} P(tau_bm(x) > t) / u(x) against |x|^2 / t"""
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    ux = float(spectral.u(x))
    bm_config = BrownianConfig(dt_fraction=config.dt_fraction, workers=config.workers,
                               continuity_correction=config.continuity_correction)
    s, ratio, se = [], [], []
    for j, scaled in enumerate(config.scaled_grid):
        t = r2 / scaled
        estimate = brownian_exit_tail(x, cone, t, config.paths, master_seed=seed, config=bm_config,
                                      purpose=f"kappa0-fit-{j}")
        factor = t ** (spectral.p / 2) / ux
        s.append(scaled)
        ratio.append(estimate.value * factor)
        se.append(max(estimate.stderr, 1.0 / config.paths) * factor)
    X = sm.add_constant(np.asarray(s))
    result = sm.WLS(np.asarray(ratio), X, weights=1.0 / np.asarray(se) ** 2).fit()
    fixed = math.sqrt(np.linalg.inv(X.T @ (X / np.asarray(se)[:, None] ** 2))[0, 0])
    return {
        'x': x.tolist(),
        'value': float(result.params[0]),
        'stderr': max(float(np.nan_to_num(result.bse[0])), fixed),
        'slope': float(result.params[1]),
        'points': [{'scaled': a, 'ratio': b, 'stderr': c} for a, b, c in zip(s, ratio, se)],
    }


def kappa0(cone: Cone, spectral: Optional[SpectralData] = None, config: KappaFitConfig = None,
           seed: int = 0, fit_points: Sequence = None, force_fit: bool = False) -> KappaEstimate:
    """Closed form where the Brownian survival factorizes; otherwise a fit with a universality check"""
    spectral = spectral or spectral_data(cone)
    closed = _closed_form_kappa0(spectral)
    if closed is not None and not force_fit:
        return KappaEstimate(closed, 0.0, "closed-form")

    config = config or KappaFitConfig()
    points = list(fit_points) if fit_points is not None else default_fit_points(cone, spectral)
    if len(points) < 2:
        raise ArgumentError("kappa0 fit needs two starting points")
    fits = [fit_kappa0_at(p, cone, spectral, config, seed + i) for i, p in enumerate(points[:2])]
    (a, sa), (b, sb) = [(f['value'], f['stderr']) for f in fits]
    combined = math.sqrt(sa * sa + sb * sb)
    universal = abs(a - b) <= 3 * combined
    wa, wb = 1 / (sa * sa), 1 / (sb * sb)
    value = (a * wa + b * wb) / (wa + wb)
    stderr = 1 / math.sqrt(wa + wb)
    status = "ok" if universal else "universality-failed"
    if value <= 0:
        status = "fit-failed"
    if status != "ok":
        logger.warning(f"kappa0 fit for {cone.spec_string}: {status} ({a:.5f} +/- {sa:.5f} vs {b:.5f} +/- {sb:.5f})")
    return KappaEstimate(value, stderr, "fit", status, {'fits': fits, 'universal': universal})


def kappa1(H0: float, kappa0_value: float, kappa0_stderr: float, u2_integral: float) -> Tuple[float, float]:
    value = kappa0_value ** 2 * H0 ** 2 * u2_integral
    stderr = 2 * value * kappa0_stderr / kappa0_value if kappa0_value > 0 else float("inf")
    return value, stderr


def compute_constants(cone: Cone, spectral: Optional[SpectralData] = None, config: KappaFitConfig = None,
                      seed: int = 0, kappa: Optional[KappaEstimate] = None) -> ConstantSet:
    spectral = spectral or spectral_data(cone)
    u_int, _ = gaussian_cone_integral(cone, spectral, 1)
    u2_int, _ = gaussian_cone_integral(cone, spectral, 2)
    H0 = 1.0 / u_int
    kappa = kappa or kappa0(cone, spectral, config, seed)
    k1, k1_se = kappa1(H0, kappa.value, kappa.stderr, u2_int)
    constants = ConstantSet(H0, kappa.value, kappa.stderr, k1, k1_se, u_int, u2_int, spectral.p,
                            spectral.lambda1, kappa.method, kappa.status)
    logger.info(f"constants for {cone.spec_string}: H0={H0:.6f} kappa0={kappa.value:.6f} kappa1={k1:.6f}")
    return constants
