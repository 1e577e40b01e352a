#!/usr/bin/env python3
"""
ConeWalk - Spectral Data
Principal Dirichlet eigenpair of the cone cap and the Brownian harmonic function u.

Features:
- Closed forms for the half-line, half-spaces, orthants and planar wedges
- Orthogonal images of supported cones; any invertible image in the plane
- L2(cap)-normalized m1 with an optional overall scale for normalization checks
- Vectorized u(x) = |x|^p m1(x/|x|)
- Fourth-order finite-difference Laplacian residual
"""
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import gamma

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import PreconditionError, UnsupportedSpectralError
from scripts.geometry.cone_geometry import (Cone, HalfLine, HalfSpace, LinearImage,
                                            Orthant, Wedge2D, _as_points, _unwrap)

logger = logging.getLogger(__name__)


def sphere_area(d: int) -> float:
    """|S^{d-1}|"""
    return 2 * math.pi ** (d / 2) / gamma(d / 2)


def orthant_cap_integral(d: int) -> float:
    """Integral of prod(theta_i^2) over the orthant cap of S^{d-1}"""
    full_sphere = (2 * math.pi) ** (d / 2) / (2 ** ((3 * d - 2) / 2) * gamma(3 * d / 2))
    return full_sphere / 2 ** d


@dataclass(frozen=True, eq=False)
class SpectralData:
    """(lambda1, p, m1) of a cone cap; m1 = normalization * shape(theta)"""
    lambda1: float
    p: float
    normalization: float
    d: int
    family: str                      # halfline, halfspace, orthant, wedge
    opening: float = 0.0             # wedge only
    start_angle: float = 0.0         # wedge only
    frame: Optional[np.ndarray] = field(default=None, repr=False)  # orthogonal map into the canonical cone
    sign: float = 1.0                # halfline only: +1 for (0, inf), -1 for (-inf, 0)
    scale: float = 1.0

    def _canonical(self, pts: np.ndarray) -> np.ndarray:
        if self.frame is None:
            return pts
        return pts @ self.frame.T

    def m1(self, theta):
        """Eigenfunction evaluated at unit directions (zero outside the cap)"""
        pts, single = _as_points(theta, self.d)
        norms = np.linalg.norm(pts, axis=-1, keepdims=True)
        unit = np.divide(pts, norms, out=np.zeros_like(pts), where=norms > 0)
        return _unwrap(self._homogeneous(unit, np.ones(unit.shape[:-1])), single)

    def u(self, x):
        pts, single = _as_points(x, self.d)
        radius = np.linalg.norm(pts, axis=-1)
        return _unwrap(self._homogeneous(pts, radius), single)

    def _homogeneous(self, pts: np.ndarray, radius: np.ndarray) -> np.ndarray:
        y = self._canonical(pts)
        c = self.normalization
        if self.family == "halfline":
            s = self.sign * y[..., 0]
            return np.where(s > 0.0, c * s, 0.0)
        if self.family == "halfspace":
            return np.where(y[..., -1] > 0.0, c * y[..., -1], 0.0)
        if self.family == "orthant":
            return np.where(np.all(y > 0.0, axis=-1), c * np.prod(y, axis=-1), 0.0)
        phi = np.mod(np.arctan2(y[..., 1], y[..., 0]) - self.start_angle, 2 * math.pi)
        inside = (phi > 0.0) & (phi < self.opening) & (radius > 0.0)
        value = c * np.power(radius, self.p) * np.sin(math.pi * phi / self.opening)
        return np.where(inside, value, 0.0)

    def rescaled(self, factor: float) -> "SpectralData":
        """Same eigenpair with m1 multiplied by factor"""
        return SpectralData(self.lambda1, self.p, self.normalization * factor, self.d, self.family,
                            self.opening, self.start_angle, self.frame, self.sign, self.scale * factor)

    def summary(self) -> dict:
        return {
            'family': self.family,
            'd': self.d,
            'lambda1': self.lambda1,
            'p': self.p,
            'normalization': self.normalization,
            'opening': self.opening if self.family == 'wedge' else None,
            'scale': self.scale,
        }


def _wedge_data(opening: float, start: float, scale: float) -> SpectralData:
    p = math.pi / opening
    return SpectralData(lambda1=p * p, p=p, normalization=math.sqrt(2 / opening) * scale, d=2,
                        family="wedge", opening=opening, start_angle=start, scale=scale)


def _is_orthogonal(T: np.ndarray) -> bool:
    return bool(np.allclose(T.T @ T, np.eye(len(T)), atol=1e-10))


def spectral_data(cone: Cone, scale: float = 1.0) -> SpectralData:
    """Closed-form spectral data; scale multiplies the L2-normalized m1"""
    if isinstance(cone, HalfLine) or (isinstance(cone, (HalfSpace, Orthant)) and cone.dim == 1):
        return SpectralData(0.0, 1.0, scale, 1, "halfline", scale=scale)
    if isinstance(cone, HalfSpace):
        d = cone.d
        c = math.sqrt(2 * d / sphere_area(d))
        return SpectralData(float(d - 1), 1.0, c * scale, d, "halfspace", scale=scale)
    if isinstance(cone, Orthant):
        d = cone.d
        c = 1 / math.sqrt(orthant_cap_integral(d))
        return SpectralData(2.0 * d * (d - 1), float(d), c * scale, d, "orthant", scale=scale)
    if isinstance(cone, Wedge2D):
        return _wedge_data(cone.alpha, cone.start_angle, scale)
    if isinstance(cone, LinearImage):
        T = cone.T
        if cone.dim == 1:
            return SpectralData(0.0, 1.0, scale, 1, "halfline",
                                sign=float(np.sign(T[0, 0])) * float(np.sign(cone.base.normals()[0, 0])),
                                scale=scale)
        if cone.dim == 2:
            # every invertible planar image is again a wedge
            r1, _, opening = cone.planar_rays()
            return _wedge_data(opening, math.atan2(r1[1], r1[0]), scale)
        if _is_orthogonal(T):
            inner = spectral_data(cone.base, scale)
            frame = T.T if inner.frame is None else inner.frame @ T.T
            return SpectralData(inner.lambda1, inner.p, inner.normalization, inner.d, inner.family,
                                inner.opening, inner.start_angle, frame, inner.sign, inner.scale)
        raise UnsupportedSpectralError(
            f"non-orthogonal image in dimension {cone.dim} has no closed-form eigenfunction")
    raise UnsupportedSpectralError(f"no spectral data for {cone}")


def u(cone: Cone, x, spectral: Optional[SpectralData] = None):
    spectral = spectral or spectral_data(cone)
    return spectral.u(x)


def laplacian_residual(cone: Cone, x, h: float, spectral: Optional[SpectralData] = None) -> float:
    """Fourth-order central-difference estimate of Laplacian(u) at x"""
    spectral = spectral or spectral_data(cone)
    point, _ = _as_points(x, cone.dim)
    if point.ndim != 1:
        raise PreconditionError("laplacian_residual takes a single point")
    d = cone.dim
    margin = max(h * math.sqrt(d), 2 * h)
    if not cone.boundary_distance(point) > margin:
        raise PreconditionError(f"point {point.tolist()} within {margin} of the boundary")

    f0 = spectral.u(point)
    total = 0.0
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        total += (-spectral.u(point + 2 * e) + 16 * spectral.u(point + e) - 30 * f0
                  + 16 * spectral.u(point - e) - spectral.u(point - 2 * e)) / (12 * h * h)
    return float(total)
