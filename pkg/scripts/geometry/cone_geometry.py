#!/usr/bin/env python3
"""
ConeWalk - Cone Geometry
Open cones, boxes and thickened cones used by the killed-walk engine and the verifiers.

Features:
- HalfLine, HalfSpace, Orthant, planar Wedge2D and invertible linear images
- Vectorized membership and distance-to-boundary queries
- Shift parameter t_delta (closed form for polyhedral cones, bisection for reflex wedges)
- Thickened cones C_{+delta} / C_{-delta}
- Box/cone intersection and containment tests
- Normalization that puts the all-ones direction inside the cone
"""
import itertools
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linprog

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import (ArgumentError, DimensionMismatchError,
                             UnsupportedConeError)

logger = logging.getLogger(__name__)

SHIFT_BISECTION_TOL = 1e-9
SHIFT_BOUNDARY_BOXES = 10_000


def _as_points(x, dim: int) -> Tuple[np.ndarray, bool]:
    """Coerce x to an array of shape (..., dim); report whether a single point was given"""
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        if dim != 1:
            raise DimensionMismatchError(f"scalar point given for a {dim}-dimensional cone")
        pts = pts.reshape(1)
    if pts.shape[-1] != dim:
        raise DimensionMismatchError(f"point dimension {pts.shape[-1]} != cone dimension {dim}")
    if not np.all(np.isfinite(pts)):
        raise ArgumentError("points must have finite coordinates")
    return pts, pts.ndim == 1


def _unwrap(values: np.ndarray, single: bool):
    if single:
        value = values.reshape(())
        return value.item()
    return values


def _rot_plus(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def _rot_minus(v: np.ndarray) -> np.ndarray:
    return np.array([v[1], -v[0]])


def _ray_distance(pts: np.ndarray, ray: np.ndarray) -> np.ndarray:
    proj = pts @ ray
    perp = np.linalg.norm(pts - proj[..., None] * ray, axis=-1)
    return np.where(proj >= 0.0, perp, np.linalg.norm(pts, axis=-1))


class Cone:
    """Open cone with apex at the origin"""

    dim: int

    def normals(self) -> Optional[np.ndarray]:
        """Inner facet normals (m, d) when the cone is convex polyhedral, else None"""
        return None

    def planar_rays(self) -> Optional[Tuple[np.ndarray, np.ndarray, float]]:
        """(ray1, ray2, opening) for planar cones; ray2 is ray1 turned counterclockwise by opening"""
        return None

    @property
    def interior_direction(self) -> np.ndarray:
        return np.ones(self.dim)

    @property
    def is_convex(self) -> bool:
        return self.normals() is not None

    @property
    def spec_string(self) -> str:
        raise NotImplementedError

    def planar_normals(self) -> Tuple[np.ndarray, np.ndarray]:
        rays = self.planar_rays()
        if rays is None:
            raise UnsupportedConeError(f"{self.spec_string} is not planar")
        r1, r2, _ = rays
        return _rot_plus(r1), _rot_minus(r2)

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        normals = self.normals()
        if normals is not None:
            inside = np.all(pts @ normals.T > 0.0, axis=-1)
        else:
            n1, n2 = self.planar_normals()
            inside = (pts @ n1 > 0.0) | (pts @ n2 > 0.0)
        return _unwrap(inside, single)

    def boundary_distance(self, x):
        pts, single = _as_points(x, self.dim)
        normals = self.normals()
        if normals is not None:
            scaled = (pts @ normals.T) / np.linalg.norm(normals, axis=1)
            dist = np.clip(scaled.min(axis=-1), 0.0, None)
        else:
            r1, r2, _ = self.planar_rays()
            n1, n2 = self.planar_normals()
            inside = (pts @ n1 > 0.0) | (pts @ n2 > 0.0)
            dist = np.minimum(_ray_distance(pts, r1), _ray_distance(pts, r2))
            dist = np.where(inside, dist, 0.0)
        return _unwrap(dist, single)

    def __str__(self):
        return self.spec_string


@dataclass(frozen=True)
class HalfLine(Cone):
    """(0, +inf)"""

    @property
    def dim(self) -> int:
        return 1

    def normals(self) -> np.ndarray:
        return np.array([[1.0]])

    @property
    def spec_string(self) -> str:
        return "halfline"


@dataclass(frozen=True)
class HalfSpace(Cone):
    """{x : x_d > 0}"""
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ArgumentError("halfspace dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.d

    def normals(self) -> np.ndarray:
        a = np.zeros((1, self.d))
        a[0, -1] = 1.0
        return a

    def planar_rays(self):
        if self.d != 2:
            return None
        return np.array([1.0, 0.0]), np.array([-1.0, 0.0]), math.pi

    @property
    def spec_string(self) -> str:
        return f"halfspace({self.d})"


@dataclass(frozen=True)
class Orthant(Cone):
    """{x : x_i > 0 for all i}"""
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ArgumentError("orthant dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.d

    def normals(self) -> np.ndarray:
        return np.eye(self.d)

    def planar_rays(self):
        if self.d != 2:
            return None
        return np.array([1.0, 0.0]), np.array([0.0, 1.0]), math.pi / 2

    @property
    def spec_string(self) -> str:
        return f"orthant({self.d})"


@dataclass(frozen=True)
class Wedge2D(Cone):
    """Points with polar angle in (start_angle, start_angle + alpha)"""
    alpha: float
    start_angle: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2 * math.pi:
            raise ArgumentError(f"wedge opening {self.alpha} outside (0, 2*pi)")

    @property
    def dim(self) -> int:
        return 2

    def planar_rays(self):
        s, e = self.start_angle, self.start_angle + self.alpha
        return (np.array([math.cos(s), math.sin(s)]),
                np.array([math.cos(e), math.sin(e)]),
                float(self.alpha))

    def normals(self) -> Optional[np.ndarray]:
        if self.alpha > math.pi:
            return None
        n1, n2 = self.planar_normals()
        return np.vstack([n1, n2])

    @property
    def spec_string(self) -> str:
        if self.start_angle == 0.0:
            return f"wedge({self.alpha!r})"
        return f"wedge({self.alpha!r}, {self.start_angle!r})"


@dataclass(frozen=True, eq=False)
class LinearImage(Cone):
    """T C for an invertible matrix T"""
    T: np.ndarray
    base: Cone

    def __post_init__(self):
        T = np.array(self.T, dtype=float)
        d = self.base.dim
        if T.shape != (d, d):
            raise DimensionMismatchError(f"linear map shape {T.shape} does not match base dimension {d}")
        if abs(np.linalg.det(T)) < 1e-12 or np.linalg.cond(T) > 1e12:
            raise ArgumentError("linear map must be invertible")
        T.setflags(write=False)
        object.__setattr__(self, "T", T)
        T_inv = np.linalg.inv(T)
        T_inv.setflags(write=False)
        object.__setattr__(self, "T_inv", T_inv)

    @property
    def dim(self) -> int:
        return self.base.dim

    def normals(self) -> Optional[np.ndarray]:
        base_normals = self.base.normals()
        if base_normals is None:
            return None
        return base_normals @ self.T_inv

    def planar_rays(self):
        if self.dim != 2:
            return None
        rays = self.base.planar_rays()
        if rays is None:
            return None
        r1, r2, _ = rays
        a, b = self.T @ r1, self.T @ r2
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        if np.linalg.det(self.T) < 0:
            a, b = b, a
        opening = math.atan2(a[0] * b[1] - a[1] * b[0], float(a @ b)) % (2 * math.pi)
        if self.base.is_convex and opening > math.pi:
            # half-plane images land on pi up to rounding
            opening = math.pi
        return a, b, opening

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        inside = np.asarray(self.base.contains(pts @ self.T_inv.T))
        return _unwrap(inside, single)

    @property
    def spec_string(self) -> str:
        rows = ";".join(",".join(repr(float(v)) for v in row) for row in self.T)
        return f"linear({rows}; {self.base.spec_string})"


@dataclass(frozen=True)
class Box:
    """Product of intervals [lower_i, upper_i]; closed=False means [lower_i, upper_i)"""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    closed: bool = True

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper):
            raise DimensionMismatchError("box corners have different dimensions")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ArgumentError(f"box needs lower < upper componentwise, got {lower} / {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_corner(cls, corner, side: float, closed: bool = True) -> "Box":
        corner = np.atleast_1d(np.asarray(corner, dtype=float))
        return cls(tuple(corner), tuple(corner + side), closed)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))

    def contains(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        lower, upper = np.asarray(self.lower), np.asarray(self.upper)
        above = np.all(pts >= lower, axis=-1)
        below = np.all(pts <= upper, axis=-1) if self.closed else np.all(pts < upper, axis=-1)
        return above & below


@dataclass(frozen=True)
class ThickenedCone:
    """C_{-delta} = -t 1 + C (sign '-') or C_{+delta} = t 1 + C (sign '+')"""
    base: Cone
    delta: float
    sign: str
    t_delta: float

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def query_shift(self) -> np.ndarray:
        """x is in the region iff x + query_shift is in the base cone"""
        step = self.t_delta if self.sign == "-" else -self.t_delta
        return np.full(self.dim, step)

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        return _unwrap(np.asarray(self.base.contains(pts + self.query_shift)), single)

    def boundary_distance(self, x):
        pts, single = _as_points(x, self.dim)
        return _unwrap(np.asarray(self.base.boundary_distance(pts + self.query_shift)), single)

    @property
    def spec_string(self) -> str:
        return f"thicken({self.base.spec_string}, {self.delta!r}, {self.sign})"


def _split_region(region):
    if isinstance(region, ThickenedCone):
        return region.base, region.query_shift
    if isinstance(region, Cone):
        return region, np.zeros(region.dim)
    raise UnsupportedConeError(f"unsupported region type {type(region).__name__}")


def box_slack(cone: Cone) -> float:
    """delta* = min_i (a_i . 1) / |a_i|_1 over the normals bounding the interior direction"""
    normals = cone.normals()
    if normals is None:
        normals = np.vstack(cone.planar_normals())
    slack = normals @ np.ones(cone.dim)
    if np.any(slack <= 0.0):
        raise UnsupportedConeError(f"all-ones direction is not interior to {cone.spec_string}")
    return float(np.min(slack / np.abs(normals).sum(axis=1)))


def _boxes_hit_complement(cone: Cone, lowers: np.ndarray, uppers: np.ndarray) -> np.ndarray:
    """Closed planar boxes meeting K, the closed complement of a reflex planar cone"""
    r1, r2, _ = cone.planar_rays()
    n1, n2 = cone.planar_normals()
    corners = np.stack([lowers, np.column_stack([uppers[:, 0], lowers[:, 1]]),
                        uppers, np.column_stack([lowers[:, 0], uppers[:, 1]])], axis=1)
    in_k = (corners @ n1 <= 0.0) & (corners @ n2 <= 0.0)
    hit = np.any(in_k, axis=1)
    for ray in (r1, r2):
        t_enter = np.zeros(len(lowers))
        t_exit = np.full(len(lowers), np.inf)
        for j in range(2):
            if abs(ray[j]) < 1e-300:
                outside = (lowers[:, j] > 0.0) | (uppers[:, j] < 0.0)
                t_exit = np.where(outside, -np.inf, t_exit)
                continue
            a, b = lowers[:, j] / ray[j], uppers[:, j] / ray[j]
            t_enter = np.maximum(t_enter, np.minimum(a, b))
            t_exit = np.minimum(t_exit, np.maximum(a, b))
        hit |= t_enter <= t_exit
    return hit


def _bisect_shift(cone: Cone, delta: float, n_boxes: int, seed: int) -> float:
    r1, r2, _ = cone.planar_rays()
    rng = np.random.default_rng(seed)
    rays = np.where((np.arange(n_boxes) % 2 == 0)[:, None], r1, r2)
    radii = rng.uniform(0.0, 50.0 * delta, size=n_boxes)
    anchors = radii[:, None] * rays
    lowers = anchors - delta * rng.uniform(0.0, 1.0, size=(n_boxes, 2))
    uppers = lowers + delta

    corners = np.stack([lowers, np.column_stack([uppers[:, 0], lowers[:, 1]]),
                        uppers, np.column_stack([lowers[:, 0], uppers[:, 1]])], axis=1)
    meets = np.any(cone.contains(corners.reshape(-1, 2)).reshape(n_boxes, 4), axis=1)
    lowers, uppers = lowers[meets], uppers[meets]

    lo, hi = 0.0, delta / box_slack(cone)
    while hi - lo > SHIFT_BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if np.any(_boxes_hit_complement(cone, lowers + mid, uppers + mid)):
            lo = mid
        else:
            hi = mid
    logger.debug(f"bisected t_delta={hi:.9f} for {cone.spec_string} over {len(lowers)} boxes")
    return hi


def shift_param(cone: Cone, delta: float, n_boxes: int = SHIFT_BOUNDARY_BOXES, seed: int = 0) -> float:
    """Smallest t such that every box [x, x + delta 1] meeting C lies in -t 1 + C"""
    if not delta > 0:
        raise ArgumentError(f"delta must be positive, got {delta}")
    normals = cone.normals()
    if normals is not None:
        slack = normals @ np.ones(cone.dim)
        if np.any(slack <= 0.0):
            raise UnsupportedConeError(f"all-ones direction is not interior to {cone.spec_string}")
        return float(delta * np.max(np.abs(normals).sum(axis=1) / slack))
    if cone.planar_rays() is None:
        raise UnsupportedConeError(f"no shift rule for {cone.spec_string}")
    return _bisect_shift(cone, delta, n_boxes, seed)


def thicken(cone: Cone, delta: float, sign: str) -> ThickenedCone:
    sign = {"−": "-", "-": "-", "+": "+"}.get(sign)
    if sign is None:
        raise ArgumentError("thickening sign must be '+' or '-'")
    return ThickenedCone(cone, float(delta), sign, shift_param(cone, delta))


def box_meets_cone(region, box: Box) -> bool:
    cone, shift = _split_region(region)
    if box.dim != cone.dim:
        raise DimensionMismatchError("box and cone dimensions differ")
    corners = box.corners() + shift
    if np.any(cone.contains(corners)):
        return True
    normals = cone.normals()
    if normals is None:
        if cone.planar_rays() is None:
            raise UnsupportedConeError(f"cannot intersect boxes with {cone.spec_string}")
        # complement is convex, so a box with every corner in it stays in it
        return False

    # maximize s subject to a_i.z >= s |a_i|, z in the shifted box
    d = cone.dim
    norms = np.linalg.norm(normals, axis=1)
    A_ub = np.hstack([-normals, norms[:, None]])
    bounds = [(lo + s, hi + s) for lo, hi, s in zip(box.lower, box.upper, shift)] + [(None, 1.0)]
    res = linprog(c=np.r_[np.zeros(d), -1.0], A_ub=A_ub, b_ub=np.zeros(len(normals)),
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise UnsupportedConeError(f"box feasibility failed: {res.message}")
    return bool(-res.fun > 1e-12)


def box_in_region(region, box: Box) -> bool:
    cone, shift = _split_region(region)
    if box.dim != cone.dim:
        raise DimensionMismatchError("box and cone dimensions differ")
    if cone.normals() is not None:
        return bool(np.all(cone.contains(box.corners() + shift)))
    if cone.planar_rays() is None:
        raise UnsupportedConeError(f"cannot test box containment for {cone.spec_string}")
    lowers = (np.asarray(box.lower) + shift)[None, :]
    uppers = (np.asarray(box.upper) + shift)[None, :]
    return not bool(_boxes_hit_complement(cone, lowers, uppers)[0])


def _unit_admissible(cone: Cone) -> bool:
    ones = np.ones(cone.dim)
    if cone.normals() is not None:
        return bool(cone.contains(ones))
    n1, n2 = cone.planar_normals()
    # reflex cones also need -1 inside the complement so that 1 + C stays in C
    return bool(n1 @ ones > 0.0 and n2 @ ones > 0.0)


def ensure_unit_interior(cone: Cone) -> Tuple[Cone, np.ndarray]:
    """Rotate a planar cone so the all-ones direction is admissible; returns (cone, rotation)"""
    d = cone.dim
    if _unit_admissible(cone):
        return cone, np.eye(d)
    rays = cone.planar_rays()
    if rays is None:
        raise UnsupportedConeError(
            f"all-ones direction not admissible for {cone.spec_string}; supply it through linear(...)")
    r1, _, opening = rays
    turn = math.pi / 4 - (math.atan2(r1[1], r1[0]) + opening / 2)
    rotation = np.array([[math.cos(turn), -math.sin(turn)],
                         [math.sin(turn), math.cos(turn)]])
    if isinstance(cone, Wedge2D):
        start = (cone.start_angle + turn + math.pi) % (2 * math.pi) - math.pi
        rotated = Wedge2D(cone.alpha, start)
    elif isinstance(cone, LinearImage):
        rotated = LinearImage(rotation @ cone.T, cone.base)
    else:
        rotated = LinearImage(rotation, cone)
    logger.info(f"rotated {cone.spec_string} by {turn:.6f} rad to put 1 inside")
    return rotated, rotation
