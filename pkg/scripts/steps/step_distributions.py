#!/usr/bin/env python3
"""
ConeWalk - Step Distributions
Catalog of increment laws for the walk S(n) = X_1 + ... + X_n.

Features:
- Finite atoms, standard Gaussian, centered uniform cube, products of 1D laws, linear images
- Vectorized sampling from numpy Generators
- Exact first and second moments, plus a sample-moment estimator with standard errors
- Whitening through the inverse principal square root of the covariance
- Declared lattice structure and the moment-order assumption check
"""
import itertools
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import ArgumentError, DegeneracyError, DimensionMismatchError

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9
MEAN_TOL = 1e-12
COV_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LatticeStructure:
    """G = G1 (+) G2 with G1 a vector space of dimension vector_dim and G2 = Z u_1 + ... + Z u_t"""
    vector_dim: int
    lattice_basis: np.ndarray                     # (t, d) rows u_j
    vector_basis: Optional[np.ndarray] = None     # (s, d); defaults to the complement of span(u_j)

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.lattice_basis, dtype=float))
        if basis.size == 0:
            d = self.vector_dim
            basis = np.zeros((0, d))
        d = basis.shape[1]
        t = basis.shape[0]
        if t and np.linalg.matrix_rank(basis) < t:
            raise ArgumentError("lattice basis vectors must be linearly independent")
        if self.vector_dim + t != d:
            raise ArgumentError(f"vector part {self.vector_dim} + lattice rank {t} != dimension {d}")
        vectors = self.vector_basis
        if vectors is None:
            vectors = orthogonal_complement(basis, d)
        vectors = np.asarray(vectors, dtype=float).reshape(self.vector_dim, d)
        object.__setattr__(self, "lattice_basis", basis)
        object.__setattr__(self, "vector_basis", vectors)

    @property
    def dim(self) -> int:
        return self.lattice_basis.shape[1]

    @property
    def rank(self) -> int:
        return self.lattice_basis.shape[0]

    def transformed(self, T: np.ndarray) -> "LatticeStructure":
        return LatticeStructure(self.vector_dim, self.lattice_basis @ T.T, self.vector_basis @ T.T)


def orthogonal_complement(rows: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis (as rows) of the complement of span(rows)"""
    if rows.shape[0] == 0:
        return np.eye(d)
    _, s, vt = np.linalg.svd(rows)
    rank = int(np.sum(s > 1e-12 * max(1.0, s.max())))
    return vt[rank:]


class StepDistribution:
    """Increment law; subclasses provide sampling and exact moments"""

    dim: int
    lattice: Optional[LatticeStructure] = None
    moment_order: float = math.inf

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def as_atoms(self) -> Optional["FiniteAtoms"]:
        """Finite-support representation when one exists"""
        return None

    @property
    def is_finite(self) -> bool:
        return self.as_atoms() is not None

    @property
    def spec_string(self) -> str:
        raise NotImplementedError

    def negated(self) -> "StepDistribution":
        return LinearImage(-np.eye(self.dim), self)

    def __str__(self):
        return self.spec_string


@dataclass(eq=False)
class FiniteAtoms(StepDistribution):
    points: np.ndarray
    weights: np.ndarray
    lattice: Optional[LatticeStructure] = None
    moment_order: float = math.inf

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        if len(pts) == 0 or len(pts) != len(w):
            raise ArgumentError("atoms need one positive weight per point")
        if np.any(w <= 0):
            raise ArgumentError("atom weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ArgumentError(f"atom weights sum to {w.sum()!r}, expected 1")
        self.points = pts
        self.weights = w / w.sum()
        self._cdf = np.cumsum(self.weights)
        self._cdf[-1] = 1.0

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = np.searchsorted(self._cdf, rng.random(size), side="right")
        return self.points[np.minimum(idx, len(self.points) - 1)]

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        mean = self.weights @ self.points
        centered = self.points - mean
        cov = (centered * self.weights[:, None]).T @ centered
        return mean, cov

    def as_atoms(self) -> "FiniteAtoms":
        return self

    @property
    def spec_string(self) -> str:
        def fmt_point(p):
            if len(p) == 1:
                return repr(float(p[0]))
            return "(" + ",".join(repr(float(v)) for v in p) + ")"
        body = ";".join(f"({fmt_point(p)},{float(w)!r})" for p, w in zip(self.points, self.weights))
        return f"atoms[{body}]"


@dataclass(eq=False)
class StandardGaussian(StepDistribution):
    d: int
    lattice: Optional[LatticeStructure] = None
    moment_order: float = math.inf

    @property
    def dim(self) -> int:
        return self.d

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.standard_normal((size, self.d))

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.d), np.eye(self.d)

    @property
    def spec_string(self) -> str:
        return f"gaussian({self.d})"


@dataclass(eq=False)
class CenteredUniformCube(StepDistribution):
    d: int
    side: float
    lattice: Optional[LatticeStructure] = None
    moment_order: float = math.inf

    def __post_init__(self):
        if not self.side > 0:
            raise ArgumentError("cube side must be positive")

    @property
    def dim(self) -> int:
        return self.d

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        half = self.side / 2
        return rng.uniform(-half, half, size=(size, self.d))

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.d), np.eye(self.d) * self.side ** 2 / 12

    @property
    def spec_string(self) -> str:
        return f"uniform_cube({self.d},{float(self.side)!r})"


@dataclass(eq=False)
class ProductOf1D(StepDistribution):
    """Independent coordinates, one 1D law per axis"""
    factors: List[StepDistribution]
    lattice: Optional[LatticeStructure] = None
    moment_order: float = math.inf

    def __post_init__(self):
        if not self.factors or any(f.dim != 1 for f in self.factors):
            raise DimensionMismatchError("product factors must all be one-dimensional")
        self.moment_order = min([self.moment_order] + [f.moment_order for f in self.factors])

    @property
    def dim(self) -> int:
        return len(self.factors)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.column_stack([f.sample(rng, size)[:, 0] for f in self.factors])

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        means, variances = zip(*(f.moments() for f in self.factors))
        return np.array([m[0] for m in means]), np.diag([v[0, 0] for v in variances])

    def as_atoms(self) -> Optional[FiniteAtoms]:
        parts = [f.as_atoms() for f in self.factors]
        if any(p is None for p in parts):
            return None
        points, weights = [], []
        for combo in itertools.product(*(zip(p.points[:, 0], p.weights) for p in parts)):
            points.append([c[0] for c in combo])
            weights.append(math.prod(c[1] for c in combo))
        return FiniteAtoms(np.array(points), np.array(weights), self.lattice, self.moment_order)

    @property
    def spec_string(self) -> str:
        return "product[" + ";".join(f.spec_string for f in self.factors) + "]"


@dataclass(eq=False)
class LinearImage(StepDistribution):
    """X = T (Y - center) with Y ~ base"""
    T: np.ndarray
    base: StepDistribution
    center: Optional[np.ndarray] = None
    lattice: Optional[LatticeStructure] = None

    def __post_init__(self):
        self.T = np.atleast_2d(np.asarray(self.T, dtype=float))
        d = self.base.dim
        if self.T.shape != (d, d):
            raise DimensionMismatchError(f"linear map shape {self.T.shape} does not match law dimension {d}")
        self.center = np.zeros(d) if self.center is None else np.asarray(self.center, dtype=float)
        if self.lattice is None and self.base.lattice is not None:
            self.lattice = self.base.lattice.transformed(self.T)
        self.moment_order = self.base.moment_order

    @property
    def dim(self) -> int:
        return self.base.dim

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return (self.base.sample(rng, size) - self.center) @ self.T.T

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        mean, cov = self.base.moments()
        return self.T @ (mean - self.center), self.T @ cov @ self.T.T

    def as_atoms(self) -> Optional[FiniteAtoms]:
        atoms = self.base.as_atoms()
        if atoms is None:
            return None
        return FiniteAtoms((atoms.points - self.center) @ self.T.T, atoms.weights,
                           self.lattice, self.moment_order)

    @property
    def spec_string(self) -> str:
        rows = ";".join(",".join(repr(float(v)) for v in row) for row in self.T)
        return f"linear({rows}; {self.base.spec_string})"


def sample(dist: StepDistribution, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """One draw (size None) or a (size, d) block of i.i.d. draws"""
    if size is None:
        return dist.sample(rng, 1)[0]
    return dist.sample(rng, size)


def moments(dist: StepDistribution) -> Tuple[np.ndarray, np.ndarray]:
    return dist.moments()


def sample_moments(dist: StepDistribution, rng: np.random.Generator, size: int = 100_000):
    """Monte Carlo mean, covariance and their standard errors"""
    draws = dist.sample(rng, size)
    mean = draws.mean(axis=0)
    cov = np.cov(draws, rowvar=False).reshape(dist.dim, dist.dim)
    mean_se = draws.std(axis=0, ddof=1) / math.sqrt(size)
    centered = draws - mean
    products = centered[:, :, None] * centered[:, None, :]
    cov_se = products.std(axis=0, ddof=1) / math.sqrt(size)
    return mean, cov, mean_se, cov_se


def whitening_transform(dist: StepDistribution) -> Tuple[np.ndarray, StepDistribution]:
    """(T, law of T (X - E X)) with identity covariance"""
    mean, cov = dist.moments()
    d = dist.dim
    if np.allclose(mean, 0.0, atol=MEAN_TOL) and np.allclose(cov, np.eye(d), atol=COV_TOL):
        return np.eye(d), dist
    eigvals, eigvecs = np.linalg.eigh((cov + cov.T) / 2)
    if eigvals.min() <= 1e-12 * max(1.0, eigvals.max()):
        raise DegeneracyError(f"covariance of {dist.spec_string} is singular (eigenvalues {eigvals.tolist()})")
    T = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
    logger.info(f"whitening {dist.spec_string} with T={np.round(T, 6).tolist()}")
    return T, LinearImage(T, dist, center=mean)


def required_moment_order(p: float) -> float:
    """alpha = p when p > 2; otherwise any alpha > 2 (reported as 2)"""
    return p if p > 2 else 2.0


def check_moment_assumption(dist: StepDistribution, p: float) -> Optional[str]:
    alpha = required_moment_order(p)
    declared = dist.moment_order
    unmet = declared < alpha or (p <= 2 and declared <= 2)
    if not unmet:
        return None
    bound = f">= {alpha:g}" if p > 2 else "> 2"
    message = f"declared moment order {declared:g} does not meet the required order {bound} for p={p:g}"
    logger.warning(message)
    return message
