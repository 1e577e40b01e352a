#!/usr/bin/env python3
"""
ConeWalk - Harmonic Estimator
Monte Carlo estimates of the killed-walk harmonic functions V and V~, and the 1D ladder-height oracle.

Features:
- V(x) = lim E[u(x + S(n)); tau(x) > n] with a stabilization curve over horizons
- V~ for the reversed walk (negated increments)
- One-step harmonicity residual with nested estimation and a spatial inner cache
- Strict ladder-height law by exact enumeration over killed paths
- Renewal function of the ladder heights in closed or open convention
"""
import logging
import math
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import ArgumentError, PreconditionError, UnsupportedDistributionError
from scripts.geometry.cone_geometry import Cone
from scripts.geometry.spectral_data import SpectralData, spectral_data
from scripts.simulation.killed_walk_engine import KilledFunctional, KilledWalkEngine, WalkConfig
from scripts.simulation.random_streams import StreamFactory
from scripts.steps.step_distributions import FiniteAtoms, StepDistribution

logger = logging.getLogger(__name__)

HEIGHT_KEY_RESOLUTION = 1e-9
MAX_RENEWAL_STATES = 200_000
CENTERING_TOL = 1e-12


@dataclass
class HarmonicConfig:
    """Harmonic estimation configuration"""
    horizons: List[int] = field(default_factory=lambda: [64, 128, 256, 512, 1024])
    paths: int = 100_000
    cache_resolution: float = 1e-2
    use_cache: bool = True
    stabilization_window: int = 3
    outer_paths: int = 200             # harmonicity check: outer one-step draws
    inner_paths: int = 2_000           # harmonicity check: paths per inner estimate
    inner_horizon: int = 128


@dataclass
class VEstimate:
    value: float
    stderr: float
    horizon_used: int
    stabilized: bool
    curve: List[Tuple[int, float, float]]

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class HarmonicityResidual:
    residual: float
    stderr: float
    outer_draws: int
    survivors: int
    cache_hits: int

    @property
    def passes(self) -> bool:
        return abs(self.residual) <= 3 * self.stderr + 1e-12

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['passes'] = self.passes
        return data


@dataclass
class LadderHeightLaw:
    heights: np.ndarray
    masses: np.ndarray
    unresolved_mass: float
    depth: int


@dataclass
class RenewalValue:
    value: float
    jumps: np.ndarray
    increments: np.ndarray
    unresolved_mass: float
    convention: str
    truncated: bool = False


def is_stabilized(curve: Sequence[Tuple[int, float, float]], window: int = 3) -> bool:
    """Last `window` estimates mutually within 2 combined standard errors"""
    if len(curve) < window:
        return False
    tail = curve[-window:]
    for i in range(window):
        for j in range(i + 1, window):
            _, a, sa = tail[i]
            _, b, sb = tail[j]
            if abs(a - b) > 2 * math.sqrt(sa * sa + sb * sb):
                return False
    return True


class HarmonicEstimator:
    """Estimates V and V~ for a fixed cone and whitened law"""

    def __init__(self, cone: Cone, dist: StepDistribution, spectral: Optional[SpectralData] = None,
                 config: HarmonicConfig = None, walk_config: WalkConfig = None):
        self.cone = cone
        self.dist = dist
        self.spectral = spectral or spectral_data(cone)
        self.config = config or HarmonicConfig()
        self.walk_config = walk_config or WalkConfig()
        self.logger = logging.getLogger('HarmonicEstimator')

    def _engine(self, seed: int) -> KilledWalkEngine:
        walk = self.walk_config
        return KilledWalkEngine(WalkConfig(master_seed=seed, block_size=walk.block_size,
                                           workers=walk.workers, reservoir_capacity=0))

    def _estimate(self, x, dist, horizons, paths, seed, purpose) -> VEstimate:
        start = np.asarray(x, dtype=float).reshape(self.cone.dim)
        if not self.cone.contains(start):
            raise PreconditionError(f"start point {start.tolist()} is not inside {self.cone.spec_string}")
        horizons = list(horizons or self.config.horizons)
        paths = paths or self.config.paths
        functional = KilledFunctional('u', self.spectral.u)
        table = self._engine(seed).survival_batch(start, dist, self.cone, horizons, paths, purpose=purpose,
                                                  functionals=[functional])
        means, ses = table.functional_mean('u')
        curve = [(int(h), float(m), float(s)) for h, m, s in zip(horizons, means, ses)]
        stabilized = is_stabilized(curve, self.config.stabilization_window)
        if not stabilized:
            self.logger.warning(f"{purpose} estimate at {start.tolist()} not stabilized over horizons {horizons}")
        return VEstimate(curve[-1][1], curve[-1][2], curve[-1][0], stabilized, curve)

    def estimate_V(self, x, horizons: Sequence[int] = None, paths: int = None, seed: int = 0) -> VEstimate:
        return self._estimate(x, self.dist, horizons, paths, seed, "harmonic-V")

    def estimate_V_tilde(self, y, horizons: Sequence[int] = None, paths: int = None, seed: int = 0) -> VEstimate:
        return self._estimate(y, self.dist.negated(), horizons, paths, seed, "harmonic-V-tilde")

    def pointwise(self, horizon: int, paths: int, seed: int = 0) -> Callable[[np.ndarray], Tuple[float, float]]:
        """y -> (E[u(y + S(horizon)); tau(y) > horizon], stderr) with a stream keyed by the point"""
        streams = StreamFactory(seed)

        def estimator(y) -> Tuple[float, float]:
            point = np.asarray(y, dtype=float).reshape(self.cone.dim)
            if not self.cone.contains(point):
                return 0.0, 0.0
            key = [int(v) & 0xFFFFFFFF for v in np.round(point / HEIGHT_KEY_RESOLUTION).astype(np.int64)]
            sub_seed = int(streams.seed_sequence("inner", horizon, *key).generate_state(1)[0])
            estimate = self._estimate(point, self.dist, [horizon], paths, sub_seed, "harmonic-inner")
            return estimate.value, estimate.stderr
        return estimator

    def harmonicity_residual(self, x, v_estimator: Callable[[np.ndarray], Tuple[float, float]],
                             paths: int = 10_000, seed: int = 0) -> HarmonicityResidual:
        """V(x) - E[V(x + X1); x + X1 in C] with the same estimator on both sides

        Finite laws are enumerated instead of sampled.
        """
        start = np.asarray(x, dtype=float).reshape(self.cone.dim)
        if not self.cone.contains(start):
            raise PreconditionError(f"start point {start.tolist()} is not inside {self.cone.spec_string}")
        v_x, se_x = v_estimator(start)

        atoms = self.dist.as_atoms()
        if atoms is not None:
            nxt = start + atoms.points
            inside = np.asarray(self.cone.contains(nxt), dtype=bool)
            terms, inner_var = [], 0.0
            for point, weight in zip(nxt[inside], atoms.weights[inside]):
                value, se = v_estimator(point)
                terms.append(weight * value)
                inner_var += (weight * se) ** 2
            residual = v_x - math.fsum(terms)
            return HarmonicityResidual(residual, math.sqrt(se_x ** 2 + inner_var), len(atoms.weights),
                                       int(inside.sum()), 0)

        rng = StreamFactory(seed).stream("harmonicity-outer", 0)
        nxt = start + self.dist.sample(rng, paths)
        inside = np.asarray(self.cone.contains(nxt), dtype=bool)
        values = np.zeros(paths)
        cache: Dict[tuple, Tuple[float, float]] = {}
        counts: Dict[tuple, int] = {}
        no_cache_var = 0.0
        hits = 0
        for i in np.flatnonzero(inside):
            if self.config.use_cache:
                key = tuple(np.round(nxt[i] / self.config.cache_resolution).astype(np.int64))
                if key in cache:
                    hits += 1
                else:
                    cache[key] = v_estimator(nxt[i])
                counts[key] = counts.get(key, 0) + 1
                values[i], _ = cache[key]
            else:
                values[i], se = v_estimator(nxt[i])
                no_cache_var += (se / paths) ** 2
        outer_var = float(values.var(ddof=1)) / paths if paths > 1 else 0.0
        if self.config.use_cache:
            inner_var = sum((counts[k] / paths * cache[k][1]) ** 2 for k in cache)
        else:
            inner_var = no_cache_var
        residual = v_x - math.fsum(values) / paths
        stderr = math.sqrt(se_x ** 2 + outer_var + inner_var)
        self.logger.info(f"harmonicity residual at {start.tolist()}: {residual:.5f} +/- {stderr:.5f} "
                         f"({int(inside.sum())} survivors, {hits} cache hits)")
        return HarmonicityResidual(residual, stderr, paths, int(inside.sum()), hits)


def _centered_atoms(mu: StepDistribution) -> FiniteAtoms:
    atoms = mu.as_atoms()
    if atoms is None or atoms.dim != 1:
        raise UnsupportedDistributionError("ladder heights need a one-dimensional finite law")
    mean = float(atoms.weights @ atoms.points[:, 0])
    if abs(mean) > CENTERING_TOL:
        raise ArgumentError(f"law is not centered (mean {mean:.3e})")
    return atoms


def ladder_height_law(mu: StepDistribution, depth: int = 2_000, ladder: str = "ascending") -> LadderHeightLaw:
    """Law of the first strict ladder height, renormalized by the mass resolved within `depth` steps"""
    if ladder not in ("ascending", "descending"):
        raise ArgumentError("ladder must be 'ascending' or 'descending'")
    atoms = _centered_atoms(mu)
    steps = atoms.points[:, 0] if ladder == "ascending" else -atoms.points[:, 0]
    positions = np.zeros(1)
    masses = np.ones(1)
    heights: Dict[int, float] = {}
    resolved: Dict[int, List[float]] = {}
    for _ in range(depth):
        cand = (positions[:, None] + steps[None, :]).reshape(-1)
        cand_mass = (masses[:, None] * atoms.weights[None, :]).reshape(-1)
        up = cand > 0.0
        for h, m in zip(cand[up], cand_mass[up]):
            key = int(round(h / HEIGHT_KEY_RESOLUTION))
            heights[key] = h
            resolved.setdefault(key, []).append(m)
        cand, cand_mass = cand[~up], cand_mass[~up]
        if len(cand) == 0:
            positions, masses = cand, cand_mass
            break
        keys = np.round(cand / HEIGHT_KEY_RESOLUTION).astype(np.int64)
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        positions = cand[first]
        masses = np.bincount(inverse.reshape(-1), weights=cand_mass, minlength=len(uniq))
    order = sorted(heights)
    h = np.array([heights[k] for k in order])
    m = np.array([math.fsum(resolved[k]) for k in order])
    unresolved = math.fsum(masses)
    total = math.fsum(m)
    if total <= 0:
        raise ArgumentError("no ladder epoch within the enumeration depth")
    return LadderHeightLaw(h, m / total, unresolved, depth)


def renewal_function(law: LadderHeightLaw, x: float, convention: str = "closed") -> RenewalValue:
    """sum_{n >= 0} mu+^{*n}([0, x]) (closed) or [0, x) (open)"""
    if convention not in ("closed", "open"):
        raise ArgumentError("convention must be 'closed' or 'open'")
    if x < 0:
        raise ArgumentError("x must be nonnegative")

    def within(points):
        return points <= x + HEIGHT_KEY_RESOLUTION if convention == "closed" else points < x - HEIGHT_KEY_RESOLUTION

    level_points, level_masses = np.zeros(1), np.ones(1)
    jumps: Dict[int, float] = {}
    increments: Dict[int, List[float]] = {}
    truncated = False
    while len(level_points):
        keep = within(level_points)
        level_points, level_masses = level_points[keep], level_masses[keep]
        for p, m in zip(level_points, level_masses):
            key = int(round(p / HEIGHT_KEY_RESOLUTION))
            jumps[key] = p
            increments.setdefault(key, []).append(m)
        if not len(level_points):
            break
        cand = (level_points[:, None] + law.heights[None, :]).reshape(-1)
        cand_mass = (level_masses[:, None] * law.masses[None, :]).reshape(-1)
        keys = np.round(cand / HEIGHT_KEY_RESOLUTION).astype(np.int64)
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        level_points = cand[first]
        level_masses = np.bincount(inverse.reshape(-1), weights=cand_mass, minlength=len(uniq))
        if len(level_points) > MAX_RENEWAL_STATES:
            logger.warning(f"renewal series stopped at {len(jumps)} jump points: state budget exceeded")
            truncated = True
            break
    order = sorted(jumps)
    points = np.array([jumps[k] for k in order])
    sizes = np.array([math.fsum(increments[k]) for k in order])
    return RenewalValue(math.fsum(sizes), points, sizes, law.unresolved_mass, convention, truncated)


def renewal_V_1d(mu: StepDistribution, x: float, truncation: int = 2_000, convention: str = "closed",
                 ladder: str = "ascending") -> RenewalValue:
    """Renewal series of the first strict ladder height over [0, x]"""
    return renewal_function(ladder_height_law(mu, truncation, ladder), x, convention)


def estimate_V(x, dist: StepDistribution, cone: Cone, spectral: SpectralData = None,
               horizons: Sequence[int] = None, paths: int = None, seed: int = 0) -> VEstimate:
    return HarmonicEstimator(cone, dist, spectral).estimate_V(x, horizons, paths, seed)


def estimate_V_tilde(y, dist: StepDistribution, cone: Cone, spectral: SpectralData = None,
                     horizons: Sequence[int] = None, paths: int = None, seed: int = 0) -> VEstimate:
    return HarmonicEstimator(cone, dist, spectral).estimate_V_tilde(y, horizons, paths, seed)
