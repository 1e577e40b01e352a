#!/usr/bin/env python3
"""
ConeWalk - Lattice DP Oracle
Exact law of a killed walk with finitely supported steps, by mass propagation.

Features:
- Dense integer-grid propagation for one-dimensional integer laws
- Sparse merged-state propagation in any dimension
- Survival probabilities, killed expectations and box probabilities per horizon
"""
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import ArgumentError, PreconditionError, UnsupportedDistributionError
from scripts.geometry.cone_geometry import Box
from scripts.steps.step_distributions import StepDistribution

logger = logging.getLogger(__name__)

STATE_KEY_RESOLUTION = 1e-9
MAX_SPARSE_STATES = 2_000_000


@dataclass
class KilledLaw:
    """Sub-probability law of x + S(n) on {tau > n}"""
    horizon: int
    points: np.ndarray
    masses: np.ndarray

    @property
    def survival(self) -> float:
        return math.fsum(self.masses)

    def expectation(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        if len(self.masses) == 0:
            return 0.0
        return math.fsum(self.masses * np.asarray(fn(self.points), dtype=float))

    def box_probability(self, box: Box) -> float:
        if len(self.masses) == 0:
            return 0.0
        return math.fsum(self.masses[box.contains(self.points)])


def _integer_steps(points: np.ndarray, x: np.ndarray) -> bool:
    return points.shape[1] == 1 and np.allclose(points, np.round(points)) and np.allclose(x, np.round(x))


def _dense_1d(x, atoms, region, horizons):
    steps = np.round(atoms.points[:, 0]).astype(int)
    weights = atoms.weights
    n_max = horizons[-1]
    x0 = int(round(x[0]))
    lo = x0 + n_max * min(steps.min(), 0)
    hi = x0 + n_max * max(steps.max(), 0)
    grid = np.arange(lo, hi + 1, dtype=float)
    inside = np.asarray(region.contains(grid[:, None]), dtype=bool)
    mass = np.zeros(len(grid))
    mass[x0 - lo] = 1.0
    out = {}
    wanted = set(horizons)
    for n in range(1, n_max + 1):
        nxt = np.zeros_like(mass)
        for s, w in zip(steps, weights):
            if s >= 0:
                nxt[s:] += w * mass[:len(mass) - s]
            else:
                nxt[:s] += w * mass[-s:]
        nxt[~inside] = 0.0
        mass = nxt
        if n in wanted:
            nz = np.flatnonzero(mass)
            out[n] = KilledLaw(n, grid[nz][:, None], mass[nz].copy())
    return out


def _sparse(x, atoms, region, horizons):
    points = x[None, :]
    masses = np.ones(1)
    out = {}
    wanted = set(horizons)
    for n in range(1, horizons[-1] + 1):
        cand = (points[:, None, :] + atoms.points[None, :, :]).reshape(-1, len(x))
        cand_mass = (masses[:, None] * atoms.weights[None, :]).reshape(-1)
        inside = np.asarray(region.contains(cand), dtype=bool)
        cand, cand_mass = cand[inside], cand_mass[inside]
        if len(cand) == 0:
            points, masses = cand, cand_mass
        else:
            keys = np.round(cand / STATE_KEY_RESOLUTION).astype(np.int64)
            _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
            points = cand[first]
            masses = np.bincount(inverse.reshape(-1), weights=cand_mass, minlength=len(first))
        if len(points) > MAX_SPARSE_STATES:
            raise ArgumentError(f"exact propagation exceeded {MAX_SPARSE_STATES} states at n={n}")
        if n in wanted:
            out[n] = KilledLaw(n, points.copy(), masses.copy())
    return out


def killed_law(dist: StepDistribution, region, x, horizons: Sequence[int]) -> Dict[int, KilledLaw]:
    """Exact killed law at each horizon for finitely supported steps"""
    atoms = dist.as_atoms()
    if atoms is None:
        raise UnsupportedDistributionError(f"{dist.spec_string} has no finite support")
    horizons = sorted(int(h) for h in horizons)
    if not horizons or horizons[0] < 1:
        raise ArgumentError("horizons must be positive integers")
    start = np.asarray(x, dtype=float).reshape(atoms.dim)
    if not region.contains(start):
        raise PreconditionError(f"start point {start.tolist()} is outside the region")
    if _integer_steps(atoms.points, start):
        laws = _dense_1d(start, atoms, region, horizons)
    else:
        laws = _sparse(start, atoms, region, horizons)
    logger.debug(f"exact killed law of {atoms.spec_string} from {start.tolist()} to n={horizons[-1]}")
    return laws


def survival_probabilities(dist: StepDistribution, region, x, horizons: Sequence[int]) -> List[float]:
    laws = killed_law(dist, region, x, horizons)
    return [laws[h].survival for h in sorted(horizons)]


def killed_expectations(dist: StepDistribution, region, x, horizons: Sequence[int],
                        fn: Callable[[np.ndarray], np.ndarray]) -> List[float]:
    """E[f(x + S(n)); tau > n] for each horizon"""
    laws = killed_law(dist, region, x, horizons)
    return [laws[h].expectation(fn) for h in sorted(horizons)]


def box_probabilities(dist: StepDistribution, region, x, boxes: Dict[int, Box]) -> Dict[int, float]:
    laws = killed_law(dist, region, x, list(boxes))
    return {h: laws[h].box_probability(box) for h, box in boxes.items()}


def exact_path_events(dist: StepDistribution, horizon: int, max_sequences: int = 100_000
                      ) -> Tuple[np.ndarray, np.ndarray]:
    """All increment sequences of length `horizon` with their probabilities"""
    atoms = dist.as_atoms()
    if atoms is None:
        raise UnsupportedDistributionError(f"{dist.spec_string} has no finite support")
    k = len(atoms.weights)
    if k ** horizon > max_sequences:
        raise ArgumentError(f"{k}^{horizon} sequences exceed the enumeration cap {max_sequences}")
    index = np.indices((k,) * horizon).reshape(horizon, -1).T
    increments = atoms.points[index]
    probs = np.prod(atoms.weights[index], axis=1)
    return increments, probs
