#!/usr/bin/env python3
"""
ConeWalk - Lattice Analysis
Characteristic functions and reachability probes for finite-support step laws.

Features:
- Exact characteristic function on finite supports
- Validation of a declared lattice structure against the atoms
- Grid scan for periodicity witnesses (|char fn| = 1 off the origin)
- Breadth-first reachability probe for the deep-interior sets D_{gamma,R}
"""
import itertools
import logging
import math
import sys
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import ArgumentError, PreconditionError, UnsupportedDistributionError
from scripts.geometry.cone_geometry import Cone
from scripts.steps.step_distributions import (FiniteAtoms, LatticeStructure, StepDistribution,
                                              orthogonal_complement)

logger = logging.getLogger(__name__)

LATTICE_TOL = 1e-9
WITNESS_TOL = 1e-12
NEAR_ONE_TOL = 1e-6
PROBE_KEY_RESOLUTION = 1e-9
PROBE_NODE_BUDGET = 1_000_000
PROBE_MAX_HORIZON = 64


@dataclass
class AperiodicityVerdict:
    status: str                       # aperiodic, periodic, inconclusive
    witness: Optional[List[float]]
    max_modulus: float
    grid_points: int
    resolution: int
    certified: str = "grid"

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class CmuProbeResult:
    status: str                       # reachable, not-reachable-within-horizon, inconclusive
    hit_step: Optional[int]
    witness: Optional[List[float]]
    nodes: int
    horizon: int

    def to_dict(self) -> Dict:
        return asdict(self)


def _require_atoms(dist: StepDistribution) -> FiniteAtoms:
    atoms = dist.as_atoms()
    if atoms is None:
        raise UnsupportedDistributionError(f"{dist.spec_string} has no finite support")
    return atoms


def char_fn(dist: StepDistribution, theta):
    """E exp(i <theta, X>) for finite-support laws; theta may be a stack of points"""
    atoms = _require_atoms(dist)
    th = np.asarray(theta, dtype=float)
    single = th.ndim <= 1
    th = th.reshape(-1, atoms.dim)
    value = np.exp(1j * (th @ atoms.points.T)) @ atoms.weights
    return complex(value[0]) if single else value


def validate_lattice(dist: StepDistribution, structure: LatticeStructure, tol: float = LATTICE_TOL) -> bool:
    """Every atom lies in span(G1) + lattice_basis . Z^t"""
    atoms = _require_atoms(dist)
    if structure.dim != atoms.dim:
        raise ArgumentError("lattice structure and law dimensions differ")
    generators = np.vstack([structure.vector_basis, structure.lattice_basis])
    # coordinates of each atom in the (vector, lattice) basis
    coords = np.linalg.solve(generators.T, atoms.points.T).T
    lattice_coords = coords[:, structure.vector_dim:]
    residual = np.abs(lattice_coords - np.round(lattice_coords))
    ok = bool(np.all(residual <= tol))
    if not ok:
        logger.warning(f"declared lattice rejected: max residual {residual.max():.3e}")
    return ok


def _scan_axes(structure: LatticeStructure, resolution: int, vector_window: float):
    """Grid axes; lattice part in phi coordinates, vector part in an orthonormal complement basis"""
    phi_axis = -math.pi + 2 * math.pi * np.arange(resolution + 1) / resolution
    vec_axis = -vector_window + 2 * vector_window * np.arange(resolution + 1) / resolution
    axes = [phi_axis] * structure.rank + [vec_axis] * structure.vector_dim
    cells = [2 * math.pi / resolution] * structure.rank + [2 * vector_window / resolution] * structure.vector_dim
    return axes, np.array(cells)


def check_aperiodicity(dist: StepDistribution, structure: LatticeStructure, grid_resolution: int = 256,
                       vector_window: float = 2 * math.pi, chunk: int = 65_536) -> AperiodicityVerdict:
    """Scan |char fn| over the fundamental domain minus a one-cell ball around the origin"""
    atoms = _require_atoms(dist)
    if grid_resolution < 2:
        raise ArgumentError("grid resolution must be at least 2")
    if grid_resolution < 64:
        logger.warning(f"grid resolution {grid_resolution} below 64; verdict is coarse")

    U = structure.lattice_basis
    # theta_L = U^T (U U^T)^{-1} phi satisfies <theta_L, u_j> = phi_j
    lift = U.T @ np.linalg.inv(U @ U.T) if structure.rank else np.zeros((atoms.dim, 0))
    complement = orthogonal_complement(U, atoms.dim)
    axes, cells = _scan_axes(structure, grid_resolution, vector_window)

    grid = np.array(list(itertools.product(*axes)))
    keep = np.linalg.norm(grid / cells, axis=1) >= 1.0 - 1e-9
    grid = grid[keep]
    thetas = grid[:, :structure.rank] @ lift.T + grid[:, structure.rank:] @ complement

    moduli = np.empty(len(thetas))
    for start in range(0, len(thetas), chunk):
        moduli[start:start + chunk] = np.abs(char_fn(atoms, thetas[start:start + chunk]))

    max_modulus = float(moduli.max()) if len(moduli) else 0.0
    hits = np.flatnonzero(moduli >= 1.0 - WITNESS_TOL)
    witness, status = None, "aperiodic"
    if len(hits):
        cand = thetas[hits]
        # prefer the shortest witness, then larger coordinates
        order = np.lexsort(tuple(-cand[:, j] for j in reversed(range(cand.shape[1])))
                           + (np.round(np.linalg.norm(cand, axis=1), 9),))
        witness = cand[order[0]].tolist()
        status = "periodic"
    elif max_modulus >= 1.0 - NEAR_ONE_TOL:
        status = "inconclusive"
    logger.info(f"aperiodicity scan of {atoms.spec_string}: {status}, max modulus {max_modulus:.12f}")
    return AperiodicityVerdict(status, witness, max_modulus, len(grid), grid_resolution)


def in_deep_interior(cone: Cone, y: np.ndarray, gamma: float, R: float) -> np.ndarray:
    """Membership in D_{gamma,R} = {dist(y, boundary) >= gamma |y|, |y| >= R}"""
    norms = np.linalg.norm(y, axis=-1)
    dist = np.asarray(cone.boundary_distance(y))
    return np.asarray(cone.contains(y)) & (dist >= gamma * norms) & (norms >= R)


def cmu_probe(dist: StepDistribution, cone: Cone, x, gamma: float, R: float, n_max: int,
              node_budget: int = PROBE_NODE_BUDGET) -> CmuProbeResult:
    """Is D_{gamma,R} reachable from x within n_max steps while staying in the cone?"""
    atoms = _require_atoms(dist)
    if not 1 <= n_max <= PROBE_MAX_HORIZON:
        raise ArgumentError(f"n_max must lie in [1, {PROBE_MAX_HORIZON}]")
    start = np.asarray(x, dtype=float).reshape(cone.dim)
    if not cone.contains(start):
        raise PreconditionError(f"start point {start.tolist()} is not in the cone")

    frontier = start[None, :]
    nodes = 1
    for step in range(1, n_max + 1):
        candidates = (frontier[:, None, :] + atoms.points[None, :, :]).reshape(-1, cone.dim)
        candidates = candidates[np.asarray(cone.contains(candidates), dtype=bool)]
        if len(candidates) == 0:
            return CmuProbeResult("not-reachable-within-horizon", None, None, nodes, n_max)
        keys = np.round(candidates / PROBE_KEY_RESOLUTION).astype(np.int64)
        _, first = np.unique(keys, axis=0, return_index=True)
        frontier = candidates[np.sort(first)]
        nodes += len(frontier)
        deep = np.flatnonzero(in_deep_interior(cone, frontier, gamma, R))
        if len(deep):
            return CmuProbeResult("reachable", step, frontier[deep[0]].tolist(), nodes, n_max)
        if nodes > node_budget:
            logger.warning(f"C_mu probe exhausted its node budget {node_budget} at step {step}")
            return CmuProbeResult("inconclusive", None, None, nodes, n_max)
    return CmuProbeResult("not-reachable-within-horizon", None, None, nodes, n_max)
