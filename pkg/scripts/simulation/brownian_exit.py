#!/usr/bin/env python3
"""
ConeWalk - Brownian Exit Oracle
Monte Carlo survival probability P(tau_bm(x) > t) of standard Brownian motion in a cone.

Features:
- Brownian scaling to unit time: P(tau(x) > t) = P(tau(x / sqrt(t)) > 1)
- Exact bridge correction for cones with mutually orthogonal facets
- Euler scheme with a reported discretization bias bound
- Optional boundary-shift continuity correction for the Euler scheme
"""
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, Optional

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import ArgumentError, PreconditionError, UnsupportedSpectralError
from scripts.geometry.cone_geometry import Cone
from scripts.geometry.spectral_data import spectral_data
from scripts.simulation.random_streams import StreamFactory

logger = logging.getLogger(__name__)

# E max of a standard Gaussian walk overshoot, used for the boundary-shift correction
OVERSHOOT_CONSTANT = 0.5826
MAX_DT_FRACTION = 1e-3


@dataclass
class BrownianConfig:
    """Brownian oracle configuration"""
    dt_fraction: float = 1e-3          # dt = dt_fraction * t
    block_size: int = 10_000
    workers: int = 4
    max_steps: int = 20_000             # step budget for the automatic Euler dt
    continuity_correction: bool = False  # Euler only: kill within OVERSHOOT_CONSTANT sqrt(dt) of the boundary


@dataclass
class TailEstimate:
    value: float
    stderr: float
    paths: int
    dt: float
    steps: int
    bridge_corrected: bool
    continuity_corrected: bool
    bias_bound: float
    bias_dominated: bool

    def to_dict(self) -> Dict:
        return asdict(self)


def orthogonal_facets(cone: Cone) -> Optional[np.ndarray]:
    """Unit facet normals when the cone is polyhedral with pairwise orthogonal facets"""
    normals = cone.normals()
    if normals is None:
        return None
    unit = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    gram = unit @ unit.T
    if np.allclose(gram, np.eye(len(unit)), atol=1e-10):
        return unit
    return None


def _bridge_block(start, unit_normals, steps, dt, n_paths, rng):
    """Sum and sum of squares of per-path survival weights from facet-wise bridge probabilities"""
    d = len(start)
    sqrt_dt = math.sqrt(dt)
    pos = np.tile(start, (n_paths, 1))
    heights = pos @ unit_normals.T
    weight = np.ones(n_paths)
    for _ in range(steps):
        pos = pos + sqrt_dt * rng.standard_normal((len(pos), d))
        nxt = pos @ unit_normals.T
        inside = np.all(nxt > 0.0, axis=1)
        # components along orthogonal unit normals are independent Brownian motions
        stay = 1.0 - np.exp(-2.0 * np.clip(heights, 0.0, None) * np.clip(nxt, 0.0, None) / dt)
        weight = np.where(inside, weight * np.prod(stay, axis=1), 0.0)
        keep = weight > 0.0
        pos, heights, weight = pos[keep], nxt[keep], weight[keep]
        if len(pos) == 0:
            break
    return float(weight.sum()), float((weight * weight).sum())


def _euler_block(start, cone, steps, dt, n_paths, rng, margin):
    d = len(start)
    sqrt_dt = math.sqrt(dt)
    pos = np.tile(start, (n_paths, 1))
    for _ in range(steps):
        pos = pos + sqrt_dt * rng.standard_normal((len(pos), d))
        inside = np.asarray(cone.contains(pos), dtype=bool)
        if margin > 0.0:
            inside &= np.asarray(cone.boundary_distance(pos)) > margin
        pos = pos[inside]
        if len(pos) == 0:
            break
    survivors = float(len(pos))
    return survivors, survivors


def euler_dt(x, cone: Cone, t_horizon: float, total_paths: int, max_steps: int) -> float:
    """Largest dt whose bias bound stays under half the worst-case standard error, within the step budget"""
    try:
        p = spectral_data(cone).p
    except UnsupportedSpectralError:
        p = 1.0
    gap = float(cone.boundary_distance(np.asarray(x, dtype=float) / math.sqrt(t_horizon)))
    worst_se = 0.5 / math.sqrt(total_paths)
    root = 0.5 * worst_se * gap / (p * OVERSHOOT_CONSTANT)
    unit_dt = max(root * root, 1.0 / max_steps)
    return unit_dt * t_horizon


def brownian_exit_tail(x, cone: Cone, t_horizon: float, total_paths: int, master_seed: int = 0,
                       dt: Optional[float] = None, config: BrownianConfig = None,
                       purpose: str = "brownian") -> TailEstimate:
    """Estimate P(tau_bm(x) > t) with its Monte Carlo standard error"""
    config = config or BrownianConfig()
    start = np.asarray(x, dtype=float).reshape(cone.dim)
    if not cone.contains(start):
        raise PreconditionError(f"start point {start.tolist()} is not inside {cone.spec_string}")
    if not t_horizon > 0:
        raise ArgumentError("time horizon must be positive")
    if total_paths < 1:
        raise ArgumentError("total_paths must be positive")
    if dt is None:
        dt = config.dt_fraction * t_horizon
        if orthogonal_facets(cone) is None:
            dt = min(dt, euler_dt(start, cone, t_horizon, total_paths, config.max_steps))
    dt = float(dt)
    if not 0 < dt <= MAX_DT_FRACTION * t_horizon * (1 + 1e-12):
        raise ArgumentError(f"dt must lie in (0, {MAX_DT_FRACTION} t]")

    scaled = start / math.sqrt(t_horizon)
    unit_dt = dt / t_horizon
    steps = int(math.ceil(1.0 / unit_dt - 1e-9))
    unit_dt = 1.0 / steps
    unit_normals = orthogonal_facets(cone)
    bridge = unit_normals is not None
    corrected = (not bridge) and config.continuity_correction
    margin = OVERSHOOT_CONSTANT * math.sqrt(unit_dt) if corrected else 0.0

    streams = StreamFactory(master_seed)
    full, rest = divmod(total_paths, config.block_size)
    sizes = [config.block_size] * full + ([rest] if rest else [])

    def run(index: int):
        rng = streams.stream(purpose, index)
        if bridge:
            return _bridge_block(scaled, unit_normals, steps, unit_dt, sizes[index], rng)
        return _euler_block(scaled, cone, steps, unit_dt, sizes[index], rng, margin)

    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as executor:
        parts = list(executor.map(run, range(len(sizes))))

    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    value = total / total_paths
    var = max(total_sq / total_paths - value * value, 0.0)
    stderr = math.sqrt(var / total_paths)

    bias_bound = 0.0
    if not bridge:
        # first-order discrete monitoring bias
        try:
            p = spectral_data(cone).p
        except UnsupportedSpectralError:
            p = 1.0
        gap = float(cone.boundary_distance(scaled))
        bias_bound = value * p * OVERSHOOT_CONSTANT * math.sqrt(unit_dt) / max(gap, 1e-12)
    estimate = TailEstimate(value=value, stderr=stderr, paths=total_paths, dt=dt, steps=steps,
                            bridge_corrected=bridge, continuity_corrected=corrected,
                            bias_bound=bias_bound, bias_dominated=bias_bound <= 0.5 * stderr)
    logger.info(f"P(tau_bm > {t_horizon:g}) from {start.tolist()} in {cone.spec_string}: "
                f"{value:.6f} +/- {stderr:.6f} ({'bridge' if bridge else 'euler'}, {steps} steps)")
    return estimate
