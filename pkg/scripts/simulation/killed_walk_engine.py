#!/usr/bin/env python3
"""
ConeWalk - Killed Walk Engine
Monte Carlo engine for random walks killed on leaving a cone.

Features:
- Single-path forward and reversed exit records
- Block-parallel survival tables over a horizon schedule
- Several regions tracked on shared increments (paired coupling)
- Endpoint-box hit counts and killed functionals E[f(x + S(n)); tau > n]
- Priority-key reservoir of survivor endpoints
- Order-insensitive merging: bit-identical tables for any worker count
- Paired forward/reversed blocks for the time-reversal inclusions
"""
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent.parent))

from core.exceptions import ArgumentError, PreconditionError
from scripts.geometry.cone_geometry import Box
from scripts.simulation.random_streams import StreamFactory
from scripts.steps.step_distributions import StepDistribution

MIN_TOTAL_PATHS = 1_000


@dataclass
class WalkConfig:
    """Engine configuration"""
    master_seed: int = 0
    block_size: int = 10_000
    workers: int = 4
    reservoir_capacity: int = 100_000


@dataclass
class ExitRecord:
    """Exit time (None when censored at n_max) and the endpoints at queried horizons"""
    exit_time: Optional[int]
    censored_at: int
    endpoints: Dict[int, List[float]]
    survived_to: List[bool]

    @property
    def censored(self) -> bool:
        return self.exit_time is None


@dataclass
class BoxTarget:
    """Count survivors of `region` whose endpoint at horizon h lies in boxes[h]"""
    name: str
    boxes: Dict[int, Box]
    region: int = 0


@dataclass
class KilledFunctional:
    """Accumulate f(x + S(n)) over survivors of `region`"""
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    region: int = 0


class Reservoir:
    """Keeps the points with the smallest priority keys; merge is order-insensitive"""

    def __init__(self, capacity: int, dim: int):
        self.capacity = capacity
        self.keys = np.empty(0)
        self.points = np.empty((0, dim))

    def offer(self, keys: np.ndarray, points: np.ndarray):
        if self.capacity <= 0 or len(keys) == 0:
            return
        keys = np.concatenate([self.keys, keys])
        points = np.concatenate([self.points, points])
        if len(keys) > self.capacity:
            keep = np.argpartition(keys, self.capacity - 1)[:self.capacity]
            keys, points = keys[keep], points[keep]
        order = np.argsort(keys, kind="stable")
        self.keys, self.points = keys[order], points[order]

    def merge(self, other: "Reservoir"):
        self.offer(other.keys, other.points)


@dataclass
class SurvivalTable:
    """Survivor counts per horizon for the primary region (index 0) and any extra regions"""
    horizons: List[int]
    counts: List[int]
    total_paths: int
    region_counts: List[List[int]] = field(default_factory=list)
    survivor_endpoints: Dict[int, np.ndarray] = field(default_factory=dict)
    box_hits: Dict[str, List[int]] = field(default_factory=dict)
    functional_sums: Dict[str, List[float]] = field(default_factory=dict)
    functional_sq_sums: Dict[str, List[float]] = field(default_factory=dict)

    def phat(self, region: int = 0) -> np.ndarray:
        counts = self.region_counts[region] if self.region_counts else self.counts
        return np.asarray(counts, dtype=float) / self.total_paths

    def stderr(self, region: int = 0) -> np.ndarray:
        p = self.phat(region)
        return np.sqrt(p * (1 - p) / self.total_paths)

    def box_phat(self, name: str) -> np.ndarray:
        return np.asarray(self.box_hits[name], dtype=float) / self.total_paths

    def functional_mean(self, name: str):
        """(mean, stderr) per horizon of f(x + S(n)) 1{tau > n}"""
        n = self.total_paths
        sums = np.asarray(self.functional_sums[name])
        sq = np.asarray(self.functional_sq_sums[name])
        mean = sums / n
        var = np.clip(sq / n - mean ** 2, 0.0, None)
        return mean, np.sqrt(var / n)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'horizon': self.horizons,
            'survivors': self.counts,
            'total': self.total_paths,
            'phat': self.phat(),
            'stderr': self.stderr(),
        })


@dataclass
class _BlockTally:
    index: int
    counts: np.ndarray                      # (regions, horizons)
    box_hits: np.ndarray                    # (targets, horizons)
    sums: np.ndarray                        # (functionals, horizons)
    sq_sums: np.ndarray
    reservoirs: Dict[int, Reservoir]


def _check_start(start: np.ndarray, region, label: str):
    if not region.contains(start):
        raise PreconditionError(f"{label} {start.tolist()} is not inside {getattr(region, 'spec_string', region)}")


def simulate_exit(x, dist: StepDistribution, region, n_max: int, rng: np.random.Generator,
                  horizons: Optional[Sequence[int]] = None) -> ExitRecord:
    """Walk x + S(k) until the first k with x + S(k) outside the region, censored at n_max"""
    if n_max < 1:
        raise ArgumentError("n_max must be >= 1")
    start = np.asarray(x, dtype=float).reshape(dist.dim)
    _check_start(start, region, "start point")
    path = start + np.cumsum(dist.sample(rng, n_max), axis=0)
    inside = np.asarray(region.contains(path), dtype=bool)
    exits = np.flatnonzero(~inside)
    exit_time = int(exits[0]) + 1 if len(exits) else None
    horizons = sorted(horizons) if horizons else [n_max]
    survived = [exit_time is None or exit_time > h for h in horizons]
    endpoints = {h: path[h - 1].tolist() for h, alive in zip(horizons, survived) if alive}
    return ExitRecord(exit_time, n_max, endpoints, survived)


def simulate_reverse_exit(y, dist: StepDistribution, region, n_max: int, rng: np.random.Generator,
                          horizons: Optional[Sequence[int]] = None) -> ExitRecord:
    """Same contract for y - S(k); region may be a thickened cone"""
    return simulate_exit(y, dist.negated(), region, n_max, rng, horizons)


class KilledWalkEngine:
    """Block-parallel Monte Carlo over killed walks"""

    def __init__(self, config: WalkConfig = None):
        self.config = config or WalkConfig()
        self.streams = StreamFactory(self.config.master_seed)
        self.logger = logging.getLogger('KilledWalkEngine')

    def _block_sizes(self, total_paths: int) -> List[int]:
        size = self.config.block_size
        full, rest = divmod(total_paths, size)
        return [size] * full + ([rest] if rest else [])

    def survival_batch(self, x, dist: StepDistribution, cone, horizons: Sequence[int], total_paths: int,
                       purpose: str = "survival", extra_regions: Sequence = (),
                       targets: Sequence[BoxTarget] = (), functionals: Sequence[KilledFunctional] = (),
                       reservoir_capacity: Optional[int] = None) -> SurvivalTable:
        """Survival counts of x + S(n) in `cone` (and extra regions, None = never killed) at each horizon"""
        horizons = [int(h) for h in horizons]
        if not horizons or horizons != sorted(set(horizons)) or horizons[0] < 1:
            raise ArgumentError("horizons must be strictly increasing positive integers")
        if total_paths < MIN_TOTAL_PATHS:
            raise ArgumentError(f"total_paths must be >= {MIN_TOTAL_PATHS}")
        start = np.asarray(x, dtype=float).reshape(dist.dim)
        regions = [cone] + list(extra_regions)
        for region in regions:
            if region is not None:
                _check_start(start, region, "start point")
        capacity = self.config.reservoir_capacity if reservoir_capacity is None else reservoir_capacity

        sizes = self._block_sizes(total_paths)
        started = time.time()
        self.logger.info(f"[{purpose}] {total_paths} paths in {len(sizes)} blocks, horizons {horizons[0]}..{horizons[-1]}")

        def run(index: int) -> _BlockTally:
            return self._run_block(index, sizes[index], start, dist, regions, horizons, purpose,
                                   targets, functionals, capacity)

        with ThreadPoolExecutor(max_workers=max(1, self.config.workers)) as executor:
            tallies = list(executor.map(run, range(len(sizes))))

        table = self._merge(tallies, horizons, total_paths, targets, functionals, capacity, dist.dim)
        self.logger.info(f"[{purpose}] done in {time.time() - started:.1f}s; survivors at n={horizons[-1]}: {table.counts[-1]}")
        return table

    def _run_block(self, index, n_paths, start, dist, regions, horizons, purpose, targets, functionals,
                   capacity) -> _BlockTally:
        rng = self.streams.stream(purpose, index)
        keys = rng.random(n_paths) if capacity > 0 else np.zeros(n_paths)
        H = len(horizons)
        counts = np.zeros((len(regions), H), dtype=np.int64)
        hits = np.zeros((len(targets), H), dtype=np.int64)
        sums = np.zeros((len(functionals), H))
        sq_sums = np.zeros((len(functionals), H))
        reservoirs = {h: Reservoir(capacity, dist.dim) for h in horizons}

        pos = np.tile(start, (n_paths, 1))
        alive = np.ones((n_paths, len(regions)), dtype=bool)
        h_idx = 0
        for step in range(1, horizons[-1] + 1):
            pos = pos + dist.sample(rng, len(pos))
            for r, region in enumerate(regions):
                if region is None:
                    continue
                live = alive[:, r]
                alive[live, r] = np.asarray(region.contains(pos[live]), dtype=bool)
            if step == horizons[h_idx]:
                counts[:, h_idx] = alive.sum(axis=0)
                for t, target in enumerate(targets):
                    box = target.boxes.get(step)
                    if box is not None:
                        sel = alive[:, target.region]
                        hits[t, h_idx] = int(np.count_nonzero(box.contains(pos[sel])))
                for f, functional in enumerate(functionals):
                    values = np.asarray(functional.fn(pos[alive[:, functional.region]]), dtype=float)
                    sums[f, h_idx] = math.fsum(values)
                    sq_sums[f, h_idx] = math.fsum(values * values)
                if capacity > 0:
                    sel = alive[:, 0]
                    reservoirs[step].offer(keys[sel], pos[sel])
                h_idx += 1
                if h_idx == H:
                    break
            keep = alive.any(axis=1)
            if not keep.all():
                pos, alive, keys = pos[keep], alive[keep], keys[keep]
                if len(pos) == 0:
                    break
        return _BlockTally(index, counts, hits, sums, sq_sums, reservoirs)

    @staticmethod
    def _merge(tallies: List[_BlockTally], horizons, total_paths, targets, functionals, capacity,
               dim) -> SurvivalTable:
        tallies = sorted(tallies, key=lambda t: t.index)
        counts = sum(t.counts for t in tallies)
        hits = sum(t.box_hits for t in tallies)
        H = len(horizons)
        sums = [[math.fsum(t.sums[f, h] for t in tallies) for h in range(H)] for f in range(len(functionals))]
        sq_sums = [[math.fsum(t.sq_sums[f, h] for t in tallies) for h in range(H)] for f in range(len(functionals))]
        endpoints = {}
        if capacity > 0:
            for h in horizons:
                merged = Reservoir(capacity, dim)
                for t in tallies:
                    merged.merge(t.reservoirs[h])
                endpoints[h] = merged.points
        return SurvivalTable(
            horizons=list(horizons),
            counts=[int(c) for c in counts[0]],
            total_paths=total_paths,
            region_counts=[[int(c) for c in row] for row in counts],
            survivor_endpoints=endpoints,
            box_hits={target.name: [int(c) for c in hits[i]] for i, target in enumerate(targets)},
            functional_sums={f.name: sums[i] for i, f in enumerate(functionals)},
            functional_sq_sums={f.name: sq_sums[i] for i, f in enumerate(functionals)},
        )

    def paired_duality_counts(self, forward_start, reverse_start, dist: StepDistribution, forward_region,
                              reverse_region, forward_box: Box, reverse_box: Box, horizon: int,
                              total_paths: int, purpose: str = "duality") -> Dict[str, int]:
        """Forward x + S(k) and reversed y - (X_n + ... + X_{n-k+1}) on one increment sequence"""
        fwd = np.asarray(forward_start, dtype=float).reshape(dist.dim)
        rev = np.asarray(reverse_start, dtype=float).reshape(dist.dim)
        _check_start(fwd, forward_region, "forward start")
        _check_start(rev, reverse_region, "reversed start")
        sizes = self._block_sizes(total_paths)

        def run(index: int):
            rng = self.streams.stream(purpose, index)
            m = sizes[index]
            incs = dist.sample(rng, m * horizon).reshape(m, horizon, dist.dim)
            f_event, b_event = paired_events(incs, fwd, rev, forward_region, reverse_region, forward_box, reverse_box)
            return (int(f_event.sum()), int(b_event.sum()), int((f_event & ~b_event).sum()),
                    int((b_event & ~f_event).sum()))

        with ThreadPoolExecutor(max_workers=max(1, self.config.workers)) as executor:
            results = list(executor.map(run, range(len(sizes))))
        return {
            'forward_hits': sum(r[0] for r in results),
            'reverse_hits': sum(r[1] for r in results),
            'forward_only': sum(r[2] for r in results),
            'reverse_only': sum(r[3] for r in results),
            'total': total_paths,
        }


def paired_events(incs: np.ndarray, forward_start: np.ndarray, reverse_start: np.ndarray, forward_region,
                  reverse_region, forward_box: Box, reverse_box: Box):
    """Event flags per increment sequence (paths, n, d) for the forward and the reversed walk"""
    m, horizon, d = incs.shape
    forward = forward_start + np.cumsum(incs, axis=1)
    backward = reverse_start - np.cumsum(incs[:, ::-1, :], axis=1)
    f_alive = np.all(np.asarray(forward_region.contains(forward.reshape(-1, d))).reshape(m, horizon), axis=1)
    b_alive = np.all(np.asarray(reverse_region.contains(backward.reshape(-1, d))).reshape(m, horizon), axis=1)
    return f_alive & forward_box.contains(forward[:, -1]), b_alive & reverse_box.contains(backward[:, -1])


def survival_batch(x, dist: StepDistribution, cone, horizons: Sequence[int], total_paths: int,
                   master_seed: int, block_size: int = 10_000, workers: int = 4, **kwargs) -> SurvivalTable:
    engine = KilledWalkEngine(WalkConfig(master_seed=master_seed, block_size=block_size, workers=workers))
    return engine.survival_batch(x, dist, cone, horizons, total_paths, **kwargs)
