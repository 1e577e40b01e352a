#!/usr/bin/env python3
"""
ConeWalk - Orchestrator
Command-line entry point that runs configured verification experiments.

Features:
- Subcommands: constants, tail, harmonic, weak-limit, llt, return, duality, bounds, aperiodicity, cmu-probe, all
- Output root from --out, CONEWALK_OUTPUT_DIR (.env aware) or config/config.json
- One deterministic result directory per (config, seed)
- Exit codes: 0 all pass, 1 any fail, 2 inconclusive without fail, 3 config or runtime error
- Every run recorded in the run registry
"""
import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from core.exceptions import ConeWalkError, ConfigError
from core.experiment_config import VERIFIER_SECTIONS, ExperimentConfig, load_experiment_config
from scripts.analysis.cone_constants import ConstantSet, KappaFitConfig, compute_constants, kappa0
from scripts.analysis.harmonic_estimator import HarmonicConfig
from scripts.analysis.stats_toolkit import worst_verdict
from scripts.geometry.cone_geometry import Box
from scripts.monitoring.report_writer import TOOL_VERSION, ReportWriter, RunManifest
from scripts.monitoring.run_registry import RunRegistry
from scripts.simulation.killed_walk_engine import WalkConfig
from scripts.steps.lattice_analysis import cmu_probe
from scripts.verification.theorem_verifiers import (PinnedConstants, Problem, TheoremVerifier, VerifierReport,
                                                    VerifierSettings, aperiodicity_verdict, lattice_structure_of,
                                                    prepare_problem)

PROJECT_ROOT = Path(__file__).parent.parent
APP_CONFIG_FILE = PROJECT_ROOT / "config" / "config.json"
PINNED_CONSTANTS_FILE = PROJECT_ROOT / "config" / "golden" / "pinned_constants.json"

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_ERROR = 0, 1, 2, 3
SUBCOMMANDS = VERIFIER_SECTIONS + ['all']


def load_app_config(path: Path = APP_CONFIG_FILE) -> Dict:
    if not Path(path).exists():
        return {}
    with open(path, 'r') as f:
        return json.load(f)


def load_pinned_constants(path: Path = PINNED_CONSTANTS_FILE) -> PinnedConstants:
    if not Path(path).exists():
        return PinnedConstants()
    with open(path, 'r') as f:
        data = json.load(f)
    known = {k: float(v) for k, v in data.items() if k in PinnedConstants.__dataclass_fields__}
    return PinnedConstants(**known)


def resolve_output_root(cli_out: Optional[str], app_config: Dict) -> Path:
    """--out, then CONEWALK_OUTPUT_DIR, then the application default"""
    if cli_out:
        return Path(cli_out)
    load_dotenv()
    env = os.getenv('CONEWALK_OUTPUT_DIR')
    if env:
        return Path(env)
    return Path(app_config.get('output_dir', 'results'))


def exit_code_for(verdicts: List[str]) -> int:
    if "fail" in verdicts:
        return EXIT_FAIL
    if "inconclusive" in verdicts or not verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def setup_logging(log_dir: Path, verbose: bool = False, quiet: bool = False):
    """File log always; console log unless quiet"""
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / f"conewalk_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
    handlers = [logging.FileHandler(str(log_file))]
    if not quiet:
        handlers.append(logging.StreamHandler(sys.stdout))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers
    )


class ConeWalkOrchestrator:
    """Builds the problem once and runs the requested experiments against it"""

    def __init__(self, config: ExperimentConfig, pinned: PinnedConstants = None):
        self.config = config
        self.logger = logging.getLogger('ConeWalkOrchestrator')
        run = config.run
        self.walk_config = WalkConfig(master_seed=run.seed, block_size=run.block_size, workers=run.workers,
                                      reservoir_capacity=run.reservoir_capacity)
        self.raw_cone = config.build_cone()
        self.raw_dist = config.build_steps()
        self.logger.info(f"cone {self.raw_cone.spec_string}, steps {self.raw_dist.spec_string}")
        self.pinned = pinned or PinnedConstants()
        self._problem: Optional[Problem] = None
        self._constants: Optional[ConstantSet] = None
        self._kappa_diagnostics: Dict = {}
        self._verifier: Optional[TheoremVerifier] = None

    # ------------------------------------------------------------------ lazy setup

    @property
    def problem(self) -> Problem:
        if self._problem is None:
            scale = self.config.options('constants')['scale']
            self._problem = prepare_problem(self.raw_cone, self.raw_dist, self.config.whiten, scale)
            self.logger.info(f"whitened cone {self._problem.cone.spec_string}, "
                             f"p={self._problem.spectral.p:.6f}")
        return self._problem

    @property
    def constants(self) -> ConstantSet:
        if self._constants is None:
            options = self.config.options('constants')
            fit = KappaFitConfig(paths=options['kappa_paths'], scaled_grid=list(options['scaled_grid']),
                                 dt_fraction=options['dt_fraction'],
                                 continuity_correction=options['continuity_correction'],
                                 workers=self.config.run.workers)
            problem = self.problem
            estimate = kappa0(problem.cone, problem.spectral, fit, self.config.run.seed,
                              fit_points=options['fit_points'], force_fit=options['force_fit'])
            self._kappa_diagnostics = estimate.diagnostics
            self._constants = compute_constants(problem.cone, problem.spectral, fit, self.config.run.seed, estimate)
        return self._constants

    def settings(self) -> VerifierSettings:
        h = self.config.options('harmonic')
        harmonic = HarmonicConfig(horizons=list(h['horizons']), paths=h['paths'],
                                  cache_resolution=h['cache_resolution'], use_cache=h['use_cache'],
                                  outer_paths=h['outer_paths'], inner_paths=h['inner_paths'],
                                  inner_horizon=h['inner_horizon'])
        return VerifierSettings(paths=self.config.run.paths, tolerances=self.config.tolerances, pinned=self.pinned,
                                harmonic=harmonic,
                                aperiodicity_resolution=self.config.options('aperiodicity')['resolution'],
                                aperiodicity_window=self.config.options('aperiodicity')['vector_window'])

    @property
    def verifier(self) -> TheoremVerifier:
        if self._verifier is None:
            self._verifier = TheoremVerifier(self.problem, self.constants, self.settings(), self.walk_config)
        return self._verifier

    # ------------------------------------------------------------------ experiments

    def run_experiment(self, name: str) -> List[VerifierReport]:
        handler = {
            'constants': self.constants_report,
            'tail': self.tail_reports,
            'harmonic': self.harmonic_reports,
            'weak-limit': self.weak_limit_reports,
            'llt': self.llt_reports,
            'return': self.return_reports,
            'duality': self.duality_reports,
            'bounds': self.bounds_reports,
            'aperiodicity': self.aperiodicity_report,
            'cmu-probe': self.cmu_probe_report,
        }.get(name)
        if handler is None:
            raise ConfigError(f"unknown experiment '{name}'", "run.experiments")
        self.logger.info(f"running {name}")
        reports = handler()
        for report in reports:
            self.logger.info(f"{report.name}: {report.verdict}")
        return reports

    def constants_report(self) -> List[VerifierReport]:
        c = self.constants
        identity = c.H0 * c.u_integral
        checks = {'normalization': "pass" if abs(identity - 1.0) <= 1e-10 else "fail",
                  'kappa0': "pass" if c.kappa0_status == "ok" else "fail"}
        rows = [{'constant': name, 'value': value, 'stderr': se} for name, value, se in (
            ('H0', c.H0, 0.0), ('kappa0', c.kappa0, c.kappa0_stderr), ('kappa1', c.kappa1, c.kappa1_stderr),
            ('u_integral', c.u_integral, 0.0), ('u2_integral', c.u2_integral, 0.0), ('p', c.p, 0.0),
            ('lambda1', c.lambda1, 0.0))]
        details = {'constants': c.to_dict(), 'spectral': self.problem.spectral.summary(),
                   'kappa0_fit': self._kappa_diagnostics}
        return [VerifierReport('constants', 1.0, identity, 0.0, identity, 0.0, 1e-10, worst_verdict(list(checks.values())),
                               {'seed': self.config.run.seed}, checks, details, rows, [])]

    def tail_reports(self) -> List[VerifierReport]:
        o = self.config.require('tail', 'x')
        return [self.verifier.verify_tail(o['x'], o['horizons'], o['paths'])]

    def harmonic_reports(self) -> List[VerifierReport]:
        o = self.config.require('harmonic', 'points')
        return [self.verifier.verify_harmonic(x, o['shift']) for x in o['points']]

    def weak_limit_reports(self) -> List[VerifierReport]:
        o = self.config.require('weak-limit', 'x')
        bins = self.verifier.default_bins(o['bin_width'], o['reach'])
        reports = [self.verifier.verify_weak_limit(o['x'], o['horizon'], o['paths'], bins)]
        if o['trend_horizons']:
            reports.append(self.verifier.weak_limit_trend(o['x'], o['trend_horizons'], o['paths'], bins))
        return reports

    def llt_reports(self) -> List[VerifierReport]:
        o = self.config.require('llt', 'x', 'centers')
        reports = [self.verifier.verify_stone_llt(o['x'], o['horizons'], o['centers'], o['delta'], o['paths'])]
        if o['grid']:
            reports.append(self.verifier.llt_uniformity(o['grid'], o['horizons'][-1], o['centers'], o['delta'],
                                                        o['paths']))
        return reports

    def return_reports(self) -> List[VerifierReport]:
        o = self.config.require('return', 'x', 'box_lower', 'box_upper')
        box = Box(o['box_lower'], o['box_upper'])
        return [self.verifier.verify_return_prob(o['x'], box, o['horizons'], o['paths'])]

    def duality_reports(self) -> List[VerifierReport]:
        o = self.config.require('duality', 'pairs')
        return [self.verifier.verify_duality(o['pairs'], o['delta'], o['delta_tilde'], o['horizon'], o['paths'],
                                             o['z'])]

    def bounds_reports(self) -> List[VerifierReport]:
        o = self.config.require('bounds', 'x', 'offsets')
        return [self.verifier.check_gaussian_bounds(o['x'], o['offsets'], o['delta'], o['horizons'],
                                                    o['distances'], o['paths'])]

    def aperiodicity_report(self) -> List[VerifierReport]:
        """Scan in the raw frame; verdict pass whenever the scan is conclusive"""
        o = self.config.options('aperiodicity')
        verdict = aperiodicity_verdict(self.raw_dist, o['resolution'], o['vector_window'])
        if verdict is None:
            details = {'status': 'not-finite', 'steps': self.raw_dist.spec_string}
            return [VerifierReport('aperiodicity', 0.0, 0.0, 0.0, math.nan, math.nan, 0.0, "inconclusive",
                                   {'seed': self.config.run.seed}, {'scan': "inconclusive"}, details, [], [])]
        outcome = "inconclusive" if verdict.status == "inconclusive" else "pass"
        structure = lattice_structure_of(self.raw_dist)
        details = {**verdict.to_dict(), 'lattice_basis': structure.lattice_basis.tolist(),
                   'vector_dim': structure.vector_dim}
        rows = [{'status': verdict.status, 'max_modulus': verdict.max_modulus, 'witness': verdict.witness,
                 'grid_points': verdict.grid_points}]
        return [VerifierReport('aperiodicity', 1.0, verdict.max_modulus, 0.0, math.nan, math.nan, 0.0, outcome,
                               {'seed': self.config.run.seed}, {'scan': outcome}, details, rows, [])]

    def cmu_probe_points(self, options: Dict) -> List[np.ndarray]:
        points = [np.asarray(p, dtype=float) for p in options['points']]
        if options['grid_lower'] is not None and options['grid_upper'] is not None:
            step = options['grid_step']
            lower, upper = np.asarray(options['grid_lower']), np.asarray(options['grid_upper'])
            axes = [np.arange(lo, hi + step / 2, step) for lo, hi in zip(lower, upper)]
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lower))
            points += [p for p in np.round(grid, 12) if self.raw_cone.contains(p)]
        return points

    def cmu_probe_report(self) -> List[VerifierReport]:
        """Reachability of the deep interior, in the raw frame of the law"""
        o = self.config.options('cmu-probe')
        points = self.cmu_probe_points(o)
        if not points:
            raise ConfigError("[cmu-probe] needs points or a grid", "cmu-probe.points")
        rows = []
        for x in points:
            result = cmu_probe(self.raw_dist, self.raw_cone, x, o['gamma'], o['R'], o['n_max'])
            rows.append({'x': x.tolist(), 'status': result.status, 'hit_step': result.hit_step,
                         'witness': result.witness, 'nodes': result.nodes})
        statuses = [r['status'] for r in rows]
        verdict = "inconclusive" if "inconclusive" in statuses else "pass"
        details = {'gamma': o['gamma'], 'R': o['R'], 'n_max': o['n_max'],
                   'reachable': statuses.count('reachable'),
                   'not_reachable': statuses.count('not-reachable-within-horizon')}
        plot_rows = [{**{f'x_{i}': v for i, v in enumerate(r['x'])}, 'reachable': r['status'] == 'reachable'}
                     for r in rows]
        return [VerifierReport('cmu-probe', 0.0, 0.0, 0.0, math.nan, math.nan, 0.0, verdict,
                               {'seed': self.config.run.seed}, {'probe': verdict}, details, rows, plot_rows)]

    def manifest(self) -> RunManifest:
        problem = {'cone': self.raw_cone.spec_string, 'steps': self.raw_dist.spec_string}
        constants = {}
        if self._problem is not None:
            problem = self._problem.summary()
        if self._constants is not None:
            constants = self._constants.to_dict()
        return RunManifest(self.config.config_hash, self.config.run.seed, TOOL_VERSION,
                           config_path=Path(self.config.source_path).name if self.config.source_path else "",
                           problem=problem, constants=constants)


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None, paths: Optional[int] = None,
                    workers: Optional[int] = None) -> ExperimentConfig:
    run = config.run
    if seed is not None:
        run = replace(run, seed=seed)
    if paths is not None:
        if paths < 1:
            raise ConfigError("--paths must be positive", "run.paths")
        run = replace(run, paths=paths)
    if workers is not None:
        if workers < 1:
            raise ConfigError("--workers must be positive", "run.workers")
        run = replace(run, workers=workers)
    return replace(config, run=run)


def run_directory(output_root: Path, config: ExperimentConfig, command: str) -> Path:
    stem = Path(config.source_path).stem if config.source_path else "experiment"
    return output_root / f"{stem}_{command}_{config.config_hash[:12]}_seed{config.run.seed}"


def run(config_path, command: str = 'all', output_root=None, seed: Optional[int] = None,
        paths: Optional[int] = None, workers: Optional[int] = None, app_config: Dict = None,
        register: bool = True) -> int:
    """Run one subcommand against a config file and return the exit code"""
    logger = logging.getLogger('ConeWalkOrchestrator')
    app_config = load_app_config() if app_config is None else app_config
    root = Path(output_root) if output_root else resolve_output_root(None, app_config)
    config, out_dir, reports, code = None, None, [], EXIT_ERROR
    try:
        if command not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand '{command}'")
        config = apply_overrides(load_experiment_config(config_path), seed, paths, workers)
        experiments = list(config.run.experiments) if command == 'all' else [command]
        if command == 'all' and not experiments:
            experiments = [s for s in VERIFIER_SECTIONS if s in config.sections]
        if not experiments:
            raise ConfigError("no experiments configured", "run.experiments")

        orchestrator = ConeWalkOrchestrator(config, load_pinned_constants())
        for name in experiments:
            reports.extend(orchestrator.run_experiment(name))

        out_dir = run_directory(root, config, command)
        manifest = orchestrator.manifest()
        code = exit_code_for([r.verdict for r in reports])
        manifest.exit_code = code
        ReportWriter(out_dir).write_all(reports, manifest)
        logger.info(f"results written to {out_dir} (exit code {code})")
    except ConeWalkError as e:
        logger.error(f"{type(e).__name__}: {e}")
        code = EXIT_ERROR

    if register:
        try:
            RunRegistry(root).record_run(command, str(config_path), config.config_hash if config else None,
                                         config.run.seed if config else None, out_dir or root, code, reports,
                                         TOOL_VERSION)
        except Exception as e:
            logger.warning(f"run registry not updated: {e}")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conewalk",
                                     description="Monte Carlo verification of limit theorems for walks in cones")
    parser.add_argument('command', choices=SUBCOMMANDS, help='Experiment to run')
    parser.add_argument('--config', required=True, help='Experiment config (.cfg)')
    parser.add_argument('--seed', type=int, help='Override the master seed')
    parser.add_argument('--out', help='Output root directory')
    parser.add_argument('--paths', type=int, help='Override the default path count')
    parser.add_argument('--workers', type=int, help='Worker threads')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--quiet', action='store_true', help='Nothing on stdout; results and logs go to files only')
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    app_config = load_app_config()
    setup_logging(Path(app_config.get('log_dir', 'logs')), args.verbose, args.quiet)
    output_root = resolve_output_root(args.out, app_config)

    if not args.quiet:
        print(f"🔬 conewalk {args.command} ({args.config})")
    code = run(args.config, args.command, output_root, args.seed, args.paths, args.workers, app_config)
    labels = {EXIT_PASS: "✅ all checks passed", EXIT_FAIL: "❌ at least one check failed",
              EXIT_INCONCLUSIVE: "⚠️  inconclusive (no failures)", EXIT_ERROR: "💥 configuration or runtime error"}
    if not args.quiet:
        print(f"{labels[code]} (exit {code}); results under {output_root}")
    return code


if __name__ == "__main__":
    sys.exit(main())
