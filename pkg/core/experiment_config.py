#!/usr/bin/env python3
"""
ConeWalk - Experiment Config
Sectioned key = value experiment files.

Features:
- configparser front end with line-numbered schema errors
- Cone grammar: halfline | halfspace(d) | orthant(d) | wedge(alpha[, start]) | linear(rows; base)
- Steps grammar: gaussian(d) | uniform_cube(d, side) | atoms[(x,w);...] | product[...] | linear(rows; base)
- Numeric fields accept pi, e, inf and sqrt(...) expressions
- Canonical serialization, so parse -> serialize -> parse is the identity
- SHA-256 config hash of the canonical text
"""
import ast
import configparser
import hashlib
import logging
import math
import operator
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from core.exceptions import ConeWalkError, ConfigError
from scripts.geometry.cone_geometry import Cone, HalfLine, HalfSpace, LinearImage as ConeImage, Orthant, Wedge2D
from scripts.steps.lattice_analysis import validate_lattice
from scripts.steps.step_distributions import (CenteredUniformCube, FiniteAtoms, LatticeStructure, LinearImage,
                                              ProductOf1D, StandardGaussian, StepDistribution)
from scripts.verification.theorem_verifiers import ToleranceConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

VERIFIER_SECTIONS = ['constants', 'tail', 'harmonic', 'weak-limit', 'llt', 'return', 'duality', 'bounds',
                     'aperiodicity', 'cmu-probe']

# (type, default); None means required when the section is run
SECTION_SCHEMAS: Dict[str, Dict[str, Tuple[str, Any]]] = {
    'constants': {
        'kappa_paths': ('int', 20_000),
        'scaled_grid': ('floats', (0.05, 0.1, 0.2, 0.3, 0.45, 0.6)),
        'dt_fraction': ('float', 1e-3),
        'continuity_correction': ('bool', True),
        'force_fit': ('bool', False),
        'fit_points': ('vectors', None),
        'scale': ('float', 1.0),
    },
    'tail': {
        'x': ('vector', None),
        'horizons': ('ints', (64, 128, 256, 512, 1024, 2048, 4096, 8192)),
        'paths': ('int', None),
    },
    'harmonic': {
        'points': ('vectors', None),
        'horizons': ('ints', (64, 128, 256, 512, 1024)),
        'paths': ('int', 100_000),
        'outer_paths': ('int', 200),
        'inner_paths': ('int', 2_000),
        'inner_horizon': ('int', 128),
        'shift': ('float', 1.0),
        'cache_resolution': ('float', 1e-2),
        'use_cache': ('bool', True),
    },
    'weak-limit': {
        'x': ('vector', None),
        'horizon': ('int', 4096),
        'trend_horizons': ('ints', ()),
        'bin_width': ('float', None),
        'reach': ('float', 4.0),
        'paths': ('int', None),
    },
    'llt': {
        'x': ('vector', None),
        'horizons': ('ints', (1024,)),
        'centers': ('vectors', None),
        'delta': ('float', 1.0),
        'grid': ('vectors', ()),
        'paths': ('int', None),
    },
    'return': {
        'x': ('vector', None),
        'box_lower': ('vector', None),
        'box_upper': ('vector', None),
        'horizons': ('ints', (100, 200, 400)),
        'paths': ('int', None),
    },
    'duality': {
        'pairs': ('pairs', None),
        'delta': ('float', 0.5),
        'delta_tilde': ('float', 1.0),
        'horizon': ('int', 64),
        'z': ('vector', None),
        'paths': ('int', None),
    },
    'bounds': {
        'x': ('vector', None),
        'offsets': ('vectors', None),
        'delta': ('float', 1.0),
        'horizons': ('ints', (64, 256, 1024)),
        'distances': ('floats', (1.0, 1.5, 2.0)),
        'paths': ('int', None),
    },
    'aperiodicity': {
        'resolution': ('int', 256),
        'vector_window': ('float', 2 * math.pi),
    },
    'cmu-probe': {
        'points': ('vectors', ()),
        'grid_lower': ('vector', None),
        'grid_upper': ('vector', None),
        'grid_step': ('float', 0.25),
        'gamma': ('float', 0.1),
        'R': ('float', 2.0),
        'n_max': ('int', 8),
    },
}

RUN_FIELDS = {
    'schema_version': ('int', SCHEMA_VERSION),
    'seed': ('int', 0),
    'paths': ('int', 100_000),
    'workers': ('int', 4),
    'block_size': ('int', 10_000),
    'reservoir_capacity': ('int', 100_000),
    'experiments': ('names', ()),
}

STEPS_FIELDS = {
    'steps': ('str', None),
    'lattice_basis': ('vectors', None),
    'vector_dim': ('int', None),
    'whiten': ('bool', True),
    'moment_order': ('float', None),
}

_BINARY = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_NAMES = {'pi': math.pi, 'e': math.e, 'inf': math.inf}
_FUNCS = {'sqrt': math.sqrt, 'cos': math.cos, 'sin': math.sin}


def eval_number(text: str) -> float:
    """Arithmetic over literals, pi, e, inf, sqrt, cos and sin; nothing else is evaluated"""
    text = text.strip().replace('−', '-')
    try:
        tree = ast.parse(text, mode='eval')
    except SyntaxError as e:
        raise ValueError(f"not a number: {text!r}") from e

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
            return _BINARY[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](walk(node.operand))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and len(node.args) == 1 and not node.keywords:
            return _FUNCS[node.func.id](walk(node.args[0]))
        raise ValueError(f"unsupported expression {text!r}")

    return float(walk(tree))


def split_top(text: str, sep: str) -> List[str]:
    """Split on sep outside parentheses and brackets"""
    parts, depth, current = [], 0, []
    for ch in text:
        if ch in '([':
            depth += 1
        elif ch in ')]':
            depth -= 1
            if depth < 0:
                raise ValueError(f"unbalanced brackets in {text!r}")
        if ch == sep and depth == 0:
            parts.append(''.join(current).strip())
            current = []
        else:
            current.append(ch)
    if depth != 0:
        raise ValueError(f"unbalanced brackets in {text!r}")
    parts.append(''.join(current).strip())
    return parts


def _strip_parens(text: str) -> str:
    """Drop one pair of parentheses enclosing the whole text"""
    text = text.strip()
    if not text.startswith("(") or not text.endswith(")"):
        return text
    depth = 0
    for i, ch in enumerate(text):
        depth += ch == "("
        depth -= ch == ")"
        if depth == 0:
            return text[1:-1].strip() if i == len(text) - 1 else text
    return text


def parse_vector(text: str) -> Tuple[float, ...]:
    body = _strip_parens(text)
    if not body:
        raise ValueError("empty vector")
    return tuple(eval_number(part) for part in split_top(body, ','))


def parse_vectors(text: str) -> Tuple[Tuple[float, ...], ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(parse_vector(part) for part in split_top(text, ';'))


def _matrix_rows(rows: List[str]) -> np.ndarray:
    return np.array([[eval_number(v) for v in split_top(row, ',')] for row in rows])


def _call(text: str, name: str, open_ch: str = '(', close_ch: str = ')') -> Optional[str]:
    """Argument text of name(...) or None"""
    text = text.strip()
    prefix = name + open_ch
    if text.startswith(prefix) and text.endswith(close_ch):
        return text[len(prefix):-1]
    return None


def parse_cone(text: str) -> Cone:
    text = text.strip().replace('−', '-')
    if text == 'halfline':
        return HalfLine()
    for name, cls in (('halfspace', HalfSpace), ('orthant', Orthant)):
        args = _call(text, name)
        if args is not None:
            return cls(int(eval_number(args)))
    args = _call(text, 'wedge')
    if args is not None:
        values = [eval_number(v) for v in split_top(args, ',')]
        if len(values) not in (1, 2):
            raise ValueError("wedge takes an opening angle and an optional start angle")
        return Wedge2D(*values)
    args = _call(text, 'linear')
    if args is not None:
        parts = split_top(args, ';')
        if len(parts) < 2:
            raise ValueError("linear needs matrix rows and a base cone")
        return ConeImage(_matrix_rows(parts[:-1]), parse_cone(parts[-1]))
    raise ValueError(f"unknown cone {text!r}")


def _parse_atom(item: str) -> Tuple[Tuple[float, ...], float]:
    inner = _call('atom' + item.strip(), 'atom')
    if inner is None:
        raise ValueError(f"atom {item!r} must be written (point, weight)")
    parts = split_top(inner, ',')
    if len(parts) < 2:
        raise ValueError(f"atom {item!r} must be written (point, weight)")
    return parse_vector(','.join(parts[:-1])), eval_number(parts[-1])


def parse_steps(text: str) -> StepDistribution:
    text = text.strip().replace('−', '-')
    args = _call(text, 'gaussian')
    if args is not None:
        return StandardGaussian(int(eval_number(args)))
    args = _call(text, 'uniform_cube')
    if args is not None:
        d, side = split_top(args, ',')
        return CenteredUniformCube(int(eval_number(d)), eval_number(side))
    args = _call(text, 'atoms', '[', ']')
    if args is not None:
        atoms = [_parse_atom(item) for item in split_top(args, ';') if item]
        dims = {len(p) for p, _ in atoms}
        if len(dims) != 1:
            raise ValueError("atoms have mixed dimensions")
        return FiniteAtoms(np.array([p for p, _ in atoms]), np.array([w for _, w in atoms]))
    args = _call(text, 'product', '[', ']')
    if args is not None:
        return ProductOf1D([parse_steps(part) for part in split_top(args, ';')])
    args = _call(text, 'linear')
    if args is not None:
        parts = split_top(args, ';')
        if len(parts) < 2:
            raise ValueError("linear needs matrix rows and a base law")
        return LinearImage(_matrix_rows(parts[:-1]), parse_steps(parts[-1]))
    raise ValueError(f"unknown step law {text!r}")


def parse_value(kind: str, text: str):
    text = text.strip()
    if kind == 'int':
        if re.fullmatch(r'[+-]?\d+', text):
            return int(text)
        value = eval_number(text)
        if value != int(value):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if kind == 'float':
        return eval_number(text)
    if kind == 'bool':
        lowered = text.lower()
        if lowered in ('true', 'yes', '1', 'on'):
            return True
        if lowered in ('false', 'no', '0', 'off'):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if kind == 'str':
        return text
    if kind == 'ints':
        return tuple(parse_value('int', v) for v in split_top(text, ',') if v) if text else ()
    if kind == 'floats':
        return tuple(eval_number(v) for v in split_top(text, ',') if v) if text else ()
    if kind == 'names':
        return tuple(v.strip() for v in text.split(',') if v.strip())
    if kind == 'vector':
        return parse_vector(text)
    if kind == 'vectors':
        return parse_vectors(text)
    if kind == 'pairs':
        pairs = []
        for item in (split_top(text, ';') if text else []):
            pieces = item.split('->')
            if len(pieces) != 2:
                raise ValueError(f"pair {item!r} must be written x -> y")
            pairs.append((parse_vector(pieces[0]), parse_vector(pieces[1])))
        return tuple(pairs)
    raise ValueError(f"unknown field type {kind}")


def _fmt_float(v: float) -> str:
    if math.isinf(v):
        return 'inf' if v > 0 else '-inf'
    return repr(float(v))


def _fmt_vector(v) -> str:
    return '(' + ', '.join(_fmt_float(c) for c in v) + ')'


def format_value(kind: str, value) -> str:
    if kind == 'int':
        return str(int(value))
    if kind == 'float':
        return _fmt_float(value)
    if kind == 'bool':
        return 'true' if value else 'false'
    if kind == 'str':
        return str(value)
    if kind == 'ints':
        return ', '.join(str(int(v)) for v in value)
    if kind == 'floats':
        return ', '.join(_fmt_float(v) for v in value)
    if kind == 'names':
        return ', '.join(value)
    if kind == 'vector':
        return _fmt_vector(value)
    if kind == 'vectors':
        return '; '.join(_fmt_vector(v) for v in value)
    if kind == 'pairs':
        return '; '.join(f"{_fmt_vector(a)} -> {_fmt_vector(b)}" for a, b in value)
    raise ValueError(f"unknown field type {kind}")


@dataclass
class RunSection:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    paths: int = 100_000
    workers: int = 4
    block_size: int = 10_000
    reservoir_capacity: int = 100_000
    experiments: Tuple[str, ...] = ()


@dataclass
class ExperimentConfig:
    """Parsed experiment; cone and steps are kept as canonical grammar strings"""
    run: RunSection = field(default_factory=RunSection)
    cone: str = ""
    steps: str = ""
    steps_options: Dict[str, Any] = field(default_factory=dict)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    source_path: Optional[str] = field(default=None, compare=False)

    def build_cone(self) -> Cone:
        return parse_cone(self.cone)

    def build_steps(self) -> StepDistribution:
        dist = parse_steps(self.steps)
        options = self.steps_options
        if options.get('moment_order') is not None:
            dist.moment_order = options['moment_order']
        basis = options.get('lattice_basis')
        if basis is not None or options.get('vector_dim') is not None:
            rows = np.array(basis, dtype=float) if basis else np.zeros((0, dist.dim))
            vector_dim = options.get('vector_dim')
            if vector_dim is None:
                vector_dim = dist.dim - rows.shape[0]
            structure = LatticeStructure(vector_dim, rows.reshape(-1, dist.dim))
            if dist.as_atoms() is not None and not validate_lattice(dist, structure):
                raise ConfigError("atoms do not lie in the declared lattice", "steps.lattice_basis")
            dist.lattice = structure
        return dist

    @property
    def whiten(self) -> bool:
        return self.steps_options.get('whiten', True)

    def options(self, section: str) -> Dict[str, Any]:
        """Section values merged over schema defaults"""
        if section not in SECTION_SCHEMAS:
            raise ConfigError(f"unknown section [{section}]", section)
        merged = {key: default for key, (_, default) in SECTION_SCHEMAS[section].items()}
        merged.update(self.sections.get(section, {}))
        return merged

    def require(self, section: str, *keys: str) -> Dict[str, Any]:
        values = self.options(section)
        for key in keys:
            if values.get(key) is None:
                raise ConfigError(f"[{section}] needs '{key}'", f"{section}.{key}")
        return values

    def to_cfg_text(self, include_workers: bool = True) -> str:
        lines = ["[run]"]
        for name, (kind, _) in RUN_FIELDS.items():
            if name == "workers" and not include_workers:
                continue
            lines.append(f"{name} = {format_value(kind, getattr(self.run, name))}")
        lines += ["", "[cone]", f"cone = {self.cone}", "", "[steps]", f"steps = {self.steps}"]
        for name, (kind, _) in STEPS_FIELDS.items():
            if name != 'steps' and name in self.steps_options:
                lines.append(f"{name} = {format_value(kind, self.steps_options[name])}")
        lines += ["", "[tolerances]"]
        for f in fields(ToleranceConfig):
            lines.append(f"{f.name} = {format_value('float', getattr(self.tolerances, f.name))}")
        for section in VERIFIER_SECTIONS:
            if section not in self.sections:
                continue
            lines += ["", f"[{section}]"]
            schema = SECTION_SCHEMAS[section]
            for key in sorted(self.sections[section]):
                lines.append(f"{key} = {format_value(schema[key][0], self.sections[section][key])}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        """Hash of the canonical text; the worker count does not change results and is left out"""
        return hashlib.sha256(self.to_cfg_text(include_workers=False).encode('utf-8')).hexdigest()

    def save(self, path: Path):
        Path(path).write_text(self.to_cfg_text(), encoding='utf-8')


class _LineIndex:
    """Line numbers of section headers and keys in the raw text"""

    def __init__(self, text: str):
        self.sections: Dict[str, int] = {}
        self.keys: Dict[Tuple[str, str], int] = {}
        current = None
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            header = re.match(r'^\[([^\]]+)\]$', line)
            if header:
                current = header.group(1).strip()
                self.sections.setdefault(current, number)
                continue
            if current and line and not line.startswith(('#', ';')):
                key = re.split(r'[=:]', line, maxsplit=1)[0].strip()
                self.keys.setdefault((current, key), number)

    def line(self, section: str, key: Optional[str] = None) -> Optional[int]:
        if key is not None and (section, key) in self.keys:
            return self.keys[(section, key)]
        return self.sections.get(section)


def _typed(kind: str, raw: str, section: str, key: str, index: _LineIndex):
    try:
        return parse_value(kind, raw)
    except (ValueError, ZeroDivisionError, OverflowError) as e:
        raise ConfigError(f"bad value {raw!r}: {e}", f"{section}.{key}", index.line(section, key)) from e


def parse_config_text(text: str, source: Optional[str] = None) -> ExperimentConfig:
    text = text.replace('−', '-')
    index = _LineIndex(text)
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=('#',), inline_comment_prefixes=('#',))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or '<config>')
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}", None, getattr(e, 'lineno', None)) from e

    known = {'run', 'cone', 'steps', 'tolerances', *VERIFIER_SECTIONS}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]", section, index.line(section))

    def check_keys(section: str, allowed):
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' in [{section}]", f"{section}.{key}",
                                  index.line(section, key))

    run = RunSection()
    if parser.has_section('run'):
        check_keys('run', RUN_FIELDS)
        for key, raw in parser['run'].items():
            setattr(run, key, _typed(RUN_FIELDS[key][0], raw, 'run', key, index))
    if run.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {run.schema_version}", "run.schema_version",
                          index.line('run', 'schema_version'))
    for name in run.experiments:
        if name not in VERIFIER_SECTIONS:
            raise ConfigError(f"unknown experiment '{name}'", "run.experiments", index.line('run', 'experiments'))
    for key in ('paths', 'workers', 'block_size'):
        if getattr(run, key) < 1:
            raise ConfigError(f"{key} must be positive", f"run.{key}", index.line('run', key))

    if not parser.has_section('cone') or 'cone' not in parser['cone']:
        raise ConfigError("missing [cone] cone = ...", "cone.cone", index.line('cone'))
    check_keys('cone', {'cone'})
    try:
        cone = parse_cone(parser['cone']['cone']).spec_string
    except (ValueError, ConeWalkError) as e:
        raise ConfigError(f"bad cone: {e}", "cone.cone", index.line('cone', 'cone')) from e

    if not parser.has_section('steps') or 'steps' not in parser['steps']:
        raise ConfigError("missing [steps] steps = ...", "steps.steps", index.line('steps'))
    check_keys('steps', STEPS_FIELDS)
    try:
        dist = parse_steps(parser['steps']['steps'])
    except (ValueError, ConeWalkError) as e:
        raise ConfigError(f"bad step law: {e}", "steps.steps", index.line('steps', 'steps')) from e
    steps_options = {key: _typed(STEPS_FIELDS[key][0], raw, 'steps', key, index)
                     for key, raw in parser['steps'].items() if key != 'steps'}

    tolerances = ToleranceConfig()
    if parser.has_section('tolerances'):
        check_keys('tolerances', {f.name for f in fields(ToleranceConfig)})
        for key, raw in parser['tolerances'].items():
            value = _typed('float', raw, 'tolerances', key, index)
            if not value > 0:
                raise ConfigError("tolerances must be positive", f"tolerances.{key}", index.line('tolerances', key))
            setattr(tolerances, key, value)

    sections = {}
    for section in VERIFIER_SECTIONS:
        if not parser.has_section(section):
            continue
        schema = SECTION_SCHEMAS[section]
        check_keys(section, schema)
        sections[section] = {key: _typed(schema[key][0], raw, section, key, index)
                             for key, raw in parser[section].items()}

    config = ExperimentConfig(run, cone, dist.spec_string, steps_options, tolerances, sections, source)
    if cone and parse_cone(cone).dim != dist.dim:
        raise ConfigError(f"cone dimension {parse_cone(cone).dim} differs from step dimension {dist.dim}",
                          "steps.steps", index.line('steps', 'steps'))
    try:
        config.build_steps()
    except ConfigError as e:
        raise ConfigError(e.message, e.field, index.line('steps', 'lattice_basis')) from e
    except ConeWalkError as e:
        raise ConfigError(f"bad lattice declaration: {e}", "steps.lattice_basis",
                          index.line('steps', 'lattice_basis')) from e
    return config


def load_experiment_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    config = parse_config_text(path.read_text(encoding='utf-8'), str(path))
    logger.info(f"loaded {path} (hash {config.config_hash[:12]}, seed {config.run.seed})")
    return config
