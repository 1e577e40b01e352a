#!/usr/bin/env python3
"""
Tests for the experiment config grammar, schema checks and config hashing
"""
import math

import pytest

from core.exceptions import ConfigError
from core.experiment_config import (eval_number, load_experiment_config, parse_cone, parse_config_text,
                                    parse_steps, parse_value)
from scripts.geometry.cone_geometry import HalfLine, LinearImage, Orthant, Wedge2D
from scripts.steps.step_distributions import FiniteAtoms, ProductOf1D, StandardGaussian

MINIMAL = """\
[run]
seed = 7
paths = 5000
workers = 2
experiments = tail

[cone]
cone = orthant(2)

[steps]
steps = gaussian(2)

[tail]
x = (1, 1)
horizons = 8, 16, 32, 64
"""


def test_eval_number():
    assert eval_number("2*pi/3") == pytest.approx(2 * math.pi / 3)
    assert eval_number("1/16") == pytest.approx(0.0625)
    assert eval_number("−1.5") == -1.5
    assert eval_number("sqrt(2) * cos(0)") == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        eval_number("__import__('os')")
    with pytest.raises(ValueError):
        eval_number("1 +")


def test_parse_cone():
    assert parse_cone("halfline") == HalfLine()
    assert parse_cone("orthant(3)") == Orthant(3)
    wedge = parse_cone("wedge(3*pi/2, pi/4)")
    assert isinstance(wedge, Wedge2D)
    assert wedge.start_angle == pytest.approx(math.pi / 4)
    image = parse_cone("linear(1, 1; 0, 1; orthant(2))")
    assert isinstance(image, LinearImage)
    with pytest.raises(ValueError):
        parse_cone("cylinder(2)")


def test_parse_steps():
    assert isinstance(parse_steps("gaussian(2)"), StandardGaussian)
    atoms = parse_steps("atoms[((2, −1), 1/4); ((0, −1), 1/4); ((−1, 1), 1/2)]")
    assert isinstance(atoms, FiniteAtoms)
    assert atoms.points.shape == (3, 2)
    product = parse_steps("product[gaussian(1); atoms[(-1, 0.5); (1, 0.5)]]")
    assert isinstance(product, ProductOf1D)
    assert product.dim == 2
    with pytest.raises(ValueError):
        parse_steps("atoms[((1, 0), 0.5); (1, 0.5)]")


def test_parse_value_kinds():
    assert parse_value("ints", "64, 128") == (64, 128)
    assert parse_value("int", "12345678901234567890") == 12345678901234567890
    assert parse_value("bool", "Yes") is True
    assert parse_value("vectors", "(1, 2); (3, 4)") == ((1.0, 2.0), (3.0, 4.0))
    assert parse_value("pairs", "(1, 1) -> (2, 2); (1, 2) -> (2, 1)") == (
        ((1.0, 1.0), (2.0, 2.0)), ((1.0, 2.0), (2.0, 1.0)))
    with pytest.raises(ValueError):
        parse_value("int", "2.5")


def test_minimal_config_defaults():
    config = parse_config_text(MINIMAL)
    assert config.run.seed == 7
    assert config.run.experiments == ("tail",)
    tail = config.options("tail")
    assert tail['x'] == (1.0, 1.0)
    assert tail['paths'] is None
    assert config.options("harmonic")['inner_horizon'] == 128
    assert config.whiten
    with pytest.raises(ConfigError):
        config.require("tail", "paths")


def test_canonical_text_round_trip():
    config = parse_config_text(MINIMAL)
    again = parse_config_text(config.to_cfg_text())
    assert again == config
    assert again.config_hash == config.config_hash


def test_hash_ignores_workers_only():
    base = parse_config_text(MINIMAL)
    more_workers = parse_config_text(MINIMAL.replace("workers = 2", "workers = 16"))
    other_seed = parse_config_text(MINIMAL.replace("seed = 7", "seed = 8"))
    assert base.config_hash == more_workers.config_hash
    assert base.config_hash != other_seed.config_hash


def test_unknown_key_reports_line():
    text = MINIMAL.replace("horizons = 8, 16, 32, 64", "horizons = 8, 16, 32, 64\nhorizon = 9")
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.field == "tail.horizon"
    assert info.value.line == 16


def test_bad_value_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text(MINIMAL.replace("paths = 5000", "paths = many"))
    assert info.value.field == "run.paths"
    assert info.value.line == 3


def test_schema_violations():
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL.replace("[tail]", "[tails]"))
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL.replace("experiments = tail", "experiments = tail, magic"))
    with pytest.raises(ConfigError):
        parse_config_text("[run]\nschema_version = 2\n" + MINIMAL.split("\n", 1)[1])
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL.replace("gaussian(2)", "gaussian(3)"))
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL.replace("[cone]\ncone = orthant(2)\n", ""))


def test_lattice_declaration_checked():
    text = MINIMAL.replace("gaussian(2)", "atoms[((0.5, 0), 0.5); ((-0.5, 0), 0.5)]") \
        .replace("[tail]", "lattice_basis = (1, 0); (0, 1)\n\n[tail]")
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.field == "steps.lattice_basis"


def test_declared_lattice_attached():
    text = MINIMAL.replace("gaussian(2)", "atoms[((1, 0), 0.25); ((-1, 0), 0.25); ((0, 1), 0.25); ((0, -1), 0.25)]") \
        .replace("[tail]", "lattice_basis = (1, 0); (0, 1)\n\n[tail]")
    dist = parse_config_text(text).build_steps()
    assert dist.lattice is not None
    assert dist.lattice.rank == 2


def test_shipped_experiments_parse(experiments_dir):
    paths = sorted(experiments_dir.glob("*.cfg"))
    assert len(paths) >= 5
    for path in paths:
        config = load_experiment_config(path)
        assert config.run.experiments
        assert config.build_cone().dim == config.build_steps().dim


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "absent.cfg")
