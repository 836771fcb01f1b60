import pathlib

import pytest

from cocyclic.config import (
    ExperimentConfig,
    Tolerances,
    config_from_mapping,
    load_experiment,
    parse_tol_overrides,
)
from cocyclic.errors import ConfigError

CONFIGS = pathlib.Path(__file__).parents[1] / "configs"


def test_defaults_are_valid():
    config = ExperimentConfig().validate()
    assert config.q == 4.0
    assert config.tolerances.gram == 1e-8


@pytest.mark.parametrize(
    "changes",
    [
        {"q": 3.0},
        {"t_list": ()},
        {"t_list": (-0.5,)},
        {"p_list": (0.0,)},
        {"N_list": (256, 128)},
        {"N_list": (128, 128)},
        {"N_list": (0, 128)},
        {"N_list": ()},
        {"K": 4},
        {"nodes": 2},
        {"jobs": 0},
        {"fmt": "xml"},
        {"measures": ()},
    ],
)
def test_validation_errors(changes):
    with pytest.raises(ConfigError):
        ExperimentConfig().update(**changes).validate()


def test_update_ignores_none():
    config = ExperimentConfig().update(q=5.0, K=None)
    assert config.q == 5.0
    assert config.K == ExperimentConfig().K


def test_tolerance_overrides():
    assert parse_tol_overrides("gram=1e-7, cocycle=1e-3") == {
        "gram": 1e-7,
        "cocycle": 1e-3,
    }
    assert parse_tol_overrides("") == {}
    tol = Tolerances().replace({"gram": 1e-7})
    assert tol.gram == 1e-7
    assert tol.cocycle == Tolerances().cocycle
    with pytest.raises(ConfigError):
        Tolerances().replace({"nonsense": 1.0})
    with pytest.raises(ConfigError):
        parse_tol_overrides("gram")
    with pytest.raises(ConfigError):
        parse_tol_overrides("gram=small")


def test_config_from_mapping_top_level():
    config = config_from_mapping(
        {"measures": "three_atom", "N_list": [64, 128], "tolerances": {"defect": 1e-3}}
    )
    assert config.measures == ("three_atom",)
    assert config.N_list == (64, 128)
    assert config.tolerances.defect == 1e-3
    with pytest.raises(ConfigError):
        config_from_mapping({"unknown": 1})


def test_load_experiment(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(
        '[experiment]\nmeasures = ["delta_minus_one"]\nq = 5\nt_list = [0.5]\n'
        "N_list = [32, 64]\n\n[tolerances]\ncocycle = 1e-3\n"
    )
    config = load_experiment(path).validate()
    assert config.q == 5.0
    assert config.t_list == (0.5,)
    assert config.N_list == (32, 64)
    assert config.tolerances.cocycle == 1e-3


def test_load_experiment_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment\nq = ")
    with pytest.raises(ConfigError):
        load_experiment(bad)
    with pytest.raises(OSError):
        load_experiment(tmp_path / "missing.toml")


def test_shipped_experiment_file():
    config = load_experiment(CONFIGS / "experiment.toml").validate()
    assert len(config.measures) == 3
    assert config.N_list == (128, 256, 512)
    assert config.fmt == "csv"
