"""
配置加载与校验测试
"""

from fractions import Fraction

import pytest
import yaml
from pydantic import ValidationError

from config import ConfigError, ConfigManager, RunConfig
from core.lattice import Family

ENV_KEYS = ("LINDSTEDT_CONFIG", "LINDSTEDT_OUT", "LINDSTEDT_JOBS", "LINDSTEDT_SEED", "LINDSTEDT_LOG_LEVEL")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_defaults():
    config = RunConfig()
    assert config.command == "verify-all"
    assert config.K_max == 8
    assert config.K_tree == 6
    spec = config.to_spec()
    assert spec.family == Family.NLS
    assert spec.dim == 2
    assert spec.mu == Fraction(3, 10)
    assert config.scheme().gamma_bar == 0.2
    snapshot = config.snapshot()
    assert snapshot["equation"]["family"] == "NLS"
    assert snapshot["output"]["formats"] == ["json-lines"]
    assert config.bifurcation.conventions == ["displayed"]


@pytest.mark.parametrize("data", [
    {"constants": {"gamma": 0.3, "gamma_bar": 0.2}},
    {"constants": {"gamma_bar": 0.3}},
    {"constants": {"alpha": 0.2, "beta": 0.25}},
    {"command": "integrate"},
    {"equation": {"mu": "three tenths"}},
    {"equation": {"dim": 2, "coefficients": [{"r": 2, "s": 1, "m": [1]}]}},
    {"equation": {"coefficients": [{"r": 1, "s": 0}]}},
    {"window": {"eps0": 1e-3, "eps": 1e-2}},
    {"solver": {"K_max": 3, "K_tree": 5}},
    {"solver": {"provider": "oracle"}},
    {"solver": {"eps_sweep": [0.5]}},
    {"output": {"formats": ["xlsx"]}},
    {"output": {"log_level": "chatty"}},
    {"bifurcation": {"conventions": []}},
    {"bifurcation": {"conventions": ["mirrored"]}},
    {"unknown": 1},
])
def test_invalid_configs(data):
    with pytest.raises(ValidationError):
        RunConfig(**data)


def test_coefficients_from_config():
    config = RunConfig(equation={"dim": 1, "coefficients": [{"r": 3, "s": 0, "re": 2.0}]})
    coefficients = config.to_spec().coefficients
    assert len(coefficients) == 1
    assert coefficients[0].m == (0,)
    assert complex(coefficients[0].value) == 2.0
    nlw = RunConfig(equation={"family": "NLW", "dim": 1})
    assert nlw.to_spec().coefficients[0].r == 3


def test_load_from_yaml(tmp_path):
    path = write_yaml(tmp_path / "run.yaml", {
        "command": "classify",
        "equation": {"dim": 1, "mu": "1/4"},
        "shell": {"radius": 3},
    })
    config = ConfigManager(path).load()
    assert config.command == "classify"
    assert config.to_spec().mu == Fraction(1, 4)
    assert config.shell.radius == 3


def test_yaml_must_be_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- classify\n- solve\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        ConfigManager(str(path)).load()


def test_yaml_field_errors_carry_location(tmp_path):
    path = write_yaml(tmp_path / "bad.yaml", {"constants": {"gamma": 0.5, "gamma_bar": 0.2}})
    with pytest.raises(ValidationError) as exc:
        ConfigManager(path).load()
    assert exc.value.errors()[0]["loc"][0] == "constants"


def test_missing_file_falls_back_to_defaults(tmp_path):
    config = ConfigManager(str(tmp_path / "absent.yaml")).load()
    assert config == RunConfig()


def test_environment_overrides(monkeypatch, tmp_path):
    path = write_yaml(tmp_path / "env.yaml", {"command": "measure"})
    monkeypatch.setenv("LINDSTEDT_CONFIG", path)
    monkeypatch.setenv("LINDSTEDT_JOBS", "4")
    monkeypatch.setenv("LINDSTEDT_SEED", "17")
    monkeypatch.setenv("LINDSTEDT_LOG_LEVEL", "debug")
    monkeypatch.setenv("LINDSTEDT_OUT", str(tmp_path / "runs"))
    manager = ConfigManager()
    config = manager.load()
    assert config.command == "measure"
    assert config.output.jobs == 4
    assert config.output.seed == 17
    assert config.output.log_level == "DEBUG"
    assert config.output.dir == str(tmp_path / "runs")
    assert manager.get_config() is config


def test_bad_environment_value_is_rejected(monkeypatch):
    monkeypatch.setenv("LINDSTEDT_JOBS", "0")
    with pytest.raises(ValidationError):
        ConfigManager().load()
