from pathlib import Path

import pytest
import yaml

from droopsim.config import (
    Config,
    dump_yaml,
    load_config,
    parse_override,
    to_dict,
    with_kd,
)
from droopsim.errors import ConfigError

DEFAULT_YAML = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"


def test_no_input_gives_defaults(monkeypatch):
    monkeypatch.delenv("DROOPSIM_CONFIG", raising=False)
    assert load_config() == Config()


def test_shipped_default_file_matches_builtin_defaults():
    assert load_config(DEFAULT_YAML) == Config()


def test_environment_variable_names_the_file(monkeypatch, tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("droop:\n  k_d: 42\n")
    monkeypatch.setenv("DROOPSIM_CONFIG", str(path))
    assert load_config().models.droop.k_d == 42.0


def test_partial_file_keeps_other_defaults():
    cfg = load_config(text="scenario:\n  t_end: 4\n")
    assert cfg.scenario.t_end == 4.0
    assert cfg.models == Config().models


def test_unknown_key_reports_line():
    text = "droop:\n  k_d: 60\n  gain: 3\n"
    with pytest.raises(ConfigError) as info:
        load_config(text=text)
    assert info.value.line == 3
    assert info.value.key == "droop.gain"
    assert str(info.value).startswith("line 3: droop.gain:")


def test_unknown_section_reports_line():
    with pytest.raises(ConfigError) as info:
        load_config(text="scenario:\n  t_end: 4\nturbine:\n  h: 1\n")
    assert info.value.line == 3 and info.value.key == "turbine"


@pytest.mark.parametrize("text, key", [
    ("droop:\n  k_d: fast\n", "droop.k_d"),
    ("pv:\n  n_p: 2.5\n", "pv.n_p"),
    ("output:\n  timeseries: 1\n", "output.timeseries"),
    ("sweep:\n  kd_grid: [0, a]\n", "sweep.kd_grid"),
    ("sweep:\n  jobs: 0\n", "sweep.jobs"),
])
def test_type_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        load_config(text=text)
    assert info.value.key == key
    assert info.value.line == 2


def test_invalid_value_names_the_key():
    with pytest.raises(ConfigError) as info:
        load_config(text="scenario:\n  load_final: -1\n")
    assert info.value.key == "scenario.load_final"
    assert info.value.line == 2


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        load_config(text="droop:\n  k_d: 60\n  t_a: [1, 2\n")
    assert info.value.line is not None


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_overrides_beat_the_file():
    cfg = load_config(text="droop:\n  k_d: 60\n", overrides=["droop.k_d=90", "output.timeseries=false"])
    assert cfg.models.droop.k_d == 90.0
    assert cfg.output.timeseries is False


@pytest.mark.parametrize("item", ["droop.k_d", "k_d=3", "droop.nope=1", "foo.k_d=1", "droop.k_d=x"])
def test_bad_overrides(item):
    with pytest.raises(ConfigError):
        load_config(overrides=[item])


def test_override_parses_lists():
    (_, key), (value, _) = parse_override("sweep.kd_grid=[10, 20]")
    assert key == "kd_grid" and value == (10.0, 20.0)


def test_dump_round_trips():
    cfg = load_config(overrides=["droop.k_d=75", "network.ac_inertia=0"])
    again = load_config(text=dump_yaml(cfg))
    assert again == cfg
    assert yaml.safe_load(dump_yaml(cfg)) == to_dict(cfg)


def test_with_kd_replaces_only_damping():
    cfg = with_kd(Config(), 33)
    assert cfg.models.droop.k_d == 33.0
    assert cfg.models.battery == Config().models.battery


def test_exponent_without_dot_is_a_number():
    cfg = load_config(text="scenario:\n  load_final: 3e6\nsweep:\n  kd_grid: [1e1, 6e1]\n",
                      overrides=["scenario.load_initial=2e6"])
    assert cfg.scenario.load_final == 3e6 and cfg.scenario.load_initial == 2e6
    assert cfg.sweep.kd_grid == (10.0, 60.0)
