"""YAML configuration: schema, defaults, ``--set`` overrides and validation.

Every section and key is optional. Unknown keys are rejected, and any
violated parameter invariant is reported with its dotted key and, when it
came from the file, its line number.
"""
from dataclasses import dataclass, field, fields, replace
import os
import re

import yaml

from .battery import BatteryParams
from .droop import DroopParams, VscControlParams
from .engine import Models, NetworkParams, PvPlant, Scenario
from .errors import ConfigError, InvalidParams
from .metrics import DEFAULT_ROCOF_WINDOW, DEFAULT_SETTLE_BAND
from .pv import PvArrayParams
from .sizing import SizingConstraints, _check_grid
from ._validation import check_positive, check_positive_int

DEFAULT_KD_GRID = (0.0, 60.0, 90.0, 140.0)

_PV_PLANT_KEYS = ("ideality", "mppt_step", "mppt_period", "mppt_enabled")


@dataclass(frozen=True)
class SweepSettings:
    kd_grid: tuple = DEFAULT_KD_GRID
    jobs: int | None = None

    def __post_init__(self):
        _check_grid(self.kd_grid)
        if self.jobs is not None:
            check_positive_int("jobs", self.jobs)


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "out"
    timeseries: bool = True


@dataclass(frozen=True)
class MetricSettings:
    rocof_window: float = DEFAULT_ROCOF_WINDOW
    settle_band: float = DEFAULT_SETTLE_BAND

    def __post_init__(self):
        check_positive("rocof_window", self.rocof_window)
        check_positive("settle_band", self.settle_band)


@dataclass(frozen=True)
class Config:
    models: Models = field(default_factory=Models)
    scenario: Scenario = field(default_factory=Scenario)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    constraints: SizingConstraints = field(default_factory=SizingConstraints)
    output: OutputSettings = field(default_factory=OutputSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)


def _defaults_of(cls):
    return {f.name: f.default for f in fields(cls)}


def _schema():
    pv = _defaults_of(PvArrayParams)
    pv.update({k: v for k, v in _defaults_of(PvPlant).items() if k in _PV_PLANT_KEYS})
    return {
        "pv": pv,
        "battery": _defaults_of(BatteryParams),
        "droop": _defaults_of(DroopParams),
        "vsc": _defaults_of(VscControlParams),
        "network": _defaults_of(NetworkParams),
        "scenario": _defaults_of(Scenario),
        "sweep": _defaults_of(SweepSettings),
        "constraints": _defaults_of(SizingConstraints),
        "output": _defaults_of(OutputSettings),
        "metrics": _defaults_of(MetricSettings),
    }


SCHEMA = _schema()


# YAML 1.1 reads exponent forms without a dot (``5e6``) as strings
_EXP_NUMBER = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+")


def _number(value):
    if isinstance(value, str) and _EXP_NUMBER.fullmatch(value.strip()):
        return float(value)
    return value


def _coerce(section, key, value, line):
    default = SCHEMA[section][key]
    path = f"{section}.{key}"

    def fail(what):
        raise ConfigError(f"expected {what}, got {value!r}", key=path, line=line)

    if key == "kd_grid":
        if isinstance(value, list):
            value = [_number(v) for v in value]
        if not isinstance(value, list) or not value:
            fail("a non-empty list of numbers")
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                fail("a non-empty list of numbers")
            out.append(float(v))
        return tuple(out)
    if key == "jobs":
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            fail("a positive integer or null")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            fail("true or false")
        return value
    if isinstance(default, str):
        if not isinstance(value, str) or not value:
            fail("a non-empty string")
        return value
    value = _number(value)
    if value is None:
        if default is None:
            return None
        fail("a number")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        fail("a number")
    if isinstance(default, int):
        if isinstance(value, float):
            if not value.is_integer():
                fail("an integer")
            value = int(value)
        return value
    return float(value)


def _line_map(text):
    """``{(section, key): line}`` and ``{section: line}`` from the YAML node tree."""
    lines = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", line=line) from exc
    if root is None:
        return lines
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("top level must be a mapping of sections", line=root.start_mark.line + 1)
    for knode, vnode in root.value:
        lines[knode.value] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[(knode.value, k2.value)] = k2.start_mark.line + 1
    return lines


def parse_text(text):
    """Raw nested mapping plus a line map, with unknown keys rejected."""
    lines = _line_map(text)
    data = yaml.safe_load(text) or {}
    values = {}
    for section, body in data.items():
        section = str(section)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section (expected one of {', '.join(SCHEMA)})",
                              key=section, line=lines.get(section))
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigError("section must be a mapping", key=section, line=lines.get(section))
        for key, value in body.items():
            key = str(key)
            line = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", key=f"{section}.{key}", line=line)
            values[(section, key)] = (_coerce(section, key, value, line), line)
    return values


def parse_override(item):
    """``section.key=value`` with a YAML-typed value."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    path, raw = item.split("=", 1)
    path = path.strip()
    if path.count(".") != 1:
        raise ConfigError(f"override key {path!r} must look like section.key")
    section, key = path.split(".")
    if section not in SCHEMA:
        raise ConfigError("unknown section", key=section)
    if key not in SCHEMA[section]:
        raise ConfigError("unknown key", key=path)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {raw!r}", key=path) from exc
    return (section, key), (_coerce(section, key, value, None), None)


def _build(cls, section, values, extra=None):
    kwargs = {k: v for (s, k), (v, _) in values.items() if s == section and (extra is None or k in extra)}
    try:
        return cls(**kwargs)
    except InvalidParams as exc:
        msg = str(exc)
        head = msg.split(" ", 1)[0].strip("(:,")
        key = head if head in SCHEMA[section] else None
        line = values.get((section, key), (None, None))[1] if key else None
        raise ConfigError(msg, key=f"{section}.{key}" if key else section, line=line) from exc


def build_config(values):
    pv_array_keys = {f.name for f in fields(PvArrayParams)}
    pv_params = _build(PvArrayParams, "pv", values, pv_array_keys)
    plant_kwargs = {k: v for (s, k), (v, _) in values.items() if s == "pv" and k in _PV_PLANT_KEYS}
    pv = _build(lambda **kw: PvPlant(params=pv_params, **kw), "pv",
                {("pv", k): values[("pv", k)] for k in plant_kwargs})
    models = Models(
        pv=pv,
        battery=_build(BatteryParams, "battery", values),
        droop=_build(DroopParams, "droop", values),
        vsc=_build(VscControlParams, "vsc", values),
        network=_build(NetworkParams, "network", values),
    )
    return Config(
        models=models,
        scenario=_build(Scenario, "scenario", values),
        sweep=_build(SweepSettings, "sweep", values),
        constraints=_build(SizingConstraints, "constraints", values),
        output=_build(OutputSettings, "output", values),
        metrics=_build(MetricSettings, "metrics", values),
    )


def load_config(path=None, overrides=(), text=None):
    """Load, override and validate a configuration.

    ``path=None`` (and no ``text``) gives the built-in defaults; the
    ``DROOPSIM_CONFIG`` environment variable is consulted first.
    """
    if text is None:
        path = path or os.environ.get("DROOPSIM_CONFIG")
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    values = parse_text(text) if text else {}
    for item in overrides:
        k, v = parse_override(item)
        values[k] = v
    return build_config(values)


def with_kd(config, k_d):
    models = config.models
    return replace(config, models=replace(models, droop=replace(models.droop, k_d=float(k_d))))


def to_dict(config):
    """Effective configuration as a plain nested mapping (config-file shape)."""
    m = config.models
    pv = {f.name: getattr(m.pv.params, f.name) for f in fields(PvArrayParams)}
    pv.update({k: getattr(m.pv, k) for k in _PV_PLANT_KEYS})

    def flat(obj):
        return {f.name: getattr(obj, f.name) for f in fields(obj)}

    out = {
        "pv": pv,
        "battery": flat(m.battery),
        "droop": flat(m.droop),
        "vsc": flat(m.vsc),
        "network": flat(m.network),
        "scenario": flat(config.scenario),
        "sweep": flat(config.sweep),
        "constraints": flat(config.constraints),
        "output": flat(config.output),
        "metrics": flat(config.metrics),
    }
    out["sweep"]["kd_grid"] = list(out["sweep"]["kd_grid"])
    return out


def dump_yaml(config):
    return yaml.safe_dump(to_dict(config), sort_keys=False)
