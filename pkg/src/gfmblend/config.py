"""Strict YAML configuration shared by every command.

Top-level sections::

    seed: 0
    scenario: {name, t_end, dt, load_r, record_every, events: [{time, kind, magnitude, duration, unit}]}
    grid:     {e_th, r_th, x_th, omega_grid, connected}
    units:    [{id, law, params: {...}, x_coupling, rating, auto_setpoint, secondary: {...}}]
    optimize: {case, controllers, auto_setpoint, support_units, window, omega_target, start,
               max_iter, tol, grid_step, x_coupling}
    train:    {kinds, seeds, t_end, dt, window, hidden, max_epochs, mu_init, val_patience, split,
               lstm_hidden, lstm_epochs, learning_rate}
    sweep:    {axis, values, unit, workers}

Unknown keys anywhere are errors.  Every :class:`ConfigError` names the
dotted field path and, when it came from a file, the line number.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .blend import BlendWeights
from .controllers import PARAM_TYPES, BlendParams, SecondaryParams
from .errors import ConfigError, GfmError
from .network import PLANT_LOAD_R_PU, Event, GridParams, ScenarioSpec, UnitSpec

SECTIONS = ("seed", "scenario", "grid", "units", "optimize", "train", "sweep")
SCENARIO_KEYS = ("name", "t_end", "dt", "load_r", "record_every", "events")
EVENT_KEYS = ("time", "kind", "magnitude", "duration", "unit")
UNIT_KEYS = ("id", "law", "params", "x_coupling", "rating", "auto_setpoint", "secondary")
OPTIMIZE_KEYS = (
    "case",
    "controllers",
    "auto_setpoint",
    "support_units",
    "window",
    "omega_target",
    "start",
    "max_iter",
    "tol",
    "grid_step",
    "x_coupling",
)
TRAIN_KEYS = (
    "kinds",
    "seeds",
    "t_end",
    "dt",
    "window",
    "hidden",
    "max_epochs",
    "mu_init",
    "val_patience",
    "split",
    "lstm_hidden",
    "lstm_epochs",
    "learning_rate",
)
SWEEP_KEYS = ("axis", "values", "unit", "workers")
SWEEP_AXES = ("x_th", "kp", "d_damp", "load_r")


@dataclass
class Config:
    data: dict
    lines: dict = field(default_factory=dict)  # dotted path -> 1-based line
    text: str = ""
    path: str = None

    def line(self, path):
        return self.lines.get(path)

    def error(self, message, path):
        return ConfigError(message, field=path, line=self.line(path))


def _to_python(node, path, lines):
    lines.setdefault(path or "<root>", node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k_node, v_node in node.value:
            key = k_node.value
            sub = f"{path}.{key}" if path else key
            if key in out:
                raise ConfigError("duplicate key", field=sub, line=k_node.start_mark.line + 1)
            lines[sub] = k_node.start_mark.line + 1
            out[key] = _to_python(v_node, sub, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def parse_config(text, path=None):
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {exc}", line=mark.line + 1 if mark else None) from exc
    lines = {}
    data = {} if root is None else _to_python(root, "", lines)
    cfg = Config(data, lines, text, path)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1)
    check_keys(cfg, data, SECTIONS, "")
    return cfg


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc.strerror}", field=str(p)) from exc
    return parse_config(text, str(p))


def check_keys(cfg, mapping, allowed, path):
    if not isinstance(mapping, dict):
        raise cfg.error("expected a mapping", path or "<root>")
    for key in mapping:
        if key not in allowed:
            sub = f"{path}.{key}" if path else key
            raise cfg.error(f"unknown key {key!r}", sub)


def number(cfg, value, path, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if value in (".inf", "inf"):
            value = math.inf
        else:
            raise cfg.error(f"expected a number, got {value!r}", path)
    value = float(value)
    if math.isnan(value) or (positive and not value > 0):
        raise cfg.error(f"expected a positive number, got {value!r}", path)
    return value


def _dataclass(cfg, cls, values, path, **fixed):
    names = [f.name for f in dataclasses.fields(cls)]
    check_keys(cfg, values, [n for n in names if n not in fixed], path)
    kwargs = dict(fixed)
    for key, value in values.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            ftype = next(f.type for f in dataclasses.fields(cls) if f.name == key)
            if ftype is str:
                value = str(value)
            else:
                value = int(value) if ftype is int else float(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        sub = f"{path}.{exc.field}" if exc.field else path
        raise cfg.error(exc.reason, sub) from exc
    except (GfmError, TypeError, ValueError) as exc:
        raise cfg.error(str(exc), path) from exc


def scenario_from(cfg, default_name="scenario"):
    sc = cfg.data.get("scenario")
    if sc is None:
        raise cfg.error("missing section", "scenario")
    check_keys(cfg, sc, SCENARIO_KEYS, "scenario")
    if "t_end" not in sc:
        raise cfg.error("required", "scenario.t_end")
    events = []
    raw_events = sc.get("events", []) or []
    if not isinstance(raw_events, list):
        raise cfg.error("expected a list", "scenario.events")
    for i, ev in enumerate(raw_events):
        p = f"scenario.events[{i}]"
        check_keys(cfg, ev, EVENT_KEYS, p)
        for req in ("time", "kind"):
            if req not in ev:
                raise cfg.error("required", f"{p}.{req}")
        events.append(_dataclass(cfg, Event, ev, p))
    load_r = sc.get("load_r", PLANT_LOAD_R_PU)
    load_r = PLANT_LOAD_R_PU if load_r == "plant" else number(cfg, load_r, "scenario.load_r", True)
    t_end = number(cfg, sc["t_end"], "scenario.t_end", True)
    dt = number(cfg, sc.get("dt", 1e-3), "scenario.dt", True)
    try:
        return ScenarioSpec(
            str(sc.get("name", default_name)),
            t_end=t_end,
            dt=dt,
            events=tuple(events),
            load_r=load_r,
            seed=int(cfg.data.get("seed", 0)),
        )
    except GfmError as exc:
        raise cfg.error(str(exc), "scenario") from exc


def record_every(cfg):
    n = (cfg.data.get("scenario") or {}).get("record_every", 1)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise cfg.error("expected a positive integer", "scenario.record_every")
    return n


def grid_from(cfg):
    return _dataclass(cfg, GridParams, cfg.data.get("grid", {}) or {}, "grid")


def weights_from(cfg, raw, path):
    if not isinstance(raw, list) or len(raw) != 4:
        raise cfg.error("expected four weights [alpha, beta, gamma, nu]", path)
    return BlendWeights(*(number(cfg, v, f"{path}[{i}]") for i, v in enumerate(raw)))


def law_params(cfg, law, raw, path):
    raw = raw or {}
    if law == "blend":
        check_keys(cfg, raw, ("weights", "droop", "vsm", "psl", "voc"), path)
        if "weights" not in raw:
            raise cfg.error("required", f"{path}.weights")
        subs = {
            name: law_params(cfg, name, raw.get(name), f"{path}.{name}")
            for name in ("droop", "vsm", "psl", "voc")
        }
        return BlendParams(weights_from(cfg, raw["weights"], f"{path}.weights"), **subs)
    return _dataclass(cfg, PARAM_TYPES[law], raw, path)


def unit_from(cfg, raw, path):
    check_keys(cfg, raw, UNIT_KEYS, path)
    for req in ("id", "law"):
        if req not in raw:
            raise cfg.error("required", f"{path}.{req}")
    law = raw["law"]
    if law not in PARAM_TYPES:
        raise cfg.error(f"unknown control law {law!r}", f"{path}.law")
    params = law_params(cfg, law, raw.get("params"), f"{path}.params")
    secondary = None
    if raw.get("secondary") is not None:
        secondary = _dataclass(cfg, SecondaryParams, raw["secondary"], f"{path}.secondary")
    kw = {}
    for key in ("x_coupling", "rating"):
        if key in raw:
            kw[key] = number(cfg, raw[key], f"{path}.{key}", True)
    auto = raw.get("auto_setpoint", False)
    if not isinstance(auto, bool):
        raise cfg.error("expected true or false", f"{path}.auto_setpoint")
    try:
        return UnitSpec(str(raw["id"]), law, params, secondary=secondary, auto_setpoint=auto, **kw)
    except GfmError as exc:
        raise cfg.error(str(exc), path) from exc


def units_from(cfg, key="units"):
    raw = cfg.data.get(key)
    if not raw:
        raise cfg.error("at least one unit is required", key)
    if not isinstance(raw, list):
        raise cfg.error("expected a list", key)
    return [unit_from(cfg, u, f"{key}[{i}]") for i, u in enumerate(raw)]


def section(cfg, name, allowed):
    raw = cfg.data.get(name)
    if raw is None:
        raise cfg.error("missing section", name)
    check_keys(cfg, raw, allowed, name)
    return raw
