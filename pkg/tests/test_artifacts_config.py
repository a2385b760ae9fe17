import math

import numpy as np
import pytest

from gfmblend import artifacts, config, svgplot
from gfmblend.blend import BlendWeights, IterationLog
from gfmblend.controllers import BlendParams, DroopParams
from gfmblend.errors import ConfigError, InvalidInputError
from gfmblend.network import PLANT_LOAD_R_PU, GridParams, ScenarioSpec, UnitSpec, run_simulation
from gfmblend.neural import LstmCell, MlpNetwork, lstm_forward, mlp_forward

GOOD = """\
seed: 3
scenario:
  name: s
  t_end: 1.0
  dt: 0.01
  load_r: plant
  events:
    - {time: 0.5, kind: load_surge, magnitude: 0.1}
grid:
  connected: false
units:
  - id: u1
    law: droop
    params: {kp: 2.0, kq: 0.0}
    auto_setpoint: true
"""


# --- configuration ------------------------------------------------------------


def test_parse_good_config():
    cfg = config.parse_config(GOOD)
    sc = config.scenario_from(cfg)
    assert sc.load_r == PLANT_LOAD_R_PU and sc.seed == 3
    assert sc.events[0].magnitude == 0.1
    assert config.grid_from(cfg) == GridParams(connected=False)
    (u,) = config.units_from(cfg)
    assert u.params == DroopParams(kp=2.0, kq=0.0) and u.auto_setpoint


@pytest.mark.parametrize("bad,field,line", [
    (GOOD.replace("  dt: 0.01", "  dtt: 0.01"), "scenario.dtt", 5),
    (GOOD.replace("kp: 2.0", "kpp: 2.0"), "units[0].params", 14),
    (GOOD.replace("kind: load_surge", "kind: meteor"), "scenario.events[0]", 8),
    (GOOD.replace("t_end: 1.0", "t_end: -1.0"), "scenario.t_end", 4),
    (GOOD.replace("law: droop", "law: magic"), "units[0].law", 13),
    (GOOD + "extra: 1\n", "extra", 16),
])
def test_config_errors_name_field_and_line(bad, field, line):
    with pytest.raises(ConfigError) as info:
        cfg = config.parse_config(bad)
        config.scenario_from(cfg)
        config.grid_from(cfg)
        config.units_from(cfg)
    assert info.value.field.startswith(field)
    assert info.value.line == line
    assert field.split(".")[0] in str(info.value)


def test_duplicate_key_and_malformed_yaml():
    with pytest.raises(ConfigError) as info:
        config.parse_config("seed: 1\nseed: 2\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError):
        config.parse_config("scenario: [unclosed\n")


def test_missing_config_file_names_path(tmp_path):
    missing = tmp_path / "nope.yaml"
    with pytest.raises(ConfigError) as info:
        config.load_config(missing)
    assert str(missing) in str(info.value)


def test_blend_unit_from_config():
    text = """\
units:
  - id: b
    law: blend
    params:
      weights: [0.9, 0.04, 0.05, 0.01]
      droop: {kp: 1.0}
"""
    (u,) = config.units_from(config.parse_config(text))
    assert isinstance(u.params, BlendParams)
    assert u.params.weights == BlendWeights(0.9, 0.04, 0.05, 0.01)
    assert u.params.droop.kp == 1.0


def test_infinite_load_and_weights_validation():
    cfg = config.parse_config("scenario: {t_end: 1.0, load_r: .inf}\n")
    assert math.isinf(config.scenario_from(cfg).load_r)
    with pytest.raises(ConfigError):
        config.weights_from(cfg, [1, 2, 3], "optimize.start")


# --- CSV and weight files -------------------------------------------------------------


def test_fmt_round_trips_doubles():
    rng = np.random.default_rng(0)
    for x in rng.normal(0, 1e3, 100):
        assert float(artifacts.fmt(x)) == x
    assert artifacts.fmt(True) == "1" and artifacts.fmt(7) == "7"


def test_csv_header_and_payload(tmp_path):
    p = artifacts.write_csv(tmp_path / "a.csv", ("x", "y"), [(1, 0.1), (2, 1 / 3)], seed=5, digest="abc")
    comments, cols, rows = artifacts.read_csv(p)
    assert comments == [f"gfmblend {artifacts.__version__}", "seed: 5", "config_sha256: abc"]
    assert cols == ["x", "y"]
    assert float(rows[1][1]) == 1 / 3
    assert artifacts.payload(p) == "x,y\n1,0.10000000000000001\n2,0.33333333333333331\n"
    raw = p.read_bytes()
    assert b"\r" not in raw
    with pytest.raises(InvalidInputError):
        artifacts.write_csv(tmp_path / "b.csv", ("x",), [(1, 2)])


def test_trace_csv_layout(tmp_path):
    units = [UnitSpec("a", "droop", DroopParams(), auto_setpoint=True),
             UnitSpec("b", "droop", DroopParams(kp=1.0), auto_setpoint=True)]
    tr = run_simulation(units, GridParams(), ScenarioSpec("t", t_end=0.05, dt=0.01))
    p = artifacts.write_trace(tmp_path / "trace.csv", tr)
    _, cols, rows = artifacts.read_csv(p)
    assert tuple(cols) == artifacts.TRACE_HEADER
    assert len(rows) == 2 * len(tr)
    assert [r[1] for r in rows[:4]] == ["a", "b", "a", "b"]


def test_weights_and_iteration_files(tmp_path):
    w = BlendWeights(0.9, 0.04, 0.05, 0.01)
    p = artifacts.write_weights(tmp_path / "w.yaml", w, 1e-3, 4, seed=1, digest="d")
    got = artifacts.read_weights(p)
    assert got == {"alpha": 0.9, "beta": 0.04, "gamma": 0.05, "nu": 0.01,
                   "final_objective": 1e-3, "iterations": 4}
    log = IterationLog()
    log.append(2.0)
    log.append(1.0)
    _, cols, rows = artifacts.read_csv(artifacts.write_iteration_log(tmp_path / "i.csv", log))
    assert cols == ["iteration", "objective"] and rows == [["1", "2"], ["2", "1"]]


def test_config_digest_is_sha256():
    assert artifacts.config_digest("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


# --- model files ------------------------------------------------------------------


def test_mlp_model_round_trip(tmp_path):
    net = MlpNetwork.initialize((3, 5, 2), seed=4, in_scale=np.array([1.0, 2.0, 3.0]))
    p = artifacts.save_model(tmp_path / "m.txt", net, seed=2)
    back = artifacts.load_model(p)
    assert back.flat_params().tobytes() == net.flat_params().tobytes()
    x = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(mlp_forward(back, x), mlp_forward(net, x))


def test_lstm_model_round_trip(tmp_path):
    cell = LstmCell.initialize(2, 3, seed=1)
    back = artifacts.load_model(artifacts.save_model(tmp_path / "l.txt", cell))
    assert back.flat_params().tobytes() == cell.flat_params().tobytes()
    xs = np.ones((4, 2))
    assert np.array_equal(lstm_forward(back, xs).increments, lstm_forward(cell, xs).increments)


def test_model_loader_validates(tmp_path):
    p = artifacts.save_model(tmp_path / "m.txt", MlpNetwork.initialize((2, 2, 1), seed=0))
    text = p.read_text()
    (tmp_path / "bad.txt").write_text(text.replace("weight0 2 2", "weight0 2 3"))
    with pytest.raises(InvalidInputError):
        artifacts.load_model(tmp_path / "bad.txt")
    (tmp_path / "v.txt").write_text(text.replace("gfmblend-model 1", "gfmblend-model 9"))
    with pytest.raises(InvalidInputError):
        artifacts.load_model(tmp_path / "v.txt")
    (tmp_path / "x.txt").write_text("hello\n")
    with pytest.raises(InvalidInputError):
        artifacts.load_model(tmp_path / "x.txt")


# --- SVG plots -------------------------------------------------------------------------


def test_nice_ticks():
    ticks, lo, hi = svgplot.nice_ticks(0.0, 1.0)
    assert (lo, hi) == (0.0, 1.0)
    assert ticks[0] == 0.0 and ticks[-1] == pytest.approx(1.0)
    steps = np.diff(ticks)
    assert np.allclose(steps, steps[0])


def test_line_plot_is_valid_deterministic_svg(tmp_path):
    import xml.etree.ElementTree as ET

    x = np.linspace(0, 1, 50)
    series = {"a": (x, np.sin(x)), "b": (x, np.cos(x))}
    svgplot.line_plot(tmp_path / "a.svg", series, "t", "x", "y")
    svgplot.line_plot(tmp_path / "b.svg", series, "t", "x", "y")
    root = ET.parse(tmp_path / "a.svg").getroot()
    assert root.tag.endswith("svg")
    assert len([e for e in root.iter() if e.tag.endswith("polyline")]) == 2
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
