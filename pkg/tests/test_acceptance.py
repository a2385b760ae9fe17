"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
without ``-s``) or directly with ``python tests/test_acceptance.py``.
"""

import dataclasses
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from gfmblend import artifacts, scenarios  # noqa: E402
from gfmblend.blend import (  # noqa: E402
    PUBLISHED_COEFFICIENTS,
    brute_force_weights,
    check_feasible,
    objective_mse,
    optimize_weights,
    published_weights,
    project_to_feasible,
)
from gfmblend.cli import main  # noqa: E402
from gfmblend.controllers import (  # noqa: E402
    ControllerState,
    DroopParams,
    SecondaryParams,
    VocParams,
    voc_step,
)
from gfmblend.network import (  # noqa: E402
    Event,
    GridParams,
    ScenarioSpec,
    UnitSpec,
    run_simulation,
    sharing_ratio,
    steady_value,
)
from gfmblend.neural import Dataset, MlpNetwork, TrainConfig, lm_train  # noqa: E402
from gfmblend.sm_model import SmParams, effective_reactance, simulate_step_reactance  # noqa: E402

from gradcheck import lstm_max_error, mlp_max_error  # noqa: E402

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "gfmblend" / "configs"
W0 = 314.159
RESULTS = {}


def report(number, title, ok, detail, capsys=None):
    line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS[number] = (ok, line)
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


# --- 1: optimiser trend -----------------------------------------------------------


def criterion_1(capsys=None):
    t0 = time.perf_counter()
    case = scenarios.reference_case()
    traces, spec, _ = scenarios.controller_traces(case)
    _, log = optimize_weights(traces, spec, scenarios.reference_start())
    elapsed = time.perf_counter() - t0
    vals = log.values
    decreasing = all(b < a for a, b in zip(vals, vals[1:])) and len(vals) >= 2
    span = vals[0] / vals[-1] if vals[-1] > 0 else math.inf
    ok = decreasing and span >= 1e6 and vals[-1] <= 1e-2 and elapsed < 60
    detail = (f"log {' > '.join(f'{v:.4g}' for v in vals)}; first/final {span:.3g} (>= 1e6); "
              f"final {vals[-1]:.3g} (<= 1e-2); {elapsed:.1f} s (< 60 s)")
    return report(1, "optimizer trend on the reference scenario", ok, detail, capsys)


# --- 2: oracle equivalence ----------------------------------------------------------


def criterion_2(capsys=None):
    t0 = time.perf_counter()
    gaps = {}
    for case in scenarios.benchmark_cases():
        traces, spec, _ = scenarios.controller_traces(case)
        _, log = optimize_weights(traces, spec, scenarios.reference_start())
        brute = objective_mse(brute_force_weights(traces, spec, 0.005), traces, spec)
        gaps[case.name] = log.final - brute
    elapsed = time.perf_counter() - t0
    worst = max(gaps.values())
    ok = len(gaps) >= 6 and worst <= 1e-3 and elapsed < 300
    detail = (f"{len(gaps)} scenarios, worst optimizer - brute force {worst:.3g} (<= 1e-3); "
              f"{elapsed:.1f} s (< 300 s)")
    return report(2, "optimizer matches brute-force oracle", ok, detail, capsys)


# --- 3: published coefficient audit --------------------------------------------------


def criterion_3(capsys=None):
    w = published_weights()
    ok_raw, violations = check_feasible(w)
    sum_v = [v for v in violations if v.name == "sum"]
    proj = project_to_feasible(PUBLISHED_COEFFICIENTS)
    ok_proj, _ = check_feasible(proj)
    ok = (not ok_raw and len(sum_v) == 1 and abs(sum_v[0].value - 1.001) < 1e-12 and ok_proj)
    detail = (f"sum {w.total:.12g} flagged: {sum_v[0] if sum_v else 'no'}; "
              f"projected {tuple(round(v, 6) for v in proj.as_tuple())} feasible={ok_proj}")
    return report(3, "published coefficients audited", ok, detail, capsys)


# --- 4: power sharing ----------------------------------------------------------------


def criterion_4(capsys=None):
    kp = (3.14159, 6.28318)
    units = [UnitSpec(u, "droop", DroopParams(kp=k, kq=0.0), x_coupling=0.02) for u, k in zip("ab", kp)]
    tr = run_simulation(units, GridParams(connected=False), ScenarioSpec("share", t_end=4.0, dt=2e-3))
    ratio = steady_value(tr, "a", "p") / steady_value(tr, "b", "p")
    expected = sharing_ratio(*kp)
    ok = abs(ratio / expected - 1.0) <= 0.01
    return report(4, "two-unit droop power sharing", ok, f"P_a/P_b = {ratio:.6f} (2 +/- 1%)", capsys)


# --- 5: droop steady state and restoration --------------------------------------------


def criterion_5(capsys=None):
    sc = ScenarioSpec("step", t_end=4.0, dt=1e-3, events=(Event(1.0, "load_surge", 0.1),))
    unit = UnitSpec("g", "droop", DroopParams(kp=3.14159, kq=0.0), x_coupling=0.02, auto_setpoint=True)
    dw = steady_value(run_simulation([unit], GridParams(), sc), "g", "omega") - W0
    sc2 = dataclasses.replace(sc, t_end=15.0)
    sec = dataclasses.replace(unit, secondary=SecondaryParams(ki_sec=2.0))
    dw_sec = steady_value(run_simulation([sec], GridParams(), sc2), "g", "omega") - W0
    ok = abs(dw / -0.314159 - 1.0) <= 0.005 and abs(dw_sec) < 1e-3
    detail = f"settled dw {dw:.6f} rad/s (-0.314159 +/- 0.5%); with restoration {dw_sec:.2e} (< 1e-3)"
    return report(5, "droop load step and secondary restoration", ok, detail, capsys)


# --- 6: oscillator amplitude ----------------------------------------------------------


def criterion_6(capsys=None):
    p = VocParams()
    target = math.sqrt(2.0 / p.beta)
    finals = {}
    for v0 in (0.25, 0.5, 2.0):
        s = ControllerState(v_mag=v0)
        for _ in range(2000):
            s = voc_step(s, p, 0.0, 0.0, 1e-3)
        finals[v0] = s.v_mag
    worst = max(abs(v - target) for v in finals.values())
    ok = worst <= 1e-3
    detail = f"target {target:.6f}; finals {', '.join(f'{k}->{v:.9f}' for k, v in finals.items())}"
    return report(6, "VOC amplitude fixed point", ok, detail, capsys)


# --- 7: machine reactance ---------------------------------------------------------------


def criterion_7(capsys=None):
    p = SmParams()
    t, x = simulate_step_reactance(p, 5 * p.td0_tr, dt=1e-2)
    closed = np.array([effective_reactance(p, v) for v in t])
    err = float(np.max(np.abs(x - closed)))
    ok = err <= 1e-4 and t[-1] >= 5 * p.td0_tr - 1e-9
    return report(7, "step-current reactance vs closed form", ok, f"max error {err:.3g} pu (<= 1e-4)", capsys)


# --- 8: gradients -----------------------------------------------------------------------


def criterion_8(capsys=None):
    mlp = max(mlp_max_error(s) for s in range(100))
    lstm = max(lstm_max_error(s) for s in range(100))
    ok = mlp <= 1e-5 and lstm <= 1e-5
    detail = f"100 seeds each; worst MLP {mlp:.3g}, worst LSTM {lstm:.3g} (<= 1e-5)"
    return report(8, "analytic gradients vs finite differences", ok, detail, capsys)


# --- 9: neural regression and early stopping ---------------------------------------------


def early_stop_epochs():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 1, (60, 1))
    y = 2.0 * x[:, 0] + 1.0
    y[40:50] = -y[40:50]
    data = Dataset(x, y, np.array([0] * 40 + [1] * 10 + [2] * 10))
    net = MlpNetwork((1, 1), (np.array([[0.5]]),), (np.array([0.1]),))
    _, rec = lm_train(net, data, TrainConfig(mu_init=1e6, mu_dec=0.9, val_patience=6))
    return len(rec.epochs) - 1, rec.stop_reason


def criterion_9(tmp_dir, capsys=None):
    t0 = time.perf_counter()
    code = main(["train", "--config", str(CONFIG_DIR / "dataset_train.yaml"), "--out", str(tmp_dir), "--model", "mlp"])
    elapsed = time.perf_counter() - t0
    _, _, rows = artifacts.read_csv(Path(tmp_dir) / "regression.csv")
    r = {name: float(val) for name, val in rows}
    epochs, reason = early_stop_epochs()
    ok = (code == 0 and all(r[s] >= 0.99 for s in ("train", "val", "test"))
          and epochs == 6 and reason == "validation" and elapsed < 120)
    detail = (f"R train {r['train']:.5f} val {r['val']:.5f} test {r['test']:.5f} (>= 0.99); "
              f"fixture stopped after {epochs} rises ({reason}); {elapsed:.1f} s (< 120 s)")
    return report(9, "LM regression and early stopping", ok, detail, capsys)


# --- 10: determinism ------------------------------------------------------------------------


def criterion_10(tmp_dir, capsys=None):
    tmp_dir = Path(tmp_dir)
    commands = [
        ("simulate", "islanded_droop.yaml", []),
        ("simulate", "droop_load_step.yaml", []),
        ("optimize", "reference_optimize.yaml", ["--oracle"]),
        ("train", "dataset_train.yaml", ["--model", "lstm"]),
        ("sweep", "sweep_x_th.yaml", []),
    ]
    mismatched, compared = [], 0
    for i, (cmd, cfg, extra) in enumerate(commands):
        outs = []
        for rep in ("a", "b"):
            out = tmp_dir / f"{i}{rep}"
            code = main([cmd, "--config", str(CONFIG_DIR / cfg), "--out", str(out), *extra])
            if code != 0:
                mismatched.append(f"{cmd} {cfg} exit {code}")
            outs.append(out)
        for f in sorted(outs[0].glob("*.csv")):
            compared += 1
            if artifacts.payload(f) != artifacts.payload(outs[1] / f.name):
                mismatched.append(f"{cmd}/{f.name}")
    ok = not mismatched and compared > 0
    detail = f"{compared} CSV payloads compared across {len(commands)} commands; mismatches: {mismatched or 'none'}"
    return report(10, "byte-identical CSV payloads on rerun", ok, detail, capsys)


# --- 11: integrator order ------------------------------------------------------------------


def omega_trace(case, units, dt):
    sc = dataclasses.replace(case.scenario, dt=dt)
    return run_simulation(units, case.grid, sc).unit("gfm")["omega"]


def criterion_11(capsys=None):
    case = scenarios.reference_case()
    units = case.blend_units(project_to_feasible(PUBLISHED_COEFFICIENTS))
    dt0 = 4e-3
    coarse = omega_trace(case, units, dt0)
    half = omega_trace(case, units, dt0 / 2)[::2]
    ref = omega_trace(case, units, dt0 / 10)[::10]
    e1 = float(np.max(np.abs(coarse - ref)))
    e2 = float(np.max(np.abs(half - ref)))
    ratio = e1 / e2
    ok = abs(ratio / 16.0 - 1.0) <= 0.30
    detail = f"dt {dt0:g}: err {e1:.3e}, dt {dt0 / 2:g}: err {e2:.3e}, ratio {ratio:.2f} (16 +/- 30%)"
    return report(11, "fourth-order convergence of the simulator", ok, detail, capsys)


# --- pytest entry points ------------------------------------------------------------------------


def test_criterion_01_optimizer_trend(capsys):
    assert criterion_1(capsys), RESULTS[1][1]


def test_criterion_02_oracle_equivalence(capsys):
    assert criterion_2(capsys), RESULTS[2][1]


def test_criterion_03_coefficient_audit(capsys):
    assert criterion_3(capsys), RESULTS[3][1]


def test_criterion_04_power_sharing(capsys):
    assert criterion_4(capsys), RESULTS[4][1]


def test_criterion_05_droop_steady_state(capsys):
    assert criterion_5(capsys), RESULTS[5][1]


def test_criterion_06_voc_fixed_point(capsys):
    assert criterion_6(capsys), RESULTS[6][1]


def test_criterion_07_reactance(capsys):
    assert criterion_7(capsys), RESULTS[7][1]


def test_criterion_08_gradients(capsys):
    assert criterion_8(capsys), RESULTS[8][1]


def test_criterion_09_regression(tmp_path, capsys):
    assert criterion_9(tmp_path, capsys), RESULTS[9][1]


def test_criterion_10_determinism(tmp_path, capsys):
    assert criterion_10(tmp_path, capsys), RESULTS[10][1]


def test_criterion_11_integrator_order(capsys):
    assert criterion_11(capsys), RESULTS[11][1]


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        checks = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
                  criterion_7, criterion_8, lambda: criterion_9(Path(d) / "c9"),
                  lambda: criterion_10(Path(d) / "c10"), criterion_11]
        passed = sum(bool(c()) for c in checks)
    print(f"{passed}/{len(checks)} criteria passed")
    sys.exit(0 if passed == len(checks) else 1)
