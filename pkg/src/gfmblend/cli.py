"""Command-line entry point: ``gfmblend {simulate,optimize,train,sweep}``.

Exit codes are 0 on success, 1 on a runtime or numeric failure and 2 on a
configuration error.
"""

import argparse
import dataclasses
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import artifacts, config, scenarios, svgplot
from .blend import (
    OptimizeConfig,
    brute_force_weights,
    check_feasible,
    objective_mse,
    optimize_weights,
)
from .controllers import PARAM_TYPES
from .errors import ConfigError, GfmError, NumericFailure, SimulationAbort
from .network import run_simulation
from .neural import (
    DATASET_FEATURES,
    LstmCell,
    LstmTrainConfig,
    MlpNetwork,
    TrainConfig,
    generate_dataset,
    generate_sequences,
    lm_train,
    lstm_train,
    regression_coefficient,
)
from .scenarios import BLEND_ORDER, StudyCase
from .sm_model import OMEGA_BASE

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
SUMMARY_COLUMNS = (
    "status",
    "delta_omega_rad_s",
    "delta_rad",
    "power_ratio",
    "final_objective",
)


class Run:
    """Bookkeeping for one command: output directory, seed, digest and artifacts."""

    def __init__(self, command, cfg, out, seed):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.seed = seed
        self.digest = artifacts.config_digest(cfg.text)
        self.emitted = []
        self.notes = []
        self.out.mkdir(parents=True, exist_ok=True)

    def path(self, name):
        p = self.out / name
        self.emitted.append(name)
        return p

    def csv(self, name, columns, rows, extra=()):
        return artifacts.write_csv(self.path(name), columns, rows, self.seed, self.digest, extra)

    def manifest(self):
        body = {
            "command": self.command,
            "config_path": self.cfg.path,
            "output_dir": str(self.out),
            "seed": self.seed,
            "artifacts": list(self.emitted),
        }
        if self.notes:
            body["notes"] = list(self.notes)
        lines = artifacts.header_lines(self.seed, self.digest)
        text = "\n".join(lines) + "\n" + yaml.safe_dump(body, sort_keys=False, width=1000)
        (self.out / "manifest.yaml").write_text(text, encoding="utf-8")


def _seed(args, cfg):
    if args.seed is not None:
        return args.seed
    seed = cfg.data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise cfg.error("expected an integer", "seed")
    return seed


# --- simulate -------------------------------------------------------------


def summary_row(trace, grid, omega_target=OMEGA_BASE, window=0.5):
    """Steady-state figures of the first unit (and the first two for the ratio)."""
    uid = trace.unit_ids[0]
    s = trace.unit(uid)
    tail = trace.t >= trace.t[-1] - window - 1e-12
    w = float(np.mean(s["omega"][tail]))
    # angle of the first unit relative to the grid source (or to the nominal frame when islanded)
    rel = s["theta"][tail] - (trace.grid_angle[tail] if grid.connected else omega_target * trace.t[tail])
    delta = float(np.mean(np.angle(np.exp(1j * rel))))
    ratio = math.nan
    if len(trace.unit_ids) > 1:
        p2 = float(np.mean(trace.unit(trace.unit_ids[1])["p"][tail]))
        p1 = float(np.mean(s["p"][tail]))
        ratio = p1 / p2 if p2 != 0 else math.nan
    obj = float(np.mean((omega_target - s["omega"]) ** 2))
    return ("ok", w - omega_target, delta, ratio, obj)


def _plots(run, trace):
    for name, field, label in (
        ("frequency.svg", "freq_hz", "frequency (Hz)"),
        ("power.svg", "p", "active power (pu)"),
        ("voltage.svg", "v", "voltage (pu)"),
    ):
        series = {uid: (trace.t, trace.unit(uid)[field]) for uid in trace.unit_ids}
        svgplot.line_plot(run.path(name), series, title=label, xlabel="time (s)", ylabel=label)


def cmd_simulate(args):
    cfg = config.load_config(args.config)
    seed = _seed(args, cfg)
    scenario = dataclasses.replace(config.scenario_from(cfg), seed=seed)
    grid = config.grid_from(cfg)
    units = config.units_from(cfg)
    every = config.record_every(cfg)
    run = Run("simulate", cfg, args.out, seed)
    trace = run_simulation(units, grid, scenario, record_every=every)
    artifacts.write_trace(run.path("trace.csv"), trace, seed, run.digest)
    _plots(run, trace)
    run.csv("summary.csv", SUMMARY_COLUMNS, [summary_row(trace, grid)])
    run.manifest()
    return EXIT_OK


# --- optimize ---------------------------------------------------------------


def _study_case(cfg):
    opt = config.section(cfg, "optimize", config.OPTIMIZE_KEYS)
    name = opt.get("case", "custom")
    if name == "reference":
        return scenarios.reference_case(), opt
    if name != "custom":
        raise cfg.error("expected 'reference' or 'custom'", "optimize.case")
    scenario = config.scenario_from(cfg, "custom")
    grid = config.grid_from(cfg)
    controllers = scenarios.default_controllers()
    raw = opt.get("controllers") or {}
    config.check_keys(cfg, raw, BLEND_ORDER, "optimize.controllers")
    for law, params in raw.items():
        controllers[law] = config.law_params(cfg, law, params, f"optimize.controllers.{law}")
    auto = opt.get("auto_setpoint", list(BLEND_ORDER))
    if not isinstance(auto, list) or any(a not in BLEND_ORDER for a in auto):
        raise cfg.error("expected a list of control laws", "optimize.auto_setpoint")
    support = tuple(
        config.unit_from(cfg, u, f"optimize.support_units[{i}]")
        for i, u in enumerate(opt.get("support_units") or [])
    )
    window = opt.get("window", [0.0, None])
    if not isinstance(window, list) or len(window) != 2:
        raise cfg.error("expected [start, end]", "optimize.window")
    kw = {}
    if "x_coupling" in opt:
        kw["x_coupling"] = config.number(cfg, opt["x_coupling"], "optimize.x_coupling", True)
    if "omega_target" in opt:
        kw["omega_target"] = config.number(cfg, opt["omega_target"], "optimize.omega_target", True)
    case = StudyCase(
        scenario.name,
        scenario,
        grid=grid,
        controllers=controllers,
        support_units=support,
        window=tuple(window),
        auto_setpoint=tuple(auto),
        **kw,
    )
    return case, opt


def cmd_optimize(args):
    cfg = config.load_config(args.config)
    seed = _seed(args, cfg)
    case, opt = _study_case(cfg)
    start = opt.get("start", [0.25, 0.25, 0.25, 0.25])
    w0 = config.weights_from(cfg, start, "optimize.start")
    try:
        ocfg = OptimizeConfig(max_iter=int(opt.get("max_iter", 500)), tol=float(opt.get("tol", 1e-10)))
    except GfmError as exc:
        raise cfg.error(str(exc), "optimize") from exc
    grid_step = float(opt.get("grid_step", 0.005))
    run = Run("optimize", cfg, args.out, seed)
    if not check_feasible(w0)[0]:
        run.notes.append("start weights infeasible; projected before the first iteration")
    traces, spec, _ = scenarios.controller_traces(case)
    w, log = optimize_weights(traces, spec, w0, ocfg)
    rows = [("projected_gradient", *w.as_tuple(), log.final)]
    extra = {}
    if args.oracle:
        wb = brute_force_weights(traces, spec, grid_step)
        fb = objective_mse(wb, traces, spec)
        rows.append(("brute_force", *wb.as_tuple(), fb))
        extra = {"brute_force_objective": fb, "oracle_gap": abs(log.final - fb)}
    artifacts.write_weights(run.path("weights.yaml"), w, log.final, len(log), seed, run.digest, extra)
    artifacts.write_iteration_log(run.path("iterations.csv"), log, seed, run.digest)
    run.csv("comparison.csv", ("method", "alpha", "beta", "gamma", "nu", "objective"), rows)
    its, vals = zip(*log.entries)
    positive = all(v > 0 for v in vals)
    svgplot.line_plot(
        run.path("objective.svg"),
        {"objective": (its, vals)},
        title="objective vs iteration",
        xlabel="iteration",
        ylabel="mean squared frequency error",
        log_y=positive,
    )
    run.manifest()
    return EXIT_OK


# --- train ------------------------------------------------------------------


def _train_cases(cfg):
    tr = config.section(cfg, "train", config.TRAIN_KEYS)
    kinds = tr.get("kinds", list(scenarios.DATASET_KINDS))
    if not isinstance(kinds, list) or any(k not in scenarios.DATASET_KINDS for k in kinds):
        raise cfg.error(f"kinds must be drawn from {scenarios.DATASET_KINDS}", "train.kinds")
    n = tr.get("seeds", 8)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise cfg.error("expected a positive integer", "train.seeds")
    t_end = config.number(cfg, tr.get("t_end", 3.0), "train.t_end", True)
    dt = config.number(cfg, tr.get("dt", 5e-3), "train.dt", True)
    cases = [scenarios.dataset_case(k, s, t_end=t_end, dt=dt) for k in kinds for s in range(n)]
    return tr, cases


def cmd_train(args):
    cfg = config.load_config(args.config)
    seed = _seed(args, cfg)
    tr, cases = _train_cases(cfg)
    window = config.number(cfg, tr.get("window", 0.1), "train.window", True)
    run = Run(f"train --model {args.model}", cfg, args.out, seed)
    skipped = []
    if args.model == "mlp":
        split = tuple(tr.get("split", (0.70, 0.15, 0.15)))
        data = generate_dataset(cases, window, split, seed, skipped)
        x, y = data.inputs, data.targets
        try:
            tcfg = TrainConfig(
                mu_init=float(tr.get("mu_init", 1e-3)),
                max_epochs=int(tr.get("max_epochs", 300)),
                val_patience=int(tr.get("val_patience", 6)),
                split=split,
                seed=seed,
            )
        except GfmError as exc:
            raise cfg.error(str(exc), "train") from exc
        xs, ys = x.std(axis=0), y.std(axis=0)
        net = MlpNetwork.initialize(
            (x.shape[1], int(tr.get("hidden", 16)), y.shape[1]),
            seed=seed,
            in_offset=x.mean(axis=0),
            in_scale=np.where(xs > 0, xs, 1.0),
            out_offset=y.mean(axis=0),
            out_scale=np.where(ys > 0, ys, 1.0),
        )
        net, rec = lm_train(net, data, tcfg)
        artifacts.save_model(run.path("model.txt"), net, seed, run.digest)
        artifacts.write_training_record(run.path("training.csv"), rec, seed, run.digest)
        r = [(s, regression_coefficient(net, data, s)) for s in ("train", "val", "test", "all")]
        run.csv(
            "regression.csv",
            ("split", "r"),
            r,
            extra=(f"stop_reason: {rec.stop_reason}", f"best_epoch: {rec.best_epoch}"),
        )
        ep = [e[0] for e in rec.epochs]
        svgplot.line_plot(
            run.path("training.svg"),
            {"train": (ep, rec.train_err), "validation": (ep, rec.val_err)},
            title="LM training",
            xlabel="epoch",
            ylabel="mean squared error",
            log_y=min(rec.train_err + rec.val_err) > 0,
        )
        run.notes.append(f"features: {', '.join(DATASET_FEATURES)}")
    else:
        seqs = generate_sequences(cases, window, skipped)
        hidden = int(tr.get("lstm_hidden", 6))
        cell = LstmCell.initialize(seqs[0][0].shape[1], hidden, seed=seed)
        lcfg = LstmTrainConfig(
            epochs=int(tr.get("lstm_epochs", 100)),
            learning_rate=float(tr.get("learning_rate", 1e-2)),
        )
        cell, rec = lstm_train(cell, seqs, lcfg)
        artifacts.save_model(run.path("model.txt"), cell, seed, run.digest)
        run.csv("training.csv", ("epoch", "rmse"), list(enumerate(rec.rmse, start=1)))
        if rec.rmse:
            ep = list(range(1, len(rec.rmse) + 1))
            svgplot.line_plot(
                run.path("rmse.svg"), {"rmse": (ep, rec.rmse)}, title="LSTM training", xlabel="epoch", ylabel="RMSE"
            )
        if rec.clipped_epochs:
            run.notes.append(f"gradient clipped at epochs {rec.clipped_epochs}")
    for name, exc in skipped:
        run.notes.append(f"skipped {name}: {exc}")
    run.manifest()
    return EXIT_OK


# --- sweep --------------------------------------------------------------------


def _sweep_member(task):
    units, grid, scenario, every = task
    try:
        trace = run_simulation(units, grid, scenario, record_every=every)
    except GfmError as exc:
        return ("failed: " + str(exc).replace(",", ";"), math.nan, math.nan, math.nan, math.nan)
    return summary_row(trace, grid)


def _with_param(cfg, units, uid, name, value):
    hits = 0
    out = []
    for u in units:
        if (uid is None or u.id == uid) and name in [f.name for f in dataclasses.fields(PARAM_TYPES[u.law])]:
            u = dataclasses.replace(u, params=dataclasses.replace(u.params, **{name: value}))
            hits += 1
        out.append(u)
    if not hits:
        raise cfg.error(f"no unit has a parameter {name!r}", "sweep.unit")
    return out


def sweep_tasks(cfg):
    sw = config.section(cfg, "sweep", config.SWEEP_KEYS)
    axis = sw.get("axis")
    if axis not in config.SWEEP_AXES:
        raise cfg.error(f"axis must be one of {config.SWEEP_AXES}", "sweep.axis")
    values = sw.get("values")
    if not isinstance(values, list) or not values:
        raise cfg.error("expected a non-empty list", "sweep.values")
    values = [config.number(cfg, v, f"sweep.values[{i}]") for i, v in enumerate(values)]
    scenario = config.scenario_from(cfg)
    grid = config.grid_from(cfg)
    units = config.units_from(cfg)
    every = config.record_every(cfg)
    tasks = []
    for v in values:
        g, sc, us = grid, scenario, units
        try:
            if axis == "x_th":
                g = dataclasses.replace(grid, x_th=v)
            elif axis == "load_r":
                sc = dataclasses.replace(scenario, load_r=v)
            else:
                name = "kp" if axis == "kp" else "d_damp"
                us = _with_param(cfg, units, sw.get("unit"), name, v)
        except GfmError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise cfg.error(str(exc), "sweep.values") from exc
        tasks.append((us, g, sc, every))
    return axis, values, tasks, sw


def cmd_sweep(args):
    cfg = config.load_config(args.config)
    seed = _seed(args, cfg)
    axis, values, tasks, sw = sweep_tasks(cfg)
    tasks = [(u, g, dataclasses.replace(sc, seed=seed), e) for u, g, sc, e in tasks]
    workers = sw.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise cfg.error("expected a positive integer", "sweep.workers")
    run = Run("sweep", cfg, args.out, seed)
    if workers == 1 or len(tasks) == 1:
        results = [_sweep_member(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_member, tasks))  # map keeps axis order
    rows = [(v, *r) for v, r in zip(values, results)]
    run.csv("sweep.csv", (axis, *SUMMARY_COLUMNS), rows)
    run.manifest()
    if all(r[0] != "ok" for r in results):
        print("every sweep member failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="gfmblend", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "run one scenario and write its trace and plots"),
        ("optimize", "select blend weights for a scenario"),
        ("train", "generate a dataset and train a reference generator"),
        ("sweep", "run a scenario across one parameter axis"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if name == "optimize":
            p.add_argument("--oracle", action="store_true", help="also run the brute-force scan")
        if name == "train":
            p.add_argument("--model", choices=("mlp", "lstm"), default="mlp")
    return parser


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "train": cmd_train, "sweep": cmd_sweep}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAbort as exc:
        print(f"simulation aborted at t={exc.time:.6f} s: {exc.cause}", file=sys.stderr)
        return EXIT_RUNTIME
    except NumericFailure as exc:
        where = f" at epoch {exc.epoch}" if exc.epoch is not None else ""
        print(f"numeric failure{where}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (GfmError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure is still a runtime failure
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
