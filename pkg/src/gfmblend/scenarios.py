"""Bundled study cases and the pure-controller runs that feed the blend objective."""

from dataclasses import dataclass, field

import numpy as np

from .blend import BlendWeights, ObjectiveSpec
from .controllers import BlendParams, DroopParams, PslParams, VocParams, VsmParams
from .network import PLANT_LOAD_R_PU, Event, GridParams, ScenarioSpec, UnitSpec, run_simulation

# blend weight order: alpha, beta, gamma, nu
BLEND_ORDER = ("droop", "vsm", "psl", "voc")


def default_controllers():
    return {
        "droop": DroopParams(kp=3.14159, kq=0.05),
        "vsm": VsmParams(h_inertia=0.5, d_damp=20.0),
        "psl": PslParams(k_pll_p=1.0, k_pll_i=5.0),
        "voc": VocParams(),
    }


@dataclass(frozen=True)
class StudyCase:
    """One scenario run once per pure control law on an otherwise identical network."""

    name: str
    scenario: ScenarioSpec
    grid: GridParams = GridParams()
    controllers: dict = field(default_factory=default_controllers)
    support_units: tuple = ()
    window: tuple = (0.0, None)  # evaluation window (s); None means t_end
    x_coupling: float = 0.05
    # laws whose set-points are dispatched to the t=0 operating point
    auto_setpoint: tuple = BLEND_ORDER
    omega_target: float = 314.159

    def units_for(self, law):
        unit = UnitSpec(
            "gfm",
            law,
            self.controllers[law],
            x_coupling=self.x_coupling,
            auto_setpoint=law in self.auto_setpoint,
        )
        return [unit, *self.support_units]

    def blend_units(self, weights):
        """The blended unit plus supports; dispatched only if every pure law is."""
        c = self.controllers
        params = BlendParams(weights, c["droop"], c["vsm"], c["psl"], c["voc"])
        auto = all(law in self.auto_setpoint for law in BLEND_ORDER)
        unit = UnitSpec("gfm", "blend", params, x_coupling=self.x_coupling, auto_setpoint=auto)
        return [unit, *self.support_units]


def window_mask(t, window):
    t0, t1 = window
    t1 = t[-1] if t1 is None else t1
    return (t >= t0 - 1e-9) & (t <= t1 + 1e-9)


def controller_traces(case, laws=BLEND_ORDER):
    """Frequency of the unit under test for each pure law, restricted to the window.

    Returns ``(traces, objective_spec, sim_traces)`` with ``traces`` shaped (4, n).
    """
    rows = []
    sims = {}
    mask = None
    for law in laws:
        tr = run_simulation(case.units_for(law), case.grid, case.scenario)
        sims[law] = tr
        if mask is None:
            mask = window_mask(tr.t, case.window)
            times = tr.t[mask]
        rows.append(tr.unit("gfm")["omega"][mask])
    spec = ObjectiveSpec(sample_times=times, omega_target=case.omega_target)
    return np.vstack(rows), spec, sims


def _islanded(name, events, t_end=4.0, dt=2e-3, **kw):
    return ScenarioSpec(name, t_end=t_end, dt=dt, events=tuple(events), load_r=PLANT_LOAD_R_PU, **kw)


def reference_case():
    """Islanded plant at constant load with dispatch errors on the non-droop laws.

    Droop is scheduled slightly below the load, the VSM above it with light
    damping, the PSL well below it (its integral channel then drifts, since
    an island cannot absorb the mismatch) and the VOC runs at its free
    frequency.  The window starts after the VSM has settled.
    """
    controllers = {
        "droop": DroopParams(kp=3.14159, kq=0.05, p_ref=0.9),
        "vsm": VsmParams(h_inertia=0.05, d_damp=0.1, p_mech=1.0),
        "psl": PslParams(k_pll_p=1.0, k_pll_i=10.0, p_ref=0.8),
        "voc": VocParams(),
    }
    return StudyCase(
        "reference_dispatch_mismatch",
        scenario=_islanded("reference_dispatch_mismatch", [], t_end=13.0, dt=1e-3),
        controllers=controllers,
        window=(3.0, 13.0),
        auto_setpoint=(),
    )


def reference_start():
    return BlendWeights(0.25, 0.25, 0.25, 0.25)


def _support_droop(uid="aux", kp=3.14159):
    return UnitSpec(uid, "droop", DroopParams(kp=kp, kq=0.05), x_coupling=0.05, auto_setpoint=True)


def benchmark_cases():
    """The scenario families named in the study: surge, drop, overload, outage, fault, islanding."""
    grid_on = GridParams(e_th=1.0, r_th=0.01, x_th=0.1, connected=True)
    grid_off = GridParams(e_th=1.0, r_th=0.01, x_th=0.1, connected=False)
    return [
        StudyCase("load_surge", _islanded("load_surge", [Event(1.0, "load_surge", 0.1)])),
        StudyCase("load_drop", _islanded("load_drop", [Event(1.0, "load_drop", 0.15)])),
        StudyCase("overload", _islanded("overload", [Event(1.0, "overload", 0.3)])),
        StudyCase(
            "generation_outage",
            _islanded("generation_outage", [Event(1.0, "generation_outage", 0.0, unit="aux")]),
            support_units=(_support_droop(),),
        ),
        StudyCase(
            "fault",
            _islanded("fault", [Event(1.0, "fault", 0.3, duration=0.1)]),
            support_units=(_support_droop(),),
        ),
        StudyCase(
            "islanding",
            _islanded("islanding", [Event(1.0, "islanding", 0.0)]),
            grid=grid_on,
        ),
        StudyCase(
            "reconnection",
            _islanded("reconnection", [Event(1.0, "reconnection", 0.0)]),
            grid=grid_off,
        ),
    ]


def equilibrium_case():
    return StudyCase("equilibrium", _islanded("equilibrium", [], t_end=2.0))


DATASET_KINDS = ("load_surge", "load_drop", "overload", "generation_outage", "fault", "islanding")


def dataset_case(kind, seed, t_end=3.0, dt=5e-3):
    """Randomised member of one scenario family; deterministic in ``seed``."""
    rng = np.random.default_rng([seed, DATASET_KINDS.index(kind) if kind in DATASET_KINDS else 99])
    t_ev = round(float(rng.uniform(0.5, 1.0)), 2)
    x_th = float(rng.uniform(0.05, 0.3))
    load_r = float(PLANT_LOAD_R_PU * rng.uniform(0.9, 1.3))
    grid = GridParams(e_th=1.0, r_th=0.01, x_th=x_th, connected=kind == "islanding")
    support = ()
    if kind in ("load_surge", "overload", "load_drop"):
        lo, hi = {"load_surge": (0.05, 0.2), "overload": (0.2, 0.4), "load_drop": (0.05, 0.2)}[kind]
        ev = Event(t_ev, kind, float(rng.uniform(lo, hi)))
    elif kind == "generation_outage":
        ev = Event(t_ev, kind, 0.0, unit="aux")
        support = (_support_droop(kp=float(rng.uniform(2.0, 6.0))),)
    elif kind == "fault":
        ev = Event(t_ev, kind, float(rng.uniform(0.2, 0.6)), duration=0.1)
        support = (_support_droop(),)
    elif kind == "islanding":
        ev = Event(t_ev, kind, 0.0)
    else:
        raise ValueError(f"unknown scenario family {kind!r}")
    sc = ScenarioSpec(f"{kind}_{seed}", t_end=t_end, dt=dt, events=(ev,), load_r=load_r, seed=seed)
    return StudyCase(f"{kind}_{seed}", sc, grid=grid, support_units=support)
