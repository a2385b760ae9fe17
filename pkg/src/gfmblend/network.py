"""Quasi-static phasor network and the fixed-step scenario simulator.

Topology: every unit is an internal voltage source ``E_i∠θ_i`` behind its
coupling reactance, all tied to one common bus.  The bus carries a constant
resistive load and, when connected, a Thevenin grid ``E_th`` behind
``R_th + jX_th``.  The bus voltage follows from one nodal equation each
time the right-hand side is evaluated; only controller states are dynamic.
The whole system (all units plus the algebraic network) is advanced with
classical RK4.
"""

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .controllers import LAWS, PARAM_TYPES, BlendParams, SecondaryParams
from .errors import ConfigError, GfmError, InvalidInputError, SimulationAbort, TransferLimitError
from .sm_model import OMEGA_BASE

TWO_PI = 2.0 * math.pi

# Islanded reference plant: 480 V bus feeding a 1.1 ohm three-phase load.
# Base power is chosen so the load is ~0.91 pu; DC link and switching
# frequency cannot be expressed by an average model and are kept as metadata.
PLANT = {
    "v_base_ll": 480.0,
    "s_base": 230e3,
    "load_ohm": 1.1,
    "dc_link_v": 800.0,
    "switching_hz": 20e3,
    "lcl_l_h": 0.5e-3,
    "lcl_c_f": 100e-6,
}
Z_BASE = PLANT["v_base_ll"] ** 2 / PLANT["s_base"]
PLANT_LOAD_R_PU = PLANT["load_ohm"] / Z_BASE

EVENT_KINDS = (
    "load_surge",
    "load_drop",
    "overload",
    "generation_outage",
    "fault",
    "islanding",
    "reconnection",
)

TRACE_FIELDS = ("p", "q", "v", "omega", "theta", "freq_hz")


def power_flow_angle(v1, v2, x, delta):
    """Active power over a lossless reactance, ``V1 V2 / X * sin(delta)``."""
    if not x > 0:
        raise InvalidInputError(f"reactance must be positive, got {x}")
    return v1 * v2 / x * math.sin(delta)


def angle_from_power(p, v1, v2, x):
    if not x > 0:
        raise InvalidInputError(f"reactance must be positive, got {x}")
    if v1 * v2 == 0:
        raise TransferLimitError("zero voltage: no power can be transferred")
    s = p * x / (v1 * v2)
    if abs(s) > 1.0:
        raise TransferLimitError(
            f"P={p:.6g} pu exceeds the transfer limit {v1 * v2 / x:.6g} pu of X={x:.6g} pu"
        )
    return math.asin(s)


def sharing_ratio(kp_i, kp_j):
    """Steady-state ``P_i / P_j`` for two droop units, equal to ``kp_j / kp_i``."""
    if kp_i == 0:
        raise ZeroDivisionError("kp_i must be non-zero")
    return kp_j / kp_i


@dataclass(frozen=True)
class GridParams:
    e_th: float = 1.0
    r_th: float = 0.0
    x_th: float = 0.1
    omega_grid: float = OMEGA_BASE
    connected: bool = False

    def __post_init__(self):
        if self.e_th < 0:
            raise InvalidInputError("e_th must be non-negative")
        if self.connected and not self.x_th > 0:
            raise InvalidInputError("x_th must be positive when the grid is connected")
        if self.r_th < 0:
            raise InvalidInputError("r_th must be non-negative")


@dataclass(frozen=True)
class UnitSpec:
    id: str
    law: str
    params: object
    x_coupling: float = 0.02
    rating: float = PLANT["s_base"]
    secondary: SecondaryParams = None
    # dispatch set-points (p_ref, q_ref, p_mech) to the t=0 operating point
    auto_setpoint: bool = False

    def __post_init__(self):
        if self.law not in LAWS:
            raise InvalidInputError(f"unknown control law {self.law!r}")
        if not isinstance(self.params, PARAM_TYPES[self.law]):
            raise InvalidInputError(
                f"unit {self.id}: law {self.law} needs {PARAM_TYPES[self.law].__name__}"
            )
        if not self.x_coupling > 0 or not self.rating > 0:
            raise InvalidInputError("x_coupling and rating must be positive")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    magnitude: float = 0.0
    duration: float = 0.1  # fault only
    unit: str = None  # generation_outage only; default is the last online unit

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ConfigError(f"unknown event kind {self.kind!r}", field="kind")
        if self.kind == "fault" and not self.duration > 0:
            raise ConfigError("fault duration must be positive", field="duration")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    t_end: float
    dt: float = 1e-3
    events: tuple = ()
    load_r: float = PLANT_LOAD_R_PU
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.dt > 0:
            raise InvalidInputError("dt must be positive")
        if not self.t_end > 0:
            raise InvalidInputError("t_end must be positive")
        if not self.load_r > 0:
            raise InvalidInputError("load_r must be positive (use inf for no load)")
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidInputError("event times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] > self.t_end):
            raise InvalidInputError("event times must lie within [0, t_end]")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class SimTrace:
    t: np.ndarray
    unit_ids: list
    series: dict  # unit id -> {field: array}
    bus_v: np.ndarray
    connected: np.ndarray
    grid_angle: np.ndarray

    def unit(self, uid):
        return self.series[uid]

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class SimState:
    """Discrete (event-driven) part of the simulation state."""

    load_g: float
    connected: bool
    online: tuple
    fault_v: float = None
    fault_end: float = None


def _step_index(t, dt):
    # first grid point at or after t, tolerant of representation error
    return int(math.ceil(t / dt - 1e-9))


def apply_event(state, event, unit_ids=None):
    """Return the simulation state after ``event``; never mutates ``state``."""
    kind, m = event.kind, event.magnitude
    if kind in ("load_surge", "overload"):
        return replace(state, load_g=state.load_g + m)
    if kind == "load_drop":
        g = state.load_g - m
        if g < 0:
            raise ConfigError(f"load_drop of {m} pu exceeds the connected load", field="magnitude")
        return replace(state, load_g=g)
    if kind == "islanding":
        return replace(state, connected=False)
    if kind == "reconnection":
        return replace(state, connected=True)
    if kind == "fault":
        if m < 0:
            raise ConfigError("fault voltage must be non-negative", field="magnitude")
        return replace(state, fault_v=m, fault_end=event.time + event.duration)
    if kind == "generation_outage":
        online = list(state.online)
        if event.unit is None:
            idx = max(i for i, on in enumerate(online) if on) if any(online) else None
        else:
            if unit_ids is None or event.unit not in unit_ids:
                raise ConfigError(f"unknown unit {event.unit!r}", field="unit")
            idx = unit_ids.index(event.unit)
        if idx is None or not online[idx]:
            raise ConfigError("generation_outage targets no online unit", field="unit")
        online[idx] = False
        if not any(online):
            raise ConfigError("generation_outage would remove the last unit", field="unit")
        return replace(state, online=tuple(online))
    raise ConfigError(f"unknown event kind {kind!r}", field="kind")


def solve_bus(sources, load_g, grid_src, fault_v=None):
    """Bus voltage phasor for sources ``[(E_complex, x)]`` and optional ``(E_complex, Z)`` grid."""
    num = 0j
    den = complex(load_g, 0.0)
    for e, x in sources:
        y = -1j / x
        num += e * y
        den += y
    if grid_src is not None:
        eg, z = grid_src
        num += eg / z
        den += 1.0 / z
    if den == 0:
        raise InvalidInputError("floating bus: no source, load or grid attached")
    vb = num / den
    if fault_v is not None:
        mag = abs(vb)
        vb = fault_v * (vb / mag if mag > 0 else 1.0)
    return vb


class _System:
    """Flat state vector, derivative and network evaluation for one run."""

    def __init__(self, units, grid, scenario):
        self.units = units
        self.grid = grid
        self.frame = OMEGA_BASE
        self.laws = [LAWS[u.law](u.params, u.secondary) for u in units]
        self.offsets = []
        n = 0
        for law in self.laws:
            self.offsets.append(n)
            n += law.size
        self.size = n
        self.z_grid = complex(grid.r_th, grid.x_th)

    def seg(self, y, i):
        o = self.offsets[i]
        return y[o : o + self.laws[i].size]

    def network(self, y, t, st):
        sources = []
        emfs = []
        for i, law in enumerate(self.laws):
            if not st.online[i]:
                emfs.append(None)
                continue
            th, e = law.angle_voltage(self.seg(y, i))
            ec = cmath.rect(e, th)
            emfs.append(ec)
            sources.append((ec, self.units[i].x_coupling))
        grid_src = None
        if st.connected:
            ang = (self.grid.omega_grid - self.frame) * t
            grid_src = (cmath.rect(self.grid.e_th, ang), self.z_grid)
        vb = solve_bus(sources, st.load_g, grid_src, st.fault_v)
        meas = []
        for i, ec in enumerate(emfs):
            if ec is None:
                meas.append((0.0, 0.0, abs(vb)))
                continue
            cur = (ec - vb) / (1j * self.units[i].x_coupling)
            s = ec * cur.conjugate()
            meas.append((s.real, s.imag, abs(vb)))
        return vb, emfs, meas, grid_src

    def deriv(self, y, t, st):
        _, _, meas, _ = self.network(y, t, st)
        out = []
        for i, law in enumerate(self.laws):
            if st.online[i]:
                out.extend(law.derivative(self.seg(y, i), meas[i], self.frame))
            else:
                out.extend([0.0] * law.size)
        return out

    def rk4(self, y, t, dt, st):
        k1 = self.deriv(y, t, st)
        y2 = [a + 0.5 * dt * b for a, b in zip(y, k1)]
        k2 = self.deriv(y2, t + 0.5 * dt, st)
        y3 = [a + 0.5 * dt * b for a, b in zip(y, k2)]
        k3 = self.deriv(y3, t + 0.5 * dt, st)
        y4 = [a + dt * b for a, b in zip(y, k3)]
        k4 = self.deriv(y4, t + dt, st)
        h = dt / 6.0
        return [a + h * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def _dispatch(unit, p0, q0):
    """Move a unit's set-points to the measured operating point."""
    pr = unit.params
    law = unit.law
    if law == "droop":
        pr = replace(pr, p_ref=p0, q_ref=q0)
    elif law in ("vsm", "vsm_damped"):
        pr = replace(pr, p_mech=p0, q_ref=q0)
    elif law == "psl":
        pr = replace(pr, p_ref=p0)
    elif law == "voc":
        v = pr.amplitude_at(q0)
        pr = replace(pr, omega_nom=pr.omega_nom + pr.p_gain * p0 / (v * v))
    elif law == "blend":
        sub = {}
        for name, sublaw in (("droop", "droop"), ("vsm", "vsm"), ("psl", "psl"), ("voc", "voc")):
            tmp = UnitSpec(unit.id, sublaw, getattr(pr, name), unit.x_coupling, unit.rating)
            sub[name] = _dispatch(tmp, p0, q0).params
        pr = replace(pr, **sub)
    return replace(unit, params=pr)


def initialize(units, grid, scenario, max_passes=200, tol=1e-14):
    """Flat start: all angles zero, filters and set-points seeded from the network.

    Measurements and seeded states are iterated to a fixed point (change
    below ``tol`` or ``max_passes`` sweeps).  Returns the (possibly
    re-dispatched) units, the initial state vector and the discrete state.
    """
    st = SimState(
        load_g=0.0 if math.isinf(scenario.load_r) else 1.0 / scenario.load_r,
        connected=grid.connected,
        online=tuple(True for _ in units),
    )
    meas = [(0.0, 0.0, 1.0)] * len(units)
    cur = list(units)
    y = None
    for _ in range(max_passes):
        cur = [_dispatch(u, m[0], m[1]) if u.auto_setpoint else u for u, m in zip(units, meas)]
        sysm = _System(cur, grid, scenario)
        y = []
        for law, m in zip(sysm.laws, meas):
            y.extend(law.initial(*m))
        _, _, new, _ = sysm.network(y, 0.0, st)
        change = max(abs(a - b) for m0, m1 in zip(meas, new) for a, b in zip(m0, m1))
        meas = new
        if change < tol:
            break
    return cur, y, st


def run_simulation(units, grid, scenario, record_every=1):
    """Simulate ``scenario`` and return the full :class:`SimTrace`.

    Events act at the first grid point at or after their time, before the
    integration step leaving that point.  Errors from the control laws or the
    network abort the run with :class:`SimulationAbort` carrying the time.
    """
    if not units:
        raise InvalidInputError("at least one unit is required")
    ids = [u.id for u in units]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("unit ids must be unique")
    if any(e.kind == "reconnection" for e in scenario.events) and not grid.x_th > 0:
        raise InvalidInputError("reconnection needs a grid with x_th > 0")

    dt = scenario.dt
    n = scenario.n_steps
    try:
        units, y, st = initialize(units, grid, scenario)
    except GfmError as exc:
        raise SimulationAbort(0.0, exc) from exc
    sysm = _System(units, grid, scenario)
    pending = sorted(((_step_index(e.time, dt), i, e) for i, e in enumerate(scenario.events)))
    fault_end_k = None

    n_rec = n // record_every + 1
    t_rec = np.empty(n_rec)
    series = {uid: {f: np.empty(n_rec) for f in TRACE_FIELDS} for uid in ids}
    bus_v = np.empty(n_rec)
    conn = np.empty(n_rec, dtype=bool)
    grid_angle = np.empty(n_rec)
    frozen = {}

    ev_pos = 0
    for k in range(n + 1):
        t = k * dt
        try:
            if fault_end_k is not None and k >= fault_end_k:
                st = replace(st, fault_v=None, fault_end=None)
                fault_end_k = None
            while ev_pos < len(pending) and pending[ev_pos][0] <= k:
                ev = pending[ev_pos][2]
                st = apply_event(st, ev, ids)
                if ev.kind == "fault":
                    fault_end_k = _step_index(st.fault_end, dt)
                ev_pos += 1
            if k % record_every == 0:
                r = k // record_every
                vb, emfs, meas, _ = sysm.network(y, t, st)
                t_rec[r] = t
                bus_v[r] = abs(vb)
                conn[r] = st.connected
                grid_angle[r] = grid.omega_grid * t
                for i, (uid, law) in enumerate(zip(ids, sysm.laws)):
                    s = series[uid]
                    if not st.online[i]:
                        w, th = frozen.setdefault(uid, (s["omega"][r - 1], s["theta"][r - 1]))
                        p = q = v = 0.0
                    else:
                        seg = sysm.seg(y, i)
                        p, q, _ = meas[i]
                        w = law.omega(seg, p)
                        th = law.angle_voltage(seg)[0] + sysm.frame * t
                        v = abs(emfs[i])
                    s["p"][r], s["q"][r], s["v"][r] = p, q, v
                    s["omega"][r], s["theta"][r], s["freq_hz"][r] = w, th, w / TWO_PI
            if k < n:
                y = sysm.rk4(y, t, dt, st)
                if not all(math.isfinite(v) for v in y):
                    raise InvalidInputError("state became non-finite")
        except SimulationAbort:
            raise
        except (GfmError, ZeroDivisionError, OverflowError) as exc:
            raise SimulationAbort(t, exc) from exc
    return SimTrace(t_rec, ids, series, bus_v, conn, grid_angle)


def steady_value(trace, uid, name, window=0.5):
    """Mean of a unit series over the final ``window`` seconds."""
    mask = trace.t >= trace.t[-1] - window - 1e-12
    return float(np.mean(trace.series[uid][name][mask]))


def power_balance(units, grid, scenario, y, t, st):
    """Return ``(sum unit P, load P, grid P)`` at one state; used by tests."""
    sysm = _System(units, grid, scenario)
    vb, _, meas, grid_src = sysm.network(y, t, st)
    p_units = math.fsum(m[0] for i, m in enumerate(meas) if st.online[i])
    p_load = st.load_g * abs(vb) ** 2
    p_grid = 0.0
    if grid_src is not None:
        eg, z = grid_src
        p_grid = (vb * ((vb - eg) / z).conjugate()).real
    return p_units, p_load, p_grid
