"""Reduced one-axis (third-order) synchronous machine.

The machine is the benchmark the grid-forming laws emulate: a first-order
field-flux lag for the internal voltage and a swing equation written with
the speed-dependent inertia term ``J * omega * domega/dt``.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, SingularityError
from .integrate import rk4_step

OMEGA_BASE = 314.159
V_BASE_LL = 480.0


@dataclass(frozen=True)
class SmParams:
    xd: float = 1.8
    xd_tr: float = 0.3
    td0_tr: float = 5.0
    j_inertia: float = 0.1
    omega_nom: float = OMEGA_BASE
    # +1 adds the reactive-current term to the flux dynamic; -1 gives the
    # textbook demagnetising sign.
    reactive_sign: int = 1

    def __post_init__(self):
        for name in ("xd", "xd_tr", "td0_tr", "j_inertia", "omega_nom"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")
        if not self.xd > self.xd_tr > 0:
            raise InvalidInputError("need xd > xd_tr > 0")
        if self.td0_tr <= 0 or self.j_inertia <= 0 or self.omega_nom <= 0:
            raise InvalidInputError("td0_tr, j_inertia and omega_nom must be positive")
        if self.reactive_sign not in (1, -1):
            raise InvalidInputError("reactive_sign must be +1 or -1")


@dataclass(frozen=True)
class SmState:
    e_int: float = 1.0
    omega: float = OMEGA_BASE
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.e_int, self.omega, self.theta)):
            raise InvalidInputError("machine state must be finite")
        if self.e_int < 0:
            raise InvalidInputError("internal voltage must be non-negative")


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} is not finite: {v!r}")


def _check_dt(dt):
    _check_finite(dt=dt)
    if dt <= 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")


def sm_voltage_step(state, params, e_field, i_reactive, dt):
    """Advance ``Td0' dE/dt = -E + Ef + s*(xd - xd')*Ir`` by one RK4 step."""
    _check_finite(e_field=e_field, i_reactive=i_reactive)
    _check_dt(dt)
    target = e_field + params.reactive_sign * (params.xd - params.xd_tr) * i_reactive
    tau = params.td0_tr

    def f(_t, y):
        return (target - y) / tau

    e_new = float(rk4_step(f, 0.0, np.float64(state.e_int), dt))
    return replace(state, e_int=e_new)


def sm_voltage_fixed_point(params, e_field, i_reactive):
    return e_field + params.reactive_sign * (params.xd - params.xd_tr) * i_reactive


def sm_swing_step(state, params, p_mech, p_elec, dt):
    """Advance ``J*omega*domega/dt = Pm - Pe`` and ``dtheta/dt = omega``."""
    _check_finite(p_mech=p_mech, p_elec=p_elec)
    _check_dt(dt)
    if state.omega <= 0:
        raise SingularityError("swing equation is singular at omega <= 0")
    j = params.j_inertia
    accel = p_mech - p_elec

    def f(_t, y):
        if y[0] <= 0:
            raise SingularityError("rotor speed crossed zero inside the step")
        return np.array([accel / (j * y[0]), y[0]])

    omega, theta = rk4_step(f, 0.0, np.array([state.omega, state.theta]), dt)
    return replace(state, omega=float(omega), theta=float(theta))


def swing_acceleration(params, omega, p_mech, p_elec):
    if omega <= 0:
        raise SingularityError("swing equation is singular at omega <= 0")
    return (p_mech - p_elec) / (params.j_inertia * omega)


def effective_reactance(params, t):
    """Step-current reactance ``xd - (xd - xd') * exp(-t / Td0')``."""
    _check_finite(t=t)
    if t < 0:
        raise InvalidInputError("t must be non-negative")
    # written from the transient end so t=0 returns xd' exactly
    return params.xd_tr - (params.xd - params.xd_tr) * math.expm1(-t / params.td0_tr)


def simulate_step_reactance(params, t_end, dt=1e-3, i_step=1.0, e_field=None):
    """Apply a current step at t=0 and read the reactance off the flux dynamic.

    The terminal drop is ``xd' * I`` instantly plus the slow internal-voltage
    excursion, so ``x(t) = xd' + |E(t) - Ef| / I``.
    """
    if i_step == 0:
        raise InvalidInputError("current step must be non-zero")
    if e_field is None:
        # keep E(t) positive under either sign convention
        e_field = 1.0 + (params.xd - params.xd_tr) * abs(i_step)
    n = int(round(t_end / dt))
    times = dt * np.arange(n + 1)
    x = np.empty(n + 1)
    state = SmState(e_int=e_field)
    for k in range(n + 1):
        x[k] = params.xd_tr + abs(state.e_int - e_field) / abs(i_step)
        if k < n:
            state = sm_voltage_step(state, params, e_field, i_step, dt)
    return times, x
