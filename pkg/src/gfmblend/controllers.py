"""Grid-forming control laws: droop, VSM, power synchronisation and VOC.

Two layers live here:

* single-step operations (``vsm_step``, ``voc_step``, ...) that advance one
  controller with its electrical inputs held constant over the step;
* ``LAWS``, flat-vector kernels used by :mod:`gfmblend.network` to integrate
  every unit and the algebraic network together.

Angles are never wrapped; use :func:`wrap_angle` for display only.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, OscillatorCollapseError, VoltageCollapseError
from .integrate import rk4_step
from .sm_model import OMEGA_BASE

TWO_PI = 2.0 * math.pi


def _finite(*names):
    def check(obj):
        for name in names:
            v = getattr(obj, name)
            if v is not None and not math.isfinite(v):
                raise InvalidInputError(f"{type(obj).__name__}.{name} must be finite")

    return check


def _positive_dt(dt):
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidInputError(f"dt must be positive and finite, got {dt!r}")


@dataclass(frozen=True)
class DroopParams:
    kp: float = 3.14159
    kq: float = 0.05
    omega_nom: float = OMEGA_BASE
    v_nom: float = 1.0
    p_ref: float = 0.0
    q_ref: float = 0.0
    tau_filter: float = 0.02

    def __post_init__(self):
        _finite("kp", "kq", "omega_nom", "v_nom", "p_ref", "q_ref", "tau_filter")(self)
        if self.kp < 0 or self.kq < 0 or self.tau_filter < 0:
            raise InvalidInputError("kp, kq and tau_filter must be non-negative")


@dataclass(frozen=True)
class VsmParams:
    h_inertia: float = 0.5
    d_damp: float = 20.0
    p_mech: float = 0.0
    omega_nom: float = OMEGA_BASE
    nq_slope: float = 0.05
    tq_exc: float = 0.1
    v_nom: float = 1.0
    q_ref: float = 0.0

    def __post_init__(self):
        _finite("h_inertia", "d_damp", "p_mech", "omega_nom", "nq_slope", "tq_exc", "v_nom", "q_ref")(self)
        if self.h_inertia <= 0 or self.tq_exc <= 0:
            raise InvalidInputError("h_inertia and tq_exc must be positive")
        if self.d_damp < 0:
            raise InvalidInputError("d_damp must be non-negative")

    @property
    def t_a(self):
        return 2.0 * self.h_inertia


@dataclass(frozen=True)
class PslParams:
    k_pll_p: float = 1.0
    k_pll_i: float = 5.0
    omega_nom: float = OMEGA_BASE
    p_ref: float = 0.0
    kv_prop: float = 0.5
    v_nom: float = 1.0
    tau_v: float = 0.02

    def __post_init__(self):
        _finite("k_pll_p", "k_pll_i", "omega_nom", "p_ref", "kv_prop", "v_nom", "tau_v")(self)
        if min(self.k_pll_p, self.k_pll_i, self.kv_prop) < 0:
            raise InvalidInputError("PSL gains must be non-negative")
        if self.tau_v <= 0:
            raise InvalidInputError("tau_v must be positive")


@dataclass(frozen=True)
class VocParams:
    sigma: float = 1.0
    cap: float = 0.02
    k_i: float = 0.02
    k_v: float = 1.0
    alpha_cubic: float = 2.0 / 3.0
    omega_nom: float = OMEGA_BASE
    v_floor: float = 1e-6

    def __post_init__(self):
        _finite("sigma", "cap", "k_i", "k_v", "alpha_cubic", "omega_nom", "v_floor")(self)
        if min(self.sigma, self.cap, self.k_i, self.k_v, self.alpha_cubic) <= 0:
            raise InvalidInputError("VOC parameters must all be positive")

    @property
    def beta(self):
        return 3.0 * self.alpha_cubic / (self.k_v**2 * self.sigma)

    @property
    def v_equilibrium(self):
        """Unloaded amplitude, the positive root of ``V - beta/2 V^3``."""
        return math.sqrt(2.0 / self.beta)

    def amplitude_at(self, q):
        """Stable amplitude with reactive output ``q`` held constant."""
        # sigma/2C (V^2 - beta/2 V^4) = g q, solved for the larger root in V^2
        disc = 1.0 - 2.0 * self.beta * self.p_gain * q * 2.0 * self.cap / self.sigma
        if disc < 0:
            raise OscillatorCollapseError(f"no oscillator equilibrium at Q={q:.6g} pu")
        return math.sqrt((1.0 + math.sqrt(disc)) / self.beta)

    @property
    def p_gain(self):
        return self.k_i * self.k_v / (2.0 * self.cap)


@dataclass(frozen=True)
class ControllerState:
    theta: float = 0.0
    omega: float = OMEGA_BASE
    v_mag: float = 1.0
    aux_integral: float = 0.0

    def __post_init__(self):
        for name in ("theta", "omega", "v_mag", "aux_integral"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"ControllerState.{name} must be finite")
        if self.v_mag < 0:
            raise VoltageCollapseError(f"negative voltage magnitude {self.v_mag}")


@dataclass(frozen=True)
class SecondaryParams:
    ki_sec: float = 2.0
    eta_mode: int = 0
    k_i_q: float = 0.0
    delta_omega: float = 0.0
    delta_e: float = 0.0

    def __post_init__(self):
        _finite("ki_sec", "k_i_q", "delta_omega", "delta_e")(self)
        if self.eta_mode not in (0, 1) or isinstance(self.eta_mode, bool):
            raise InvalidInputError("eta_mode must be exactly 0 or 1")
        if self.ki_sec < 0:
            raise InvalidInputError("ki_sec must be non-negative")


def wrap_angle(theta):
    return np.mod(theta, TWO_PI)


def lowpass_step(y, u, tau, dt):
    """Exact zero-order-hold update of ``tau*y' = u - y`` (``tau=0`` passes u)."""
    if tau == 0:
        return u
    return u + (y - u) * math.exp(-dt / tau)


# --- droop ---------------------------------------------------------------


def droop_frequency(params, p_filtered):
    return params.omega_nom - params.kp * (p_filtered - params.p_ref)


def integrate_angle(state, omega, dt):
    """Trapezoidal angle update using ``state.omega`` as the previous sample."""
    _positive_dt(dt)
    theta = state.theta + 0.5 * dt * (state.omega + omega)
    return replace(state, theta=theta, omega=omega)


def qv_droop_voltage(params, q_filtered):
    v = params.v_nom - params.kq * (q_filtered - params.q_ref)
    if v < 0:
        raise VoltageCollapseError(f"Q-V droop commands {v:.6g} pu")
    return v


# --- virtual synchronous machine ----------------------------------------


def _rk4_state(state, dt, f, fields):
    y0 = np.array([getattr(state, k) for k in fields])
    y = rk4_step(f, 0.0, y0, dt)
    return replace(state, **{k: float(v) for k, v in zip(fields, y)})


def vsm_step(state, params, p_elec, dt):
    """Swing law ``2H dω/dt = Pm - Pe - D(ω - ω_nom)``, ``dθ/dt = ω``."""
    _positive_dt(dt)
    ta, pm, d, wn = params.t_a, params.p_mech, params.d_damp, params.omega_nom

    def f(_t, y):
        return np.array([y[1], (pm - p_elec - d * (y[1] - wn)) / ta])

    return _rk4_state(state, dt, f, ("theta", "omega"))


def vsm_damped_step(state, params, p_elec, dt):
    """Swing law with damping power ``D/(2π) * Δω`` and ``J*ω0`` lumped into ``2H``."""
    _positive_dt(dt)
    ta, pm, d, wn = params.t_a, params.p_mech, params.d_damp, params.omega_nom

    def f(_t, y):
        return np.array([y[1], (pm - p_elec - d / TWO_PI * (y[1] - wn)) / ta])

    return _rk4_state(state, dt, f, ("theta", "omega"))


def vsm_reactive_step(state, params, q_elec, q_ref, dt):
    _positive_dt(dt)
    target = params.v_nom - params.nq_slope * (q_elec - q_ref)
    tq = params.tq_exc
    v = target + (state.v_mag - target) * math.exp(-dt / tq)
    if v < 0:
        raise VoltageCollapseError(f"VSM excitation commands {v:.6g} pu")
    return replace(state, v_mag=v)


# --- power synchronisation loop -----------------------------------------


def psl_frequency(params, aux_integral, p_meas):
    return params.omega_nom + params.k_pll_p * (params.p_ref - p_meas) + aux_integral


def psl_step(state, params, p_meas, dt):
    """PI on the power error feeding frequency; exact for held ``p_meas``."""
    _positive_dt(dt)
    err = params.p_ref - p_meas
    w0 = psl_frequency(params, state.aux_integral, p_meas)
    aux = state.aux_integral + params.k_pll_i * err * dt
    w1 = psl_frequency(params, aux, p_meas)
    return replace(state, aux_integral=aux, omega=w1, theta=state.theta + 0.5 * dt * (w0 + w1))


def psl_voltage(params, v_meas):
    return params.v_nom + params.kv_prop * (params.v_nom - v_meas)


# --- virtual oscillator control -------------------------------------------


def voc_derivatives(params, v, p_meas, q_meas):
    """Averaged oscillator: returns ``(dV/dt, ω)``."""
    if not v > params.v_floor:
        raise OscillatorCollapseError(f"oscillator amplitude {v:.3g} pu at or below floor")
    s2c = params.sigma / (2.0 * params.cap)
    g = params.p_gain
    dv = s2c * (v - 0.5 * params.beta * v**3) - g * q_meas / v
    omega = params.omega_nom - g * p_meas / (v * v)
    return dv, omega


def voc_step(state, params, p_meas, q_meas, dt):
    _positive_dt(dt)
    voc_derivatives(params, state.v_mag, p_meas, q_meas)

    def f(_t, y):
        dv, w = voc_derivatives(params, y[1], p_meas, q_meas)
        return np.array([w, dv])

    new = _rk4_state(state, dt, f, ("theta", "v_mag"))
    _, w = voc_derivatives(params, new.v_mag, p_meas, q_meas)
    return replace(new, omega=w)


# --- secondary control and mode transition --------------------------------


def secondary_correction(params, omega_history, omega_nom, dt):
    """``K_i * ∫(ω_nom - ω)`` by the trapezoidal rule over a sampled history."""
    _positive_dt(dt)
    w = np.asarray(omega_history, dtype=float)
    if w.size < 2:
        return 0.0
    return params.ki_sec * float(np.trapezoid(omega_nom - w, dx=dt))


def seamless_omega(params, sec, p_meas):
    # sign of the droop term kept as in the mode-transition law, opposite to droop_frequency
    return params.omega_nom + params.kp * (p_meas - params.p_ref) + sec.delta_omega


def seamless_voltage(params, sec, q_meas, q_int):
    v = (
        params.v_nom
        - params.kq * (q_meas - params.q_ref)
        + sec.eta_mode * sec.k_i_q * q_int
        + sec.delta_e
    )
    if v < 0:
        raise VoltageCollapseError(f"seamless voltage law commands {v:.6g} pu")
    return v


def mixed_voc_vsm_theta(theta_voc, theta_vsm):
    if not (math.isfinite(theta_voc) and math.isfinite(theta_vsm)):
        raise InvalidInputError("angles must be finite")
    return 0.5 * (theta_voc + theta_vsm)


# --- flat kernels for the network simulator -------------------------------
#
# Each kernel integrates the angle relative to a rotating frame ``frame``
# (rad/s) so the simulator can keep the state small; with frame=0 the angle
# is absolute.  ``meas`` is (p, q, v_bus).


class DroopLaw:
    name = "droop"
    size = 4  # theta, p_filtered, q_filtered, omega_corr

    def __init__(self, params, secondary=None):
        if params.tau_filter <= 0:
            raise InvalidInputError("simulated droop units need tau_filter > 0")
        self.p = params
        self.ki_sec = secondary.ki_sec if secondary is not None else 0.0

    def initial(self, p0, q0, v0):
        return [0.0, p0, q0, 0.0]

    def omega(self, x, p_meas):
        pr = self.p
        return pr.omega_nom - pr.kp * (x[1] - pr.p_ref) + x[3]

    def angle_voltage(self, x):
        return x[0], qv_droop_voltage(self.p, x[2])

    def derivative(self, x, meas, frame):
        p, q, _ = meas
        pr = self.p
        w = self.omega(x, p)
        tau = pr.tau_filter
        return [w - frame, (p - x[1]) / tau, (q - x[2]) / tau, self.ki_sec * (pr.omega_nom - w)]


class VsmLaw:
    name = "vsm"
    size = 3  # theta, omega, v
    damping_scale = 1.0

    def __init__(self, params, secondary=None):
        self.p = params

    def initial(self, p0, q0, v0):
        return [0.0, self.p.omega_nom, self.p.v_nom]

    def omega(self, x, p_meas):
        return x[1]

    def angle_voltage(self, x):
        return x[0], x[2]

    def derivative(self, x, meas, frame):
        p, q, _ = meas
        pr = self.p
        dw = (pr.p_mech - p - self.damping_scale * pr.d_damp * (x[1] - pr.omega_nom)) / pr.t_a
        dv = (pr.v_nom - pr.nq_slope * (q - pr.q_ref) - x[2]) / pr.tq_exc
        return [x[1] - frame, dw, dv]


class VsmDampedLaw(VsmLaw):
    name = "vsm_damped"
    damping_scale = 1.0 / TWO_PI


class PslLaw:
    name = "psl"
    size = 3  # theta, integral, filtered bus voltage

    def __init__(self, params, secondary=None):
        self.p = params

    def initial(self, p0, q0, v0):
        return [0.0, 0.0, v0]

    def omega(self, x, p_meas):
        return psl_frequency(self.p, x[1], p_meas)

    def angle_voltage(self, x):
        return x[0], psl_voltage(self.p, x[2])

    def derivative(self, x, meas, frame):
        p, _, vbus = meas
        pr = self.p
        return [self.omega(x, p) - frame, pr.k_pll_i * (pr.p_ref - p), (vbus - x[2]) / pr.tau_v]


class VocLaw:
    name = "voc"
    size = 2  # theta, amplitude

    def __init__(self, params, secondary=None):
        self.p = params

    def initial(self, p0, q0, v0):
        return [0.0, self.p.amplitude_at(q0)]

    def omega(self, x, p_meas):
        return voc_derivatives(self.p, x[1], p_meas, 0.0)[1]

    def angle_voltage(self, x):
        return x[0], x[1]

    def derivative(self, x, meas, frame):
        p, q, _ = meas
        dv, w = voc_derivatives(self.p, x[1], p, q)
        return [w - frame, dv]


@dataclass(frozen=True)
class BlendParams:
    """Four sub-controllers driven by the same measurements, outputs mixed by weight."""

    weights: object  # BlendWeights; kept untyped to avoid an import cycle
    droop: DroopParams = DroopParams()
    vsm: VsmParams = VsmParams()
    psl: PslParams = PslParams()
    voc: VocParams = VocParams()


class BlendLaw:
    name = "blend"

    def __init__(self, params, secondary=None):
        from .blend import check_feasible

        ok, violations = check_feasible(params.weights)
        if not ok:
            raise InvalidInputError(f"infeasible blend weights: {violations}")
        w = params.weights
        self.w = (w.alpha, w.beta, w.gamma, w.nu)
        self.parts = (
            DroopLaw(params.droop, secondary),
            VsmLaw(params.vsm),
            PslLaw(params.psl),
            VocLaw(params.voc),
        )
        self.slices = []
        start = 0
        for part in self.parts:
            self.slices.append(slice(start, start + part.size))
            start += part.size
        self.size = start

    def initial(self, p0, q0, v0):
        out = []
        for part in self.parts:
            out.extend(part.initial(p0, q0, v0))
        return out

    def omega(self, x, p_meas):
        return sum(
            wk * part.omega(x[s], p_meas) for wk, part, s in zip(self.w, self.parts, self.slices) if wk
        )

    def angle_voltage(self, x):
        th = e = 0.0
        for wk, part, s in zip(self.w, self.parts, self.slices):
            if wk:
                a, v = part.angle_voltage(x[s])
                th += wk * a
                e += wk * v
        return th, e

    def derivative(self, x, meas, frame):
        out = []
        for wk, part, s in zip(self.w, self.parts, self.slices):
            # unweighted sub-controllers are frozen so they cannot abort the run
            out.extend(part.derivative(x[s], meas, frame) if wk else [0.0] * part.size)
        return out


LAWS = {
    "droop": DroopLaw,
    "vsm": VsmLaw,
    "vsm_damped": VsmDampedLaw,
    "psl": PslLaw,
    "voc": VocLaw,
    "blend": BlendLaw,
}

PARAM_TYPES = {
    "droop": DroopParams,
    "vsm": VsmParams,
    "vsm_damped": VsmParams,
    "psl": PslParams,
    "voc": VocParams,
    "blend": BlendParams,
}
