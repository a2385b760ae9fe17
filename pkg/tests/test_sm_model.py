import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfmblend.errors import InvalidInputError, SingularityError
from gfmblend.sm_model import (
    SmParams,
    SmState,
    effective_reactance,
    simulate_step_reactance,
    sm_swing_step,
    sm_voltage_fixed_point,
    sm_voltage_step,
    swing_acceleration,
)

P = SmParams()


def run_voltage(e0, ef, ir, t_end, dt, params=P):
    s = SmState(e_int=e0)
    for _ in range(int(round(t_end / dt))):
        s = sm_voltage_step(s, params, ef, ir, dt)
    return s.e_int


def test_params_validation():
    with pytest.raises(InvalidInputError):
        SmParams(xd=0.2, xd_tr=0.3)
    with pytest.raises(InvalidInputError):
        SmParams(td0_tr=0.0)
    with pytest.raises(InvalidInputError):
        SmParams(reactive_sign=0)
    with pytest.raises(InvalidInputError):
        SmState(e_int=-0.1)


@pytest.mark.parametrize("dt", [1e-3, 0.1, 1.0])
def test_voltage_equilibrium_holds(dt):
    assert sm_voltage_step(SmState(e_int=1.0), P, 1.0, 0.0, dt).e_int == 1.0


def test_voltage_first_order_lag_after_one_time_constant():
    e = run_voltage(0.0, 1.0, 0.0, 5.0, 1e-3)
    assert e == pytest.approx(1.0 - math.exp(-1.0), abs=1e-10)


def test_voltage_fixed_point_with_reactive_current():
    assert sm_voltage_fixed_point(P, 1.0, 0.5) == pytest.approx(1.75)
    e = run_voltage(1.0, 1.0, 0.5, 200.0, 0.05)
    assert e == pytest.approx(1.75, abs=1e-9)


def test_conventional_sign_flag():
    conv = SmParams(reactive_sign=-1)
    assert sm_voltage_fixed_point(conv, 1.0, 0.5) == pytest.approx(0.25)


def test_voltage_error_decays_at_time_constant_rate():
    dt, n = 0.01, 1000
    s = SmState(e_int=0.2)
    t, err = [], []
    for k in range(n):
        t.append(k * dt)
        err.append(abs(s.e_int - 1.75))
        s = sm_voltage_step(s, P, 1.0, 0.5, dt)
    slope = np.polyfit(t, np.log(err), 1)[0]
    assert -slope == pytest.approx(1.0 / P.td0_tr, rel=0.05)


def test_voltage_rejects_non_finite_and_bad_dt():
    with pytest.raises(InvalidInputError):
        sm_voltage_step(SmState(), P, math.nan, 0.0, 1e-3)
    with pytest.raises(InvalidInputError):
        sm_voltage_step(SmState(), P, 1.0, 0.0, 0.0)


def test_swing_balanced_torque_advances_angle_only():
    s = sm_swing_step(SmState(), P, 1.0, 1.0, 1e-3)
    assert s.omega == P.omega_nom
    assert s.theta == pytest.approx(P.omega_nom * 1e-3, rel=1e-14)


def test_swing_acceleration_scalar():
    a = swing_acceleration(P, 314.159, 1.1, 1.0)
    assert a == pytest.approx(0.1 / (0.1 * 314.159), rel=1e-12)
    assert a == pytest.approx(3.183e-3, rel=1e-3)
    assert swing_acceleration(P, 314.159, 0.9, 1.0) == pytest.approx(-a)


def test_swing_step_matches_acceleration():
    dt = 1e-4
    s = sm_swing_step(SmState(), P, 1.1, 1.0, dt)
    assert (s.omega - P.omega_nom) / dt == pytest.approx(3.183e-3, rel=1e-3)


def test_swing_singular_at_zero_speed():
    with pytest.raises(SingularityError):
        sm_swing_step(SmState(omega=0.0), P, 1.0, 1.0, 1e-3)


def test_effective_reactance_values():
    assert effective_reactance(P, 0.0) == P.xd_tr
    assert abs(effective_reactance(P, 100 * P.td0_tr) - P.xd) < 1e-9
    assert effective_reactance(P, 5.0) == pytest.approx(1.8 - 1.5 * math.exp(-1.0), abs=1e-12)
    assert effective_reactance(P, 5.0) == pytest.approx(1.2482, abs=1e-4)
    with pytest.raises(InvalidInputError):
        effective_reactance(P, -1.0)


@settings(max_examples=60, deadline=None)
@given(t1=st.floats(0, 50), t2=st.floats(0, 50))
def test_effective_reactance_monotone_and_bounded(t1, t2):
    x1, x2 = effective_reactance(P, t1), effective_reactance(P, t2)
    assert P.xd_tr <= x1 <= P.xd
    if t1 < t2:
        assert x1 <= x2


@pytest.mark.parametrize("sign", [1, -1])
def test_step_reactance_matches_closed_form(sign):
    params = SmParams(reactive_sign=sign)
    t, x = simulate_step_reactance(params, 5 * params.td0_tr, dt=1e-2)
    closed = np.array([effective_reactance(params, v) for v in t])
    assert np.max(np.abs(x - closed)) < 1e-8


def test_voltage_integrator_is_fourth_order():
    exact = 1.75 + (0.0 - 1.75) * math.exp(-2.0 / P.td0_tr)
    e1 = abs(run_voltage(0.0, 1.0, 0.5, 2.0, 0.4) - exact)
    e2 = abs(run_voltage(0.0, 1.0, 0.5, 2.0, 0.2) - exact)
    assert e1 / e2 == pytest.approx(16.0, rel=0.2)
