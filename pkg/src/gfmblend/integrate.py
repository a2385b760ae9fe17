"""Fixed-step explicit integrators."""

import numpy as np


def rk4_step(f, t, y, dt):
    """One classical Runge-Kutta step of ``y' = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_step(f, t, y, dt):
    return y + dt * f(t, y)


def integrate(f, y0, t_end, dt, t0=0.0, method=rk4_step):
    """Integrate on a uniform grid; returns ``(times, states)`` including ``y0``.

    The step count is ``round((t_end - t0) / dt)`` so callers should pass a
    ``dt`` that divides the interval.
    """
    n = int(round((t_end - t0) / dt))
    y = np.asarray(y0, dtype=float)
    out = np.empty((n + 1,) + y.shape)
    out[0] = y
    for k in range(n):
        y = method(f, t0 + k * dt, y, dt)
        out[k + 1] = y
    return t0 + dt * np.arange(n + 1), out
