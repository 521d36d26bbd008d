"""
Fixed-step one-step integrators.

A right-hand side is any callable ``rhs(t, z) -> dz`` on flat numpy arrays.
The stage derivative at the start of the step may be passed in to avoid
evaluating it twice when the caller already has it.
"""

import math

import numpy as np

__all__ = ['rk4_step', 'euler_step', 'STEPPERS', 'step_count', 'all_finite']


def rk4_step(rhs, t, z, dt, k1=None):
    if k1 is None:
        k1 = rhs(t, z)
    half = 0.5 * dt
    k2 = rhs(t + half, z + half * k1)
    k3 = rhs(t + half, z + half * k2)
    k4 = rhs(t + dt, z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_step(rhs, t, z, dt, k1=None):
    if k1 is None:
        k1 = rhs(t, z)
    return z + dt * k1


STEPPERS = {'rk4': rk4_step, 'euler': euler_step}


def step_count(horizon, dt):
    """
    Number of uniform steps covering ``horizon`` and the step actually used.

    When the horizon is not a whole multiple of ``dt`` the count is rounded up
    and the step shrunk so that the last sample lands exactly on the horizon.

    Returns
    -------
    steps : int
    dt_used : float

    """
    ratio = horizon / dt
    steps = int(round(ratio))
    if steps < 1 or not math.isclose(steps, ratio, rel_tol=1e-9, abs_tol=0.0):
        steps = max(1, int(math.ceil(ratio)))
        return steps, horizon / steps
    return steps, float(dt)


def all_finite(z):
    return bool(np.all(np.isfinite(z)))
