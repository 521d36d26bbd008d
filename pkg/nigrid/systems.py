# ******************
# MODULE DOCSTRING
# ******************

"""

nigrid: nonlinear state-space systems
=====

Generic MIMO systems of the form

    dx/dt = f(x, u),    y = h(x) + g(u)

with an optional storage function V and an output strictness parameter
epsilon, plus numeric checkers for the negative-imaginary (NI) dissipation
inequality

    dV/dt <= u'dh/dt - epsilon |dh/dt|^2

and for the steady-state sign conditions used by the stability results.

Callables ``h``, ``g`` and ``storage`` are evaluated on arrays with leading
batch axes (shape ``(..., n)``); set ``vectorized=False`` on the system when a
user supplied callable only accepts single vectors. ``f`` is always called on
single vectors.

"""

# ****************
# MODULE IMPORTS
# ****************

import logging
from dataclasses import dataclass, asdict
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg

from .exceptions import (ConstructionError, DimensionError, DivergenceError,
                         InsufficientDataError, UnsupportedCheckError)
from .integrators import all_finite, rk4_step, step_count

__all__ = ['PASS', 'FAIL', 'INCONCLUSIVE', 'DynamicSystem', 'SystemTrajectory',
           'DissipationReport', 'ChannelReport', 'SteadyStateReport',
           'evaluate', 'check_channel_independence', 'check_dissipation',
           'check_steady_state_sign', 'simulate_system', 'aggregate_systems',
           'central_difference', 'linear_system']

PASS = 'pass'
FAIL = 'fail'
INCONCLUSIVE = 'inconclusive'

# Largest |f(0,0)|, |h(0)|, |g(0)| accepted as zero at construction
NORMALIZATION_ATOL = 1e-12

# Stored violating times are capped so reports stay small
MAX_REPORTED_TIMES = 100


def _batched(fn, arr, vectorized, out_dim):
    # Apply fn over the leading axes of arr
    if vectorized or arr.ndim == 1:
        return np.asarray(fn(arr), dtype=float)
    flat = arr.reshape(-1, arr.shape[-1])
    res = np.array([np.asarray(fn(a), dtype=float) for a in flat])
    if out_dim is None:
        return res.reshape(arr.shape[:-1])
    return res.reshape(arr.shape[:-1] + (out_dim,))


@dataclass(frozen=True, eq=False)
class DynamicSystem:
    """
    Nonlinear state-space system dx/dt = f(x,u), y = h(x) + g(u)

    Parameters
    ----------
    state_dim : int
        number of states; 0 encodes a static system y = g(u)
    io_dim : int
        number of input and output channels m
    f : callable or None
        dynamics f(x, u) -> dx/dt; must be given when state_dim > 0
    h : callable or None
        state part of the output; None means h = 0
    g : callable or None
        channel-wise input part of the output; None means g = 0
        (no direct feedthrough)
    storage : callable or None
        storage function V(x) >= 0; static systems use V = 0
    osni_epsilon : float
        output strictness claim, 0 means a plain NI claim
    gamma : float or None
        declared steady-state margin (controller role), if any
    linear : tuple or None
        (A, B, C) when the system is linear with g = 0; used by vectorised
        interconnections, the callables stay authoritative
    vectorized : bool
        whether h, g and storage accept leading batch axes
    name : str
        label used in logs and reports

    """

    state_dim: int
    io_dim: int
    f: Optional[Callable] = None
    h: Optional[Callable] = None
    g: Optional[Callable] = None
    storage: Optional[Callable] = None
    osni_epsilon: float = 0.0
    gamma: Optional[float] = None
    linear: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None
    vectorized: bool = True
    name: str = ''

    def __post_init__(self):
        if not isinstance(self.state_dim, (int, np.integer)) or self.state_dim < 0:
            raise ConstructionError(f'state_dim must be a nonnegative integer, got {self.state_dim}')
        if not isinstance(self.io_dim, (int, np.integer)) or self.io_dim < 1:
            raise ConstructionError(f'io_dim must be a positive integer, got {self.io_dim}')
        if self.osni_epsilon < 0.0:
            raise ConstructionError(f'osni_epsilon must be nonnegative, got {self.osni_epsilon}')
        if self.state_dim > 0 and self.f is None:
            raise ConstructionError('a dynamic system needs its dynamics f')
        if self.state_dim == 0 and (self.f is not None or self.h is not None):
            raise ConstructionError('a static system (state_dim = 0) has no f and no h')

        x0 = np.zeros(self.state_dim)
        u0 = np.zeros(self.io_dim)
        if self.state_dim > 0:
            if np.max(np.abs(self.dynamics(x0, u0))) > NORMALIZATION_ATOL:
                raise ConstructionError(f'{self.label}: f(0,0) must be 0')
            if np.max(np.abs(self.output_state(x0))) > NORMALIZATION_ATOL:
                raise ConstructionError(f'{self.label}: h(0) must be 0')
        if np.max(np.abs(self.output_input(u0))) > NORMALIZATION_ATOL:
            raise ConstructionError(f'{self.label}: g(0) must be 0')

    @property
    def label(self):
        return self.name or 'system'

    @property
    def is_static(self):
        return self.state_dim == 0

    @property
    def has_feedthrough(self):
        return self.g is not None

    @property
    def has_storage(self):
        return self.is_static or self.storage is not None

    def dynamics(self, x, u):
        if self.is_static:
            return np.zeros(0)
        return np.asarray(self.f(x, u), dtype=float)

    def output_state(self, x):
        x = np.asarray(x, dtype=float)
        if self.h is None:
            return np.zeros(x.shape[:-1] + (self.io_dim,))
        return _batched(self.h, x, self.vectorized, self.io_dim)

    def output_input(self, u):
        u = np.asarray(u, dtype=float)
        if self.g is None:
            return np.zeros_like(u)
        return _batched(self.g, u, self.vectorized, self.io_dim)

    def output(self, x, u):
        return self.output_state(x) + self.output_input(u)

    def storage_value(self, x):
        """
        V(x), evaluated over leading axes; V = 0 for static systems

        Raises
        ------
        UnsupportedCheckError
            a dynamic system without a storage function

        """
        x = np.asarray(x, dtype=float)
        if self.is_static:
            return np.zeros(x.shape[:-1])
        if self.storage is None:
            raise UnsupportedCheckError(f'{self.label} has no storage function')
        return _batched(self.storage, x, self.vectorized, None)

    def channel_map(self, k, xi):
        """
        Scalar channel k of g, evaluated on the 1-D array xi

        All other channels are held at zero, which is exact for channel-wise g.
        """
        xi = np.asarray(xi, dtype=float)
        if self.g is None:
            return np.zeros_like(xi)
        u = np.zeros(xi.shape + (self.io_dim,))
        u[..., k] = xi
        return self.output_input(u)[..., k]


def linear_system(A, B, C, storage=None, osni_epsilon=0.0, name=''):
    """
    Build a DynamicSystem dx/dt = A x + B u, y = C x

    Parameters
    ----------
    A, B, C : array_like
        system matrices of shapes (n, n), (n, m) and (m, n)

    Returns
    -------
    system : DynamicSystem

    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    if A.shape[0] != A.shape[1] or B.shape[1] != C.shape[0]:
        raise ConstructionError(f'inconsistent shapes A{A.shape} B{B.shape} C{C.shape}')
    Ct = C.T.copy()

    return DynamicSystem(state_dim=A.shape[0], io_dim=C.shape[0],
                         f=lambda x, u: A @ x + B @ u,
                         h=lambda x: x @ Ct,
                         storage=storage, osni_epsilon=osni_epsilon,
                         linear=(A, B, C), name=name)


def _check_dims(system, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (system.state_dim,):
        raise DimensionError(f'{system.label}: state has shape {x.shape}, expected ({system.state_dim},)')
    if u.shape != (system.io_dim,):
        raise DimensionError(f'{system.label}: input has shape {u.shape}, expected ({system.io_dim},)')
    return x, u


def evaluate(system, x, u):
    """
    Evaluate the state derivative and output of a system

    Parameters
    ----------
    system : DynamicSystem
        the system to evaluate
    x : array_like
        state of length state_dim (empty for static systems)
    u : array_like
        input of length io_dim

    Returns
    -------
    xdot : numpy array
        f(x, u)
    y : numpy array
        h(x) + g(u)

    """
    x, u = _check_dims(system, x, u)
    return system.dynamics(x, u), system.output(x, u)


# ******************************
# Trajectories of single systems
# ******************************

@dataclass(frozen=True, eq=False)
class SystemTrajectory:
    """
    Uniformly sampled record of one system: times (S,), states (S, n),
    inputs (S, m)
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.inputs)):
            raise DimensionError('times, states and inputs must have the same length')

    @property
    def samples(self):
        return len(self.times)

    @property
    def dt(self):
        if self.samples < 2:
            raise InsufficientDataError('a single sample has no time step')
        return float(self.times[1] - self.times[0])


def simulate_system(system, x0, u_signal, horizon, dt, t0=0.0):
    """
    Open-loop RK4 simulation of a single system

    Parameters
    ----------
    system : DynamicSystem
        the system to simulate
    x0 : array_like
        initial state
    u_signal : callable or array_like
        input as a function of time, or a constant input vector
    horizon : float
        simulated time span in seconds
    dt : float
        integration step in seconds

    Returns
    -------
    trajectory : SystemTrajectory

    """
    if dt <= 0.0 or horizon < dt:
        raise DimensionError(f'need dt > 0 and horizon >= dt, got dt={dt}, horizon={horizon}')

    if callable(u_signal):
        u_of_t = lambda t: np.asarray(u_signal(t), dtype=float).reshape(system.io_dim)
    else:
        u_const = np.asarray(u_signal, dtype=float).reshape(system.io_dim)
        u_of_t = lambda t: u_const

    x = np.asarray(x0, dtype=float).reshape(system.state_dim)
    steps, dt = step_count(horizon, dt)
    times = t0 + dt * np.arange(steps + 1)
    states = np.empty((steps + 1, system.state_dim))
    inputs = np.empty((steps + 1, system.io_dim))

    rhs = lambda t, z: system.dynamics(z, u_of_t(t))

    states[0] = x
    inputs[0] = u_of_t(times[0])
    for k in range(steps):
        if system.state_dim:
            x = rk4_step(rhs, times[k], x, dt)
            if not all_finite(x):
                raise DivergenceError(f'{system.label}: non-finite state at t = {times[k + 1]}',
                                      time=float(times[k + 1]))
        states[k + 1] = x
        inputs[k + 1] = u_of_t(times[k + 1])

    return SystemTrajectory(times=times, states=states, inputs=inputs)


# ******************************
# Dissipation checks
# ******************************

@dataclass(frozen=True)
class DissipationReport:
    samples: int
    max_violation: float
    violating_times: Tuple[float, ...]
    tolerance: float
    epsilon: float
    verdict: str
    subject: str = ''

    @property
    def passed(self):
        return self.verdict == PASS

    def to_dict(self):
        return asdict(self)


def central_difference(values, dt, stencil=5):
    """
    Central finite-difference derivative on interior samples

    Parameters
    ----------
    values : numpy array
        samples along axis 0
    dt : float
        sample spacing
    stencil : int
        3 (second order) or 5 (fourth order); 5 falls back to 3 when fewer
        than 5 samples are available

    Returns
    -------
    index : numpy array
        indices of the samples the derivative refers to
    derivative : numpy array
        derivative estimates, same trailing shape as values

    """
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n < 3:
        raise InsufficientDataError(f'central differences need at least 3 samples, got {n}')
    if stencil not in (3, 5):
        raise DimensionError(f'stencil must be 3 or 5, got {stencil}')

    if stencil == 5 and n >= 5:
        d = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * dt)
        return np.arange(2, n - 2), d

    d = (v[2:] - v[:-2]) / (2.0 * dt)
    return np.arange(1, n - 1), d


def _residual_report(times, index, residual, tolerance, epsilon, subject):
    if len(residual):
        max_violation = float(np.max(residual))
    else:
        max_violation = 0.0
    bad = index[residual > tolerance]
    verdict = PASS if max_violation <= tolerance else FAIL
    if verdict == FAIL:
        logging.info(f'Dissipation check failed for {subject or "system"}: max residual {max_violation:.3e}')
    return DissipationReport(samples=len(times),
                             max_violation=max_violation,
                             violating_times=tuple(float(times[i]) for i in bad[:MAX_REPORTED_TIMES]),
                             tolerance=float(tolerance),
                             epsilon=float(epsilon),
                             verdict=verdict,
                             subject=subject)


def check_dissipation(system, trajectory, epsilon, tolerance=1e-6, stencil=5):
    """
    Check the NI (epsilon = 0) or OSNI (epsilon > 0) dissipation inequality
    along a recorded trajectory

    The residual r = dV/dt - u'dh/dt + epsilon |dh/dt|^2 is computed with
    central finite differences on interior samples.

    Parameters
    ----------
    system : DynamicSystem
        the system the trajectory belongs to
    trajectory : SystemTrajectory
        synchronised state and input samples
    epsilon : float
        claimed output strictness (>= 0)
    tolerance : float
        largest admitted positive residual

    Returns
    -------
    report : DissipationReport

    """
    if epsilon < 0.0:
        raise DimensionError(f'epsilon must be nonnegative, got {epsilon}')
    if not system.has_storage:
        raise UnsupportedCheckError(f'{system.label} has no storage function')
    if trajectory.samples < 3:
        raise InsufficientDataError(f'dissipation check needs at least 3 samples, got {trajectory.samples}')

    dt = trajectory.dt
    V = system.storage_value(trajectory.states)
    h = system.output_state(trajectory.states)
    index, V_dot = central_difference(V, dt, stencil)
    _, h_dot = central_difference(h, dt, stencil)
    u = trajectory.inputs[index]

    residual = V_dot - np.sum(u * h_dot, axis=1) + epsilon * np.sum(h_dot * h_dot, axis=1)
    return _residual_report(trajectory.times, index, residual, tolerance, epsilon, system.name)


@dataclass(frozen=True)
class ChannelReport:
    samples: int
    verdict: str
    zero_output: bool
    witness: Optional[Tuple[int, int, int, float]] = None

    def to_dict(self):
        return asdict(self)


def check_channel_independence(g, io_dim, sample_count, seed=0, delta=1e-3, tolerance=1e-12):
    """
    Test that g acts channel by channel and that g(0) = 0

    For each random input, each channel j is perturbed by delta; any change in
    an output channel k != j is a violation.

    Parameters
    ----------
    g : callable or None
        map from an io_dim vector to an io_dim vector (None means g = 0)
    io_dim : int
        number of channels
    sample_count : int
        number of random base inputs
    seed : int
        seed of the random generator

    Returns
    -------
    report : ChannelReport
        witness is (sample index, perturbed channel, affected channel, change)

    """
    if sample_count < 1:
        raise DimensionError(f'sample_count must be positive, got {sample_count}')
    if g is None:
        return ChannelReport(samples=sample_count, verdict=PASS, zero_output=True)

    call = lambda u: np.asarray(g(u), dtype=float).reshape(io_dim)
    zero_output = bool(np.max(np.abs(call(np.zeros(io_dim)))) <= tolerance)

    rng = np.random.default_rng(seed)
    base = rng.uniform(-1.0, 1.0, size=(sample_count, io_dim))
    for s, u in enumerate(base):
        y = call(u)
        for j in range(io_dim):
            up = u.copy()
            up[j] += delta
            change = call(up) - y
            change[j] = 0.0
            k = int(np.argmax(np.abs(change)))
            if abs(change[k]) > tolerance:
                logging.info(f'Channel {k} of g depends on input channel {j}')
                return ChannelReport(samples=sample_count, verdict=FAIL, zero_output=zero_output,
                                     witness=(s, j, k, float(change[k])))

    verdict = PASS if zero_output else FAIL
    return ChannelReport(samples=sample_count, verdict=verdict, zero_output=zero_output)


@dataclass(frozen=True)
class SteadyStateReport:
    verdict: str
    role: str
    settled: bool
    settle_time: Optional[float]
    u_bar: Tuple[float, ...]
    y_bar: Tuple[float, ...]
    u_dot_y: float
    bound: float
    margin: Optional[float]

    def to_dict(self):
        return asdict(self)


def check_steady_state_sign(system, u_bar, role, gamma=0.0, settle_time=50.0, tolerance=1e-9,
                            dt=1e-2, window=1.0, rate_tolerance=None):
    """
    Steady-state sign experiment under a constant input

    The system is simulated from x = 0 under u_bar until the output rate stays
    below ``rate_tolerance`` (default: ``tolerance``) for ``window`` seconds.
    A plant must then satisfy u'y >= -tolerance, a controller
    u'y <= -gamma |u|^2 + tolerance.

    Parameters
    ----------
    system : DynamicSystem
        the system under test; dynamic systems need a storage function
    u_bar : array_like
        constant input
    role : str
        'plant' or 'controller'
    gamma : float
        required controller margin
    settle_time : float
        longest simulated time before giving up

    Returns
    -------
    report : SteadyStateReport
        verdict is inconclusive when the output does not settle

    """
    if role not in ('plant', 'controller'):
        raise DimensionError(f"role must be 'plant' or 'controller', got {role!r}")
    if settle_time <= 0.0:
        raise DimensionError(f'settle_time must be positive, got {settle_time}')
    if not system.has_storage:
        raise UnsupportedCheckError(f'{system.label} has no storage function')
    if rate_tolerance is None:
        rate_tolerance = tolerance

    u = np.asarray(u_bar, dtype=float).reshape(system.io_dim)

    settled = True
    t_settled = 0.0
    if system.is_static:
        y = system.output(np.zeros(0), u)
    else:
        x = np.zeros(system.state_dim)
        y = system.output(x, u)
        rhs = lambda t, z: system.dynamics(z, u)
        t = 0.0
        t_quiet = 0.0
        settled = False
        while t < settle_time:
            x = rk4_step(rhs, t, x, dt)
            t += dt
            y_next = system.output(x, u)
            if not all_finite(y_next):
                break
            if np.linalg.norm(y_next - y) / dt >= rate_tolerance:
                t_quiet = t
            y = y_next
            if t - t_quiet >= window:
                settled = True
                t_settled = t_quiet
                break

    u_dot_y = float(u @ y)
    uu = float(u @ u)
    margin = -u_dot_y / uu if uu > 0.0 else None
    if role == 'plant':
        bound = -tolerance
        ok = u_dot_y >= bound
    else:
        bound = -gamma * uu + tolerance
        ok = u_dot_y <= bound

    if not settled:
        verdict = INCONCLUSIVE
        logging.warning(f'{system.label}: output did not settle within {settle_time} s')
    else:
        verdict = PASS if ok else FAIL

    return SteadyStateReport(verdict=verdict, role=role, settled=settled,
                             settle_time=t_settled if settled else None,
                             u_bar=tuple(u.tolist()), y_bar=tuple(np.asarray(y).tolist()),
                             u_dot_y=u_dot_y, bound=float(bound), margin=margin)


# ******************************
# Aggregation
# ******************************

def _block_slices(sizes):
    edges = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [slice(edges[i], edges[i + 1]) for i in range(len(sizes))]


def aggregate_systems(systems, name='aggregate'):
    """
    Stack systems into one block-diagonal system

    The aggregate uses V = sum of V_i and epsilon = min epsilon_i, so it is NI
    (OSNI) whenever every member is.

    Parameters
    ----------
    systems : list of DynamicSystem
        members, in stacking order

    Returns
    -------
    system : DynamicSystem

    """
    systems = list(systems)
    if not systems:
        raise ConstructionError('cannot aggregate an empty list of systems')

    xs = _block_slices([s.state_dim for s in systems])
    us = _block_slices([s.io_dim for s in systems])
    n = sum(s.state_dim for s in systems)
    m = sum(s.io_dim for s in systems)
    dynamic = [(s, xsl, usl) for s, xsl, usl in zip(systems, xs, us) if s.state_dim]

    def f(x, u):
        out = np.empty(n)
        for s, xsl, usl in dynamic:
            out[xsl] = s.dynamics(x[xsl], u[usl])
        return out

    def h(x):
        return np.concatenate([s.output_state(x[..., xsl]) for s, xsl in zip(systems, xs)], axis=-1)

    def g(u):
        return np.concatenate([s.output_input(u[..., usl]) for s, usl in zip(systems, us)], axis=-1)

    def storage(x):
        return sum(s.storage_value(x[..., xsl]) for s, xsl in zip(systems, xs))

    linear = None
    if all(s.linear is not None for s in systems):
        linear = tuple(scipy.linalg.block_diag(*[s.linear[i] for s in systems]) for i in range(3))

    return DynamicSystem(state_dim=n, io_dim=m,
                         f=f if n else None,
                         h=h if n else None,
                         g=g if any(s.has_feedthrough for s in systems) else None,
                         storage=storage if all(s.has_storage for s in systems) and n else None,
                         osni_epsilon=min(s.osni_epsilon for s in systems),
                         linear=linear, name=name)
