# ******************
# MODULE DOCSTRING
# ******************

"""

nigrid: simulation engine
=====

Fixed-step integration of interconnections, trajectory records carrying every
wiring signal, consensus detection, and the grid experiment driver that
gathers all certificate checks of one run into a RunReport.

"""

# ****************
# MODULE IMPORTS
# ****************

import logging
import multiprocessing
from dataclasses import dataclass, field, asdict, replace
from typing import Optional

import numpy as np

from . import grid
from .exceptions import DimensionError, DivergenceError, InsufficientDataError
from .integrators import STEPPERS, all_finite, step_count
from .lyapunov import lyapunov_series, monitor_monotonicity
from .network import check_networked_plant_dissipation
from .systems import FAIL, PASS, SystemTrajectory, check_dissipation
from .utils import digest, worker_count
from ._version import get_versions

__all__ = ['Trajectory', 'ConsensusVerdict', 'SimConfig', 'RunReport', 'SweepRow',
           'integrate', 'oracle_integrate', 'detect_consensus', 'run_experiment', 'run_sweep']


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Uniformly sampled closed-loop record

    Arrays have one row per sample: x_p (S, n_p), x_c (S, n_c), y_p and u_p
    (S, N m), y_c and u_c (S, L m); w_hat (S,) is optional.
    """

    times: np.ndarray
    x_p: np.ndarray
    x_c: np.ndarray
    y_p: Optional[np.ndarray] = None
    y_c: Optional[np.ndarray] = None
    u_p: Optional[np.ndarray] = None
    u_c: Optional[np.ndarray] = None
    w_hat: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name in ('x_p', 'x_c', 'y_p', 'y_c', 'u_p', 'u_c', 'w_hat'):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise DimensionError(f'{name} has {len(arr)} samples, times has {n}')

    @property
    def samples(self):
        return len(self.times)

    @property
    def dt(self):
        if self.samples < 2:
            raise InsufficientDataError('a single sample has no time step')
        return float(self.times[1] - self.times[0])

    def final_state(self):
        return self.x_p[-1].copy(), self.x_c[-1].copy()

    def plant_view(self, sys, i):
        """SystemTrajectory of node plant i"""
        m = sys.io_dim
        return SystemTrajectory(self.times, self.x_p[:, sys.plant_slices[i]], self.u_p[:, i * m:(i + 1) * m])

    def controller_view(self, sys, l):
        """SystemTrajectory of edge controller l"""
        m = sys.io_dim
        return SystemTrajectory(self.times, self.x_c[:, sys.controller_slices[l]], self.u_c[:, l * m:(l + 1) * m])

    def aggregate_plant_view(self):
        """SystemTrajectory of all plants stacked"""
        return SystemTrajectory(self.times, self.x_p, self.u_p)


def integrate(sys, initial, horizon, dt, method='rk4', record_every=1, t0=0.0, scenario_hash=None):
    """
    Fixed-step integration of a closed loop

    Parameters
    ----------
    sys : InterconnectedSystem or FeedbackLoop
        the closed loop
    initial : (array_like, array_like)
        (X_p0, X_c0)
    horizon : float
        simulated time span; when not a multiple of dt the step is shrunk so
        the last sample lands on t0 + horizon
    dt : float
        step size
    method : str
        'rk4', or 'euler' for the brute-force oracle
    record_every : int
        keep every n-th sample (the last sample is always kept)

    Returns
    -------
    trajectory : Trajectory

    Raises
    ------
    DivergenceError
        a non-finite state, with the first bad time

    """
    if method not in STEPPERS:
        raise DimensionError(f"unknown integration method {method!r}, expected one of {sorted(STEPPERS)}")
    if not dt > 0.0 or horizon < dt:
        raise DimensionError(f'need dt > 0 and horizon >= dt, got dt={dt}, horizon={horizon}')
    if record_every < 1:
        raise DimensionError(f'record_every must be a positive integer, got {record_every}')

    stepper = STEPPERS[method]
    X_p0, X_c0 = sys._check_states(*initial)
    n_p = sys.plant_state_dim
    steps, dt_used = step_count(horizon, dt)
    kept = [k for k in range(0, steps + 1, record_every)]
    if kept[-1] != steps:
        kept.append(steps)
    S = len(kept)
    Nm = sys.node_count * sys.io_dim
    Lm = sys.edge_count * sys.io_dim

    times = t0 + dt_used * np.asarray(kept, dtype=float)
    x_p = np.empty((S, n_p))
    x_c = np.empty((S, sys.controller_state_dim))
    y_p = np.empty((S, Nm))
    y_c = np.empty((S, Lm))
    u_p = np.empty((S, Nm))
    u_c = np.empty((S, Lm))

    def signals(z):
        return sys.coupled_rhs(z[:n_p], z[n_p:])

    def rhs(t, z):
        s = signals(z)
        return np.concatenate([s.xp_dot, s.xc_dot])

    logging.info(f'Integrating {steps} {method} steps of {dt_used:g} s')
    z = np.concatenate([X_p0, X_c0])
    row = 0
    for k in range(steps + 1):
        s = signals(z)
        if row < S and kept[row] == k:
            x_p[row], x_c[row] = z[:n_p], z[n_p:]
            y_p[row], y_c[row], u_p[row], u_c[row] = s.y_p, s.y_c, s.u_p, s.u_c
            row += 1
        if k == steps:
            break
        z = stepper(rhs, t0 + k * dt_used, z, dt_used, k1=np.concatenate([s.xp_dot, s.xc_dot]))
        if not all_finite(z):
            t_bad = t0 + (k + 1) * dt_used
            raise DivergenceError(f'non-finite state at t = {t_bad:.6g} s', time=t_bad)

    metadata = {'integrator': method, 'dt': dt_used, 'steps': steps, 'record_every': record_every,
                'scenario_hash': scenario_hash}
    return Trajectory(times=times, x_p=x_p, x_c=x_c, y_p=y_p, y_c=y_c, u_p=u_p, u_c=u_c, metadata=metadata)


def oracle_integrate(sys, initial, horizon, dt_fine, record_every=1, scenario_hash=None):
    """
    Explicit Euler reference run at a fine step, for cross-checking RK4
    """
    return integrate(sys, initial, horizon, dt_fine, method='euler', record_every=record_every,
                     scenario_hash=scenario_hash)


# ******************************
# Consensus
# ******************************

@dataclass(frozen=True)
class ConsensusVerdict:
    achieved: bool
    settle_time: Optional[float]
    final_max_pairwise_gap: float
    tolerance: float

    def to_dict(self):
        return asdict(self)


def _settle(times, values, tolerance):
    # earliest time after which values stay <= tolerance through the end
    ok = values <= tolerance
    if not ok[-1]:
        return None
    bad = np.nonzero(~ok)[0]
    first = 0 if len(bad) == 0 else int(bad[-1]) + 1
    return float(times[first])


def detect_consensus(trajectory, tolerance=1e-3, m=1):
    """
    Output consensus as settle-and-hold of the largest pairwise output gap

    Parameters
    ----------
    trajectory : Trajectory
        run with recorded y_p
    tolerance : float
        largest admitted |y_pi - y_pj|
    m : int
        channels per node

    Returns
    -------
    verdict : ConsensusVerdict

    """
    if trajectory.y_p is None:
        raise InsufficientDataError('trajectory lacks recorded outputs')
    Y = trajectory.y_p.reshape(trajectory.samples, -1, m)
    if m == 1:
        gaps = Y[:, :, 0].max(axis=1) - Y[:, :, 0].min(axis=1)
    else:
        gaps = np.zeros(trajectory.samples)
        for i in range(Y.shape[1]):
            gaps = np.maximum(gaps, np.max(np.linalg.norm(Y - Y[:, i:i + 1, :], axis=2), axis=1))

    settle = _settle(trajectory.times, gaps, tolerance)
    return ConsensusVerdict(achieved=settle is not None, settle_time=settle,
                            final_max_pairwise_gap=float(gaps[-1]), tolerance=float(tolerance))


# ******************************
# Grid experiments
# ******************************

@dataclass(frozen=True)
class SimConfig:
    """
    Run settings; every field may be overridden by the scenario file and the
    command line
    """
    horizon: float = 50.0
    dt: float = 1e-3
    consensus_tol: float = 1e-3
    dissipation_tol: float = 1e-6
    monotonicity_tol: float = 1e-8
    quad_step: float = 1e-4
    seed: int = 0
    record_every: int = 1

    def __post_init__(self):
        for name in ('horizon', 'dt', 'consensus_tol', 'dissipation_tol', 'monotonicity_tol', 'quad_step'):
            if not getattr(self, name) > 0.0:
                raise DimensionError(f'{name} must be positive, got {getattr(self, name)}')
        if self.horizon < self.dt:
            raise DimensionError(f'horizon {self.horizon} is shorter than dt {self.dt}')

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class RunReport:
    """
    Everything one grid run asserts; ``battery_commands`` holds the full
    per-bus command series and is left out of to_dict and digest
    """

    scenario_name: str
    scenario_hash: str
    config: dict
    domain: dict
    stability_claim: str
    dissipation: list
    networked_dissipation: dict
    monotonicity: dict
    consensus: dict
    frequency_sync: dict
    battery: dict
    final_state: dict
    battery_commands: dict = field(default_factory=dict)

    @property
    def passed(self):
        # inconclusive dissipation checks do not block
        dissipative = (all(r['verdict'] != FAIL for r in self.dissipation)
                       and self.networked_dissipation['verdict'] != FAIL)
        return (dissipative and self.monotonicity['verdict'] == PASS and self.consensus['achieved']
                and self.frequency_sync['achieved'] and self.domain['in_d1'] and self.domain['in_d2'])

    def to_dict(self):
        return {'version': get_versions()['version'],
                'scenario_name': self.scenario_name,
                'scenario_hash': self.scenario_hash,
                'config': self.config,
                'domain': self.domain,
                'stability_claim': self.stability_claim,
                'dissipation': self.dissipation,
                'networked_dissipation': self.networked_dissipation,
                'monotonicity': self.monotonicity,
                'consensus': self.consensus,
                'frequency_sync': self.frequency_sync,
                'battery': self.battery,
                'final_state': self.final_state}

    def digest(self):
        return digest(self.to_dict())


def scenario_digest(scenario):
    """sha256 of the scenario's field values"""
    return digest({'buses': [asdict(b) for b in scenario.buses],
                   'lines': [asdict(l) for l in scenario.lines],
                   'initial': [asdict(d) for d in scenario.initial],
                   'battery_edges': [[k, asdict(p)] for k, p in scenario.battery_edges],
                   'omega0': scenario.omega0,
                   'name': scenario.name})


def run_experiment(scenario, config=None):
    """
    Simulate a grid scenario and run every along-trajectory check

    Parameters
    ----------
    scenario : GridScenario
        the grid; P_M is filled from the equilibrium relation when missing
    config : SimConfig or None
        run settings

    Returns
    -------
    report : RunReport
    trajectory : Trajectory
        with w_hat filled in

    """
    config = config or SimConfig()
    if any(b.P_M is None for b in scenario.buses):
        scenario = grid.compute_equilibrium(scenario)
    s_hash = scenario_digest(scenario)
    name = scenario.name or 'scenario'
    logging.info(f'Running {name} ({s_hash[:12]}) for {config.horizon} s at dt = {config.dt}')

    sys = grid.assemble_grid_system(scenario)
    X_p0, X_c0 = grid.initial_state(scenario)
    battery_lines = [k for k, _ in scenario.battery_edges]
    excluded = battery_lines or None

    domain = grid.domain_membership(scenario, X_p0[1::2], excluded)
    if not domain.inside:
        logging.warning(f'{name}: initial condition lies outside the local domain '
                        f'(D1: {domain.in_d1}, D2: {domain.in_d2})')

    traj = integrate(sys, (X_p0, X_c0), config.horizon, config.dt,
                     record_every=config.record_every, scenario_hash=s_hash)
    traj = replace(traj, w_hat=lyapunov_series(sys, traj.x_p, traj.x_c, config.quad_step))

    dissipation = []
    for i, bus in enumerate(scenario.buses):
        rep = check_dissipation(sys.node_plants[i], traj.plant_view(sys, i), bus.D, config.dissipation_tol)
        dissipation.append(rep.to_dict())
    for l, ctrl in enumerate(sys.edge_controllers):
        rep = check_dissipation(ctrl, traj.controller_view(sys, l), 0.0, config.dissipation_tol)
        dissipation.append(rep.to_dict())
    networked = check_networked_plant_dissipation(sys, traj, config.dissipation_tol)

    monotonicity = monitor_monotonicity(sys, traj, config.quad_step, config.monotonicity_tol)
    consensus = detect_consensus(traj, config.consensus_tol)
    freq = np.max(np.abs(traj.x_p[:, 0::2]), axis=1)
    freq_settle = _settle(traj.times, freq, config.consensus_tol)

    commands = grid.battery_command_series(scenario, traj)
    battery = {}
    for k, (p_i, p_j) in commands.items():
        i, j = scenario.line_ends(k)
        battery[str(k + 1)] = {'buses': [scenario.buses[i].id, scenario.buses[j].id],
                               'max_abs_command_sum': float(np.max(np.abs(p_i + p_j))),
                               'final_commands': [float(p_i[-1]), float(p_j[-1])]}

    claim = 'osni' if all(b.D > 0.0 for b in scenario.buses) else 'ni'
    X_pf, X_cf = traj.final_state()
    report = RunReport(scenario_name=name, scenario_hash=s_hash, config=config.to_dict(),
                       domain=asdict(domain), stability_claim=claim,
                       dissipation=dissipation, networked_dissipation=networked.to_dict(),
                       monotonicity=monotonicity.to_dict(), consensus=consensus.to_dict(),
                       frequency_sync={'achieved': freq_settle is not None, 'settle_time': freq_settle,
                                       'final_max_abs': float(freq[-1]), 'tolerance': config.consensus_tol},
                       battery=battery,
                       final_state={'delta_dev': X_pf[1::2].tolist(), 'freq_dev': X_pf[0::2].tolist(),
                                    'battery_state': X_cf.tolist(), 'w_hat': float(traj.w_hat[-1])},
                       battery_commands=commands)
    logging.info(f'{name}: monotone {monotonicity.verdict}, consensus {consensus.achieved}, '
                 f'settle time {consensus.settle_time}')
    return report, traj


# ******************************
# Sweeps
# ******************************

@dataclass(frozen=True)
class SweepRow:
    value: float
    in_domain: bool
    consensus_achieved: bool
    settle_time: Optional[float]
    min_w: Optional[float]
    max_w_step_increase: Optional[float]
    diverged: bool = False


def _sweep_point(args):
    scenario, config, target, value = args
    scenario = grid.apply_parameter(scenario, target, value)
    try:
        report, _ = run_experiment(scenario, config)
    except DivergenceError as e:
        logging.warning(f'Sweep point {target} = {value} diverged at t = {e.time}')
        return SweepRow(value=value, in_domain=False, consensus_achieved=False, settle_time=None,
                        min_w=None, max_w_step_increase=None, diverged=True)
    return SweepRow(value=value,
                    in_domain=bool(report.domain['in_d1'] and report.domain['in_d2']),
                    consensus_achieved=report.consensus['achieved'],
                    settle_time=report.consensus['settle_time'],
                    min_w=report.monotonicity['w_min'],
                    max_w_step_increase=report.monotonicity['max_step_increase'])


def run_sweep(scenario, target, values, config=None, workers=None):
    """
    Run one experiment per parameter value

    Parameters
    ----------
    scenario : GridScenario
        base scenario
    target : str
        parameter address understood by grid.apply_parameter
    values : sequence of float
        sweep points
    config : SimConfig or None
    workers : int or None
        process count, capped by NI_GRID_THREADS

    Returns
    -------
    rows : list of SweepRow
        in the order of values

    """
    config = config or SimConfig()
    values = [float(v) for v in values]
    if not values:
        return []
    # fail early on a bad target
    grid.apply_parameter(scenario, target, values[0])

    jobs = [(scenario, config, target, v) for v in values]
    n = min(worker_count(workers), len(jobs))
    logging.info(f'Sweeping {target} over {len(values)} points with {n} worker(s)')
    if n == 1:
        return [_sweep_point(job) for job in jobs]
    with multiprocessing.Pool(n) as pool:
        return pool.map(_sweep_point, jobs)
