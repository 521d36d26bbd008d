# ******************
# MODULE DOCSTRING
# ******************

"""

nigrid: command line interface
=====

    nigrid validate scenario.json
    nigrid simulate scenario.json --out run/ [--dt 1e-3] [--horizon 50]
    nigrid check scenario.json --suite all [--seed 0] [--samples 200]
    nigrid sweep scenario.json --param initial.1.delta_dev --range 0.1:1.5:15 --out sweep/

Exit codes: 0 success, 1 validation or check failure, 2 divergence,
3 inconclusive check.

"""

# ****************
# MODULE IMPORTS
# ****************

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import grid
from .exceptions import DimensionError, DivergenceError, ScenarioError
from .lyapunov import SamplingPlan, lyapunov_evaluator, sample_positive_definiteness
from .scenario import ERROR, load_scenario, validate_file
from .simulation import run_experiment, run_sweep
from .systems import FAIL, INCONCLUSIVE, PASS, check_steady_state_sign
from .utils import set_verbosity, worker_count, write_csv, write_json
from ._version import get_versions

__all__ = ['main', 'startup', 'parse_range', 'EXIT_OK', 'EXIT_INVALID', 'EXIT_DIVERGED', 'EXIT_INCONCLUSIVE']

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DIVERGED = 2
EXIT_INCONCLUSIVE = 3

SUITES = ('dissipation', 'lyapunov', 'domain', 'all')

# half widths of the positive definiteness sampling box
FREQ_HALF_WIDTH = 1.0
BATTERY_HALF_WIDTH = 1.0
GRID_SAMPLE_LIMIT = 10 ** 4


# *************************
# Option checks
# *************************

class CheckPositive(argparse.Action):
    # Used for dt, horizon, tolerance, samples and workers
    @classmethod
    def _check(cls, value):
        if not value > 0 or (isinstance(value, float) and not math.isfinite(value)):
            raise argparse.ArgumentTypeError(f'{value} is not a positive number')

    def __call__(self, parser, namespace, value, option_string=None):
        try:
            self._check(value)
        except argparse.ArgumentTypeError as e:
            raise argparse.ArgumentError(self, str(e))
        setattr(namespace, self.dest, value)


class CheckFile(argparse.Action):
    # The scenario file must exist and be readable
    @classmethod
    def _check_file(cls, path):
        if not os.path.isfile(path):
            raise argparse.ArgumentTypeError(f'The scenario file does not exist: {path}')
        if not os.access(path, os.R_OK):
            raise argparse.ArgumentTypeError(f'The scenario file is not readable: {path}')

    def __call__(self, parser, namespace, path, option_string=None):
        try:
            self._check_file(path)
        except argparse.ArgumentTypeError as e:
            raise argparse.ArgumentError(self, str(e))
        setattr(namespace, self.dest, path)


class CheckDir(argparse.Action):
    # Output directory: created when missing, must be writable when present
    @classmethod
    def _check_directory(cls, directory):
        if os.path.exists(directory) and not os.path.isdir(directory):
            raise argparse.ArgumentTypeError(f'The output path is not a directory: {directory}')
        if os.path.isdir(directory) and not os.access(directory, os.W_OK):
            raise argparse.ArgumentTypeError(f'The output directory is not writable: {directory}')

    def __call__(self, parser, namespace, directory, option_string=None):
        try:
            self._check_directory(directory)
        except argparse.ArgumentTypeError as e:
            raise argparse.ArgumentError(self, str(e))
        setattr(namespace, self.dest, directory)


class CheckRange(argparse.Action):
    # Sweep range, stored as the list of values
    def __call__(self, parser, namespace, spec, option_string=None):
        try:
            values = parse_range(spec)
        except ValueError as e:
            raise argparse.ArgumentError(self, str(e))
        setattr(namespace, self.dest, values)


def parse_range(spec):
    """
    Sweep values from ``start:stop:count`` (inclusive, evenly spaced) or a
    comma separated list; a count of 0 gives no values
    """
    spec = spec.strip()
    if ':' in spec:
        parts = spec.split(':')
        if len(parts) != 3:
            raise ValueError(f'range {spec!r} is not start:stop:count')
        try:
            start, stop = float(parts[0]), float(parts[1])
            count = int(parts[2])
        except ValueError:
            raise ValueError(f'range {spec!r} is not start:stop:count')
        if count < 0:
            raise ValueError(f'range {spec!r} has a negative count')
        return np.linspace(start, stop, count).tolist()
    if not spec:
        raise ValueError('empty range specification')
    try:
        return [float(v) for v in spec.split(',')]
    except ValueError:
        raise ValueError(f'range {spec!r} is not a comma separated list of numbers')


# *************************
# Commands
# *************************

def _load(ops):
    scenario, config = load_scenario(ops.scenario)
    overrides = {}
    if ops.dt is not None:
        overrides['dt'] = ops.dt
    if ops.horizon is not None:
        overrides['horizon'] = ops.horizon
    if ops.tolerance is not None:
        overrides['consensus_tol'] = ops.tolerance
    if ops.seed is not None:
        overrides['seed'] = ops.seed
    if overrides:
        try:
            config = replace(config, **overrides)
        except DimensionError as e:
            raise ScenarioError(str(e), field='command line')
    return scenario, config


def _timestamped(report):
    out = report.to_dict()
    out['generated_at'] = datetime.now(timezone.utc).isoformat()
    return out


def trajectory_table(scenario, report, traj):
    """
    Header and rows of the trajectory csv

    Columns: t, delta_dev/freq_dev per bus id, psi_dev/flow_dev per line
    number, x_c and the two end injections per battery line, W_hat.
    """
    header = ['t']
    cols = [traj.times]
    for pos, b in enumerate(scenario.buses):
        header += [f'delta_dev_{b.id}', f'freq_dev_{b.id}']
        cols += [traj.x_p[:, 2 * pos + 1], traj.x_p[:, 2 * pos]]
    flow = grid.line_flow_deviation(scenario, traj.u_c)
    for l in range(scenario.line_count):
        header += [f'psi_dev_{l + 1}', f'flow_dev_{l + 1}']
        cols += [traj.u_c[:, l], flow[:, l]]
    for n, (k, _) in enumerate(scenario.battery_edges):
        i, j = scenario.line_ends(k)
        p_i, p_j = report.battery_commands[k]
        header += [f'x_c{k + 1}', f'P_ST_{scenario.buses[i].id}_{k + 1}', f'P_ST_{scenario.buses[j].id}_{k + 1}']
        cols += [traj.x_c[:, n], p_i, p_j]
    header.append('W_hat')
    cols.append(traj.w_hat)
    return header, np.column_stack(cols)


def cmd_validate(ops):
    diags = validate_file(ops.scenario)
    for d in diags:
        print(d)
    errors = [d for d in diags if d.severity == ERROR]
    if errors:
        logging.info(f'{ops.scenario}: {len(errors)} error(s)')
        return EXIT_INVALID
    logging.info(f'{ops.scenario}: valid')
    return EXIT_OK


def cmd_simulate(ops):
    scenario, config = _load(ops)
    report, traj = run_experiment(scenario, config)
    os.makedirs(ops.out, exist_ok=True)
    header, rows = trajectory_table(scenario, report, traj)
    write_csv(header, rows, os.path.join(ops.out, 'trajectory.csv'))
    write_json(_timestamped(report), os.path.join(ops.out, 'report.json'))
    logging.info(f'Wrote {traj.samples} samples to {ops.out}')
    return EXIT_OK


def _result(suite, subject, verdict, detail=''):
    return {'suite': suite, 'subject': subject, 'verdict': verdict, 'detail': detail}


def dissipation_suite(scenario, config, report, sys, seed=0, inputs=5):
    """
    Storage-function checks along the simulated run plus steady-state sign
    experiments for every edge controller
    """
    results = []
    for rep in report.dissipation:
        results.append(_result('dissipation', rep['subject'], rep['verdict'],
                               f'max violation {rep["max_violation"]:.3e}, epsilon {rep["epsilon"]:g}'))
    for b in scenario.buses:
        if b.D == 0.0:
            results.append(_result('dissipation', f'bus {b.id} output strictness', FAIL,
                                   'declared epsilon = D = 0; output strict NI needs epsilon > 0'))
    net = report.networked_dissipation
    results.append(_result('dissipation', 'networked plant', net['verdict'],
                           f'max violation {net["max_violation"]:.3e}'))

    rng = np.random.default_rng(seed)
    batteries = scenario.battery_map
    for l, ctrl in enumerate(sys.edge_controllers):
        line = scenario.lines[l]
        if l in batteries:
            params = batteries[l]
            u_bars = rng.uniform(-1.0, 1.0, size=inputs)
            gamma = params.gamma
            settle = max(50.0, 40.0 * params.tau)
        else:
            # sign condition holds on the D1 interval of the line
            lo, hi = -math.pi - 2.0 * line.psi_bar, math.pi - 2.0 * line.psi_bar
            u_bars = rng.uniform(0.9 * lo, 0.9 * hi, size=inputs)
            gamma = 0.0
            settle = 1.0
        verdicts = []
        worst = None
        for u in u_bars:
            rep = check_steady_state_sign(ctrl, [u], 'controller', gamma=gamma, settle_time=settle)
            verdicts.append(rep.verdict)
            if rep.margin is not None and (worst is None or rep.margin < worst):
                worst = rep.margin
        verdict = FAIL if FAIL in verdicts else INCONCLUSIVE if INCONCLUSIVE in verdicts else PASS
        results.append(_result('dissipation', f'{ctrl.label} steady state', verdict,
                               f'{inputs} inputs, smallest margin {worst:.4g} (needs >= {gamma:g})'
                               if worst is not None else f'{inputs} inputs'))
    return results


def lyapunov_suite(scenario, config, report, sys, samples=200, workers=1):
    """
    Monotonicity of W along the run and positive definiteness of W on
    samples inside the local domain

    The angle of the first bus is held at zero while sampling: W is
    invariant under a common shift of all angles.
    """
    mono = report.monotonicity
    results = [_result('lyapunov', 'monotonicity', mono['verdict'],
                       f'max step increase {mono["max_step_increase"]:.3e}, W {mono["w_initial"]:.6g} -> '
                       f'{mono["w_final"]:.6g}')]

    box = []
    for pos in range(scenario.bus_count):
        box.append((-FREQ_HALF_WIDTH, FREQ_HALF_WIDTH))
        box.append((0.0, 0.0) if pos == 0 else (-0.5 * math.pi, 0.5 * math.pi))
    box += [(-BATTERY_HALF_WIDTH, BATTERY_HALF_WIDTH)] * len(scenario.battery_edges)
    free = len(box) - 1
    grid_points = 3 if 3 ** free <= GRID_SAMPLE_LIMIT else 0
    excluded = [k for k, _ in scenario.battery_edges] or None

    pd = sample_positive_definiteness(lyapunov_evaluator(sys, config.quad_step), box,
                                      SamplingPlan(grid_points=grid_points, random_samples=samples),
                                      seed=config.seed, predicate=grid.domain_predicate(scenario, excluded),
                                      workers=workers)
    detail = f'{pd.samples - pd.rejected} accepted of {pd.samples}'
    if pd.min_value is not None:
        detail += f', min W {pd.min_value:.3e}'
    results.append(_result('lyapunov', 'positive definiteness', pd.verdict, detail))
    return results


def domain_suite(scenario):
    X_p0, _ = grid.initial_state(scenario)
    excluded = [k for k, _ in scenario.battery_edges] or None
    m = grid.domain_membership(scenario, X_p0[1::2], excluded)
    results = []
    if m.in_d1:
        results.append(_result('domain', 'D1', PASS, 'every line inside its interval'))
    else:
        detail = '; '.join(f'line {n}: psi_dev {v:.6g} outside ({lo:.6g}, {hi:.6g})'
                           for n, v, lo, hi in m.d1_violations)
        results.append(_result('domain', 'D1', FAIL, detail))
    results.append(_result('domain', 'D2', PASS if m.in_d2 else FAIL, f'sum {m.d2_sum:.6g}'))
    return results


def cmd_check(ops):
    scenario, config = _load(ops)
    results = []
    suites = ('dissipation', 'lyapunov', 'domain') if ops.suite == 'all' else (ops.suite,)

    if 'domain' in suites:
        results += domain_suite(scenario)
    if 'dissipation' in suites or 'lyapunov' in suites:
        report, _ = run_experiment(scenario, config)
        sys = grid.assemble_grid_system(scenario)
        if 'dissipation' in suites:
            results += dissipation_suite(scenario, config, report, sys, seed=config.seed)
        if 'lyapunov' in suites:
            results += lyapunov_suite(scenario, config, report, sys, samples=ops.samples,
                                      workers=worker_count(ops.workers))

    for r in results:
        print(f'{r["suite"]:<12} {r["subject"]:<32} {r["verdict"]:<13} {r["detail"]}')

    verdicts = [r['verdict'] for r in results]
    if FAIL in verdicts:
        code = EXIT_INVALID
    elif INCONCLUSIVE in verdicts:
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_OK

    if ops.out:
        os.makedirs(ops.out, exist_ok=True)
        write_json({'version': get_versions()['version'], 'scenario_name': scenario.name,
                    'suite': ops.suite, 'results': results, 'exit_code': code,
                    'generated_at': datetime.now(timezone.utc).isoformat()},
                   os.path.join(ops.out, 'check.json'))
    return code


SWEEP_HEADER = ['value', 'in_domain', 'consensus_achieved', 'settle_time', 'min_W', 'max_W_step_increase',
                'diverged']


def _cell(v):
    if v is None:
        return ''
    if isinstance(v, bool):
        return int(v)
    return v


def cmd_sweep(ops):
    scenario, config = _load(ops)
    try:
        rows = run_sweep(scenario, ops.param, ops.range, config, workers=ops.workers)
    except DimensionError as e:
        raise ScenarioError(str(e), field='--param')
    os.makedirs(ops.out, exist_ok=True)
    write_csv(SWEEP_HEADER,
              [[_cell(getattr(r, a)) for a in ('value', 'in_domain', 'consensus_achieved', 'settle_time',
                                               'min_w', 'max_w_step_increase', 'diverged')] for r in rows],
              os.path.join(ops.out, 'sweep.csv'))
    logging.info(f'Wrote {len(rows)} sweep rows to {ops.out}')
    return EXIT_OK


# *************************
# Entry points
# *************************

def main(argv=None):
    """
    Run one command; returns the exit code
    """
    ops = parser.parse_args(argv)
    set_verbosity(ops.verbose)
    try:
        return ops.func(ops)
    except ScenarioError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as e:
        print(f'error: {e} (t = {e.time})', file=sys.stderr)
        return EXIT_DIVERGED


def startup():
    # This is the CLI entrypoint
    sys.exit(main())


class NIGridParser(argparse.ArgumentParser):
    # usage errors exit with EXIT_INVALID
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f'{self.prog}: error: {message}\n')


# Command line user interface
# ----------------------------------------------------------------
parser = NIGridParser(description='Networked negative imaginary power grid simulator and certificate checker',
                      prog='nigrid v. %s' % get_versions()['version'])
parser.add_argument('-v', '--verbose', default='info', type=str,
                    choices=['off', 'info', 'pedantic'], help='verbose mode selection')
subparsers = parser.add_subparsers(dest='command', required=True, parser_class=NIGridParser)

run_options = argparse.ArgumentParser(add_help=False)
run_options.add_argument('scenario', action=CheckFile, help='The scenario JSON file')
run_group = run_options.add_argument_group('Run setting')
run_group.add_argument('--dt', default=None, action=CheckPositive, type=float,
                       help='Integration step in seconds (overrides sim.dt)')
run_group.add_argument('--horizon', default=None, action=CheckPositive, type=float,
                       help='Simulated time in seconds (overrides sim.T)')
run_group.add_argument('--tolerance', default=None, action=CheckPositive, type=float,
                       help='Consensus tolerance (overrides sim.consensus_tol)')
run_group.add_argument('--seed', default=None, type=int,
                       help='Random seed for domain sampling (overrides sim.seed)')

validate_parser = subparsers.add_parser('validate', help='Check a scenario file')
validate_parser.add_argument('scenario', action=CheckFile, help='The scenario JSON file')
validate_parser.set_defaults(func=cmd_validate)

simulate_parser = subparsers.add_parser('simulate', parents=[run_options],
                                        help='Simulate a scenario and write trajectory.csv and report.json')
simulate_parser.add_argument('-o', '--out', default='.', action=CheckDir, help='Output directory')
simulate_parser.set_defaults(func=cmd_simulate)

check_parser = subparsers.add_parser('check', parents=[run_options], help='Run certificate suites')
check_parser.add_argument('-s', '--suite', default='all', choices=SUITES, help='Suite selection')
check_parser.add_argument('-n', '--samples', default=200, action=CheckPositive, type=int,
                          help='Random samples for the positive definiteness check')
check_parser.add_argument('-p', '--workers', default=1, action=CheckPositive, type=int,
                          help='Sampling threads, capped by NI_GRID_THREADS')
check_parser.add_argument('-o', '--out', default=None, action=CheckDir,
                          help='Directory for check.json; nothing is written when omitted')
check_parser.set_defaults(func=cmd_check)

sweep_parser = subparsers.add_parser('sweep', parents=[run_options], help='Run one experiment per parameter value')
sweep_parser.add_argument('--param', required=True, type=str,
                          help='Parameter address, e.g. initial.1.delta_dev, battery_edges.1.K2 or battery_line')
sweep_parser.add_argument('--range', required=True, action=CheckRange,
                          help='start:stop:count or a comma separated list')
sweep_parser.add_argument('-p', '--workers', default=None, action=CheckPositive, type=int,
                          help='Worker processes, capped by NI_GRID_THREADS')
sweep_parser.add_argument('-o', '--out', default='.', action=CheckDir, help='Output directory')
sweep_parser.set_defaults(func=cmd_sweep)
