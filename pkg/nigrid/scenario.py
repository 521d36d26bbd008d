# ******************
# MODULE DOCSTRING
# ******************

"""

nigrid: scenario files
=====

JSON scenario files with a strict schema:

    {
        "name": "two_bus",
        "buses": [{"id": 1, "M": 1.0, "D": 1.0, "E0": 1.0, "P_L": 0.0}, ...],
        "lines": [{"from": 1, "to": 2, "X": 0.5, "psi_bar": 0.5235987755982988}, ...],
        "battery_edges": [{"line_index": 1, "tau": 1.0, "K1": 1.0, "K2": 2.0}],
        "initial": [{"bus": 1, "delta_dev": 0.3, "freq_dev": 0.0}, ...],
        "sim": {"T": 20.0, "dt": 0.001, "consensus_tol": 0.001}
    }

Optional bus keys are ``P_ST`` and ``P_M``; optional top level keys are
``omega0``, ``battery_edges``, ``initial`` and ``sim``. Line numbers in
``battery_edges`` count from 1. Buses missing from ``initial`` start at zero
deviation. Unknown keys are rejected.

"""

# ****************
# MODULE IMPORTS
# ****************

import json
import logging
import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from . import grid
from .exceptions import ConstructionError, DimensionError, ScenarioError
from .simulation import SimConfig

__all__ = ['Diagnostic', 'load_scenario', 'parse_scenario', 'serialize_scenario', 'dump_scenario',
           'validate_scenario', 'validate_file', 'ERROR', 'WARNING']

ERROR = 'error'
WARNING = 'warning'

EQUILIBRIUM_TOLERANCE = 1e-10
CYCLE_TOLERANCE = 1e-10

_TOP_KEYS = {'name', 'omega0', 'buses', 'lines', 'battery_edges', 'initial', 'sim'}
_BUS_KEYS = {'id': True, 'M': True, 'D': True, 'E0': True, 'P_L': True, 'P_ST': False, 'P_M': False}
_LINE_KEYS = {'from': True, 'to': True, 'X': True, 'psi_bar': True}
_BATTERY_KEYS = {'line_index': True, 'tau': True, 'K1': True, 'K2': True}
_INITIAL_KEYS = {'bus': True, 'delta_dev': False, 'freq_dev': False}
# file key -> SimConfig field
_SIM_KEYS = {'T': 'horizon', 'dt': 'dt', 'consensus_tol': 'consensus_tol', 'dissipation_tol': 'dissipation_tol',
             'monotonicity_tol': 'monotonicity_tol', 'quad_step': 'quad_step', 'seed': 'seed',
             'record_every': 'record_every'}
_INT_SIM_KEYS = ('seed', 'record_every')


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    field: str
    message: str

    def __str__(self):
        return f'{self.severity}: {self.field}: {self.message}'


# *************************
# Parsing
# *************************

def _reject_duplicates(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise ScenarioError(f'duplicate key {key!r}')
        obj[key] = value
    return obj


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ScenarioError('expected an object', field=where)
    for key in obj:
        if key not in allowed:
            raise ScenarioError(f'unknown field {key!r}', field=where)
    for key, required in allowed.items():
        if required and key not in obj:
            raise ScenarioError(f'missing required field {key!r}', field=where)


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f'expected a number, got {value!r}', field=where)
    if not math.isfinite(value):
        raise ScenarioError(f'expected a finite number, got {value!r}', field=where)
    return float(value)


def _integer(value, where):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f'expected an integer, got {value!r}', field=where)
    return value


def _list(doc, key, required=True):
    if key not in doc:
        if required:
            raise ScenarioError(f'missing required field {key!r}')
        return []
    value = doc[key]
    if not isinstance(value, list):
        raise ScenarioError('expected a list', field=key)
    return value


def _parse_buses(doc):
    buses = []
    for n, entry in enumerate(_list(doc, 'buses')):
        where = f'buses[{n}]'
        _check_keys(entry, _BUS_KEYS, where)
        kw = {k: _number(entry[k], f'{where}.{k}') for k in ('M', 'D', 'E0', 'P_L')}
        kw['P_ST'] = _number(entry.get('P_ST', 0.0), f'{where}.P_ST')
        if 'P_M' in entry:
            kw['P_M'] = _number(entry['P_M'], f'{where}.P_M')
        bus_id = _integer(entry['id'], f'{where}.id')
        try:
            buses.append(grid.Bus(id=bus_id, **kw))
        except ConstructionError as e:
            raise ScenarioError(str(e), field=where)
    if not buses:
        raise ScenarioError('a scenario needs at least one bus', field='buses')
    return buses


def _parse_lines(doc):
    lines = []
    for n, entry in enumerate(_list(doc, 'lines')):
        where = f'lines[{n}]'
        _check_keys(entry, _LINE_KEYS, where)
        try:
            lines.append(grid.Line(from_bus=_integer(entry['from'], f'{where}.from'),
                                   to_bus=_integer(entry['to'], f'{where}.to'),
                                   X=_number(entry['X'], f'{where}.X'),
                                   psi_bar=_number(entry['psi_bar'], f'{where}.psi_bar')))
        except ConstructionError as e:
            raise ScenarioError(f'line {n + 1}: {e}', field=where)
    return lines


def _parse_batteries(doc, line_count):
    batteries = []
    for n, entry in enumerate(_list(doc, 'battery_edges', required=False)):
        where = f'battery_edges[{n}]'
        _check_keys(entry, _BATTERY_KEYS, where)
        k = _integer(entry['line_index'], f'{where}.line_index')
        if not 1 <= k <= line_count:
            raise ScenarioError(f'line_index {k} is not a line number in 1..{line_count}',
                                field=f'{where}.line_index')
        try:
            params = grid.BatteryParams(tau=_number(entry['tau'], f'{where}.tau'),
                                        K1=_number(entry['K1'], f'{where}.K1'),
                                        K2=_number(entry['K2'], f'{where}.K2'))
        except ConstructionError as e:
            raise ScenarioError(f'battery on line {k}: {e}', field=where)
        batteries.append((k - 1, params))
    return batteries


def _parse_initial(doc, buses):
    by_id = {}
    for n, entry in enumerate(_list(doc, 'initial', required=False)):
        where = f'initial[{n}]'
        _check_keys(entry, _INITIAL_KEYS, where)
        bus_id = _integer(entry['bus'], f'{where}.bus')
        if bus_id not in {b.id for b in buses}:
            raise ScenarioError(f'unknown bus {bus_id}', field=f'{where}.bus')
        if bus_id in by_id:
            raise ScenarioError(f'bus {bus_id} has two initial entries', field=where)
        by_id[bus_id] = grid.InitialDeviation(delta_dev=_number(entry.get('delta_dev', 0.0), f'{where}.delta_dev'),
                                              freq_dev=_number(entry.get('freq_dev', 0.0), f'{where}.freq_dev'))
    return [by_id.get(b.id, grid.InitialDeviation()) for b in buses]


def _parse_sim(doc):
    sim = doc.get('sim', {})
    _check_keys(sim, {k: False for k in _SIM_KEYS}, 'sim')
    kw = {}
    for key, name in _SIM_KEYS.items():
        if key in sim:
            if key in _INT_SIM_KEYS:
                kw[name] = _integer(sim[key], f'sim.{key}')
            else:
                kw[name] = _number(sim[key], f'sim.{key}')
    if kw.get('record_every', 1) < 1:
        raise ScenarioError('record_every must be >= 1', field='sim.record_every')
    try:
        return SimConfig(**kw)
    except DimensionError as e:
        raise ScenarioError(str(e), field='sim')


def parse_scenario(text):
    """
    Parse scenario JSON text

    Parameters
    ----------
    text : str
        file contents

    Returns
    -------
    scenario : GridScenario
    config : SimConfig
        defaults overridden by the ``sim`` section

    Raises
    ------
    ScenarioError
        malformed JSON (with its line number), schema violations and
        parameter constraints (with the field path)

    """
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates,
                         parse_constant=lambda c: _number(float(c), c))
    except json.JSONDecodeError as e:
        raise ScenarioError(e.msg, line=e.lineno)
    _check_keys(doc, {k: False for k in _TOP_KEYS}, 'scenario')

    name = doc.get('name', '')
    if not isinstance(name, str):
        raise ScenarioError('expected a string', field='name')
    omega0 = _number(doc.get('omega0', grid.NOMINAL_FREQUENCY), 'omega0')

    buses = _parse_buses(doc)
    lines = _parse_lines(doc)
    batteries = _parse_batteries(doc, len(lines))
    initial = _parse_initial(doc, buses)
    config = _parse_sim(doc)

    try:
        scenario = grid.GridScenario(buses=tuple(buses), lines=tuple(lines), initial=tuple(initial),
                                     battery_edges=tuple(batteries), omega0=omega0, name=name)
    except ConstructionError as e:
        raise ScenarioError(str(e))
    logging.debug(f'Parsed scenario {name!r}: {scenario.bus_count} buses, {scenario.line_count} lines')
    return scenario, config


def load_scenario(path):
    """(GridScenario, SimConfig) from a scenario file"""
    try:
        with open(path, 'r') as f:
            text = f.read()
    except OSError as e:
        raise ScenarioError(f'cannot read {path}: {e.strerror}')
    scenario, config = parse_scenario(text)
    if not scenario.name:
        scenario = replace(scenario, name=os.path.splitext(os.path.basename(path))[0])
    return scenario, config


# *************************
# Writing
# *************************

def serialize_scenario(scenario, config=None):
    """
    JSON text that parse_scenario reads back to the same scenario and config
    """
    buses = []
    for b in scenario.buses:
        entry = {'id': b.id, 'M': b.M, 'D': b.D, 'E0': b.E0, 'P_L': b.P_L, 'P_ST': b.P_ST}
        if b.P_M is not None:
            entry['P_M'] = b.P_M
        buses.append(entry)
    doc = {'name': scenario.name,
           'omega0': scenario.omega0,
           'buses': buses,
           'lines': [{'from': l.from_bus, 'to': l.to_bus, 'X': l.X, 'psi_bar': l.psi_bar} for l in scenario.lines],
           'battery_edges': [{'line_index': k + 1, 'tau': p.tau, 'K1': p.K1, 'K2': p.K2}
                             for k, p in scenario.battery_edges],
           'initial': [{'bus': b.id, 'delta_dev': d.delta_dev, 'freq_dev': d.freq_dev}
                       for b, d in zip(scenario.buses, scenario.initial)]}
    if config is not None:
        names = {f.name for f in fields(config)}
        doc['sim'] = {key: getattr(config, name) for key, name in _SIM_KEYS.items() if name in names}
    return json.dumps(doc, indent=4) + '\n'


def dump_scenario(scenario, ofile, config=None):
    with open(ofile, 'w') as f:
        f.write(serialize_scenario(scenario, config))


# *************************
# Validation
# *************************

def validate_scenario(scenario):
    """
    Invariant checks on a parsed scenario

    Errors: equilibrium residual above 1e-10 on a bus with a given P_M,
    psi_bar not closing around a cycle. Warnings: |psi_bar| >= pi/2 (the
    line nonlinearity loses its local steady-state margin), D = 0 buses
    (NI but not OSNI).

    Returns
    -------
    diagnostics : list of Diagnostic
        empty when nothing is flagged

    """
    diags = []

    given = [b.P_M is not None for b in scenario.buses]
    if any(given):
        filled = grid.compute_equilibrium(scenario)
        # the residual only depends on the lines for buses whose P_M is computed
        mixed = replace(scenario, buses=tuple(b if g else f for b, f, g in zip(scenario.buses, filled.buses, given)))
        residual = grid.equilibrium_residual(mixed)
        for pos in np.nonzero(np.abs(residual) > EQUILIBRIUM_TOLERANCE)[0]:
            b = scenario.buses[pos]
            diags.append(Diagnostic(ERROR, f'buses[{pos}].P_M',
                                    f'bus {b.id}: equilibrium residual {residual[pos]:.3e} exceeds '
                                    f'{EQUILIBRIUM_TOLERANCE:g}'))

    for cycle, residual in grid.cycle_residuals(scenario):
        if abs(residual) > CYCLE_TOLERANCE:
            diags.append(Diagnostic(ERROR, 'lines',
                                    f'psi_bar sums to {residual:.3e} rad around buses {cycle}, expected 0'))

    for n, line in enumerate(scenario.lines):
        if abs(line.psi_bar) >= math.pi / 2:
            diags.append(Diagnostic(WARNING, f'lines[{n}].psi_bar',
                                    f'line {n + 1} ({line.label}): |psi_bar| = {abs(line.psi_bar):.4f} >= pi/2'))

    for pos, b in enumerate(scenario.buses):
        if b.D == 0.0:
            diags.append(Diagnostic(WARNING, f'buses[{pos}].D',
                                    f'bus {b.id} is undamped; its plant is NI but not OSNI'))
    return diags


def validate_file(path):
    """
    Parse and validate a scenario file

    Returns
    -------
    diagnostics : list of Diagnostic
        a parse failure is reported as a single error

    """
    try:
        scenario, _ = load_scenario(path)
    except ScenarioError as e:
        where = f'line {e.line}' if e.line is not None else (e.field or path)
        return [Diagnostic(ERROR, where, e.detail)]
    return validate_scenario(scenario)
