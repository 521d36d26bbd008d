# ******************
# MODULE DOCSTRING
# ******************

"""

nigrid: power transmission network
=====

Swing-equation generator buses coupled by lossless lines, rewritten in
deviation coordinates around a stable equilibrium as a networked NI system:

    node plant i :  M_i dv_i/dt = -D_i v_i + u_pi,  d(delta_i)/dt = v_i,  y_pi = delta_i
    line l       :  y_cl = Pmax_l (sin psi_l - sin(u_cl + psi_l))
    battery k    :  tau dx/dt = -x + K1 u_ck,  y_ck = x - K2 u_ck

where v is the frequency deviation, delta the angle deviation and psi the
equilibrium angle difference of a line. A battery pair on line k replaces the
line's static controller in the interconnection; the physical line stays and
the two batteries inject the difference.

Buses carry user ids; lines and battery edges are indexed from 0 in code.
Angles are in radians, powers in per-unit, time in seconds.

"""

# ****************
# MODULE IMPORTS
# ****************

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import networkx as nx
import numpy as np

from .exceptions import ConstructionError, DimensionError
from .network import (CoupledSignals, InterconnectedSystem, NetworkTopology,
                      build_incidence, edge_inputs)
from .systems import DynamicSystem, linear_system

__all__ = ['Bus', 'Line', 'BatteryParams', 'InitialDeviation', 'GridScenario', 'DomainMembership',
           'GridInterconnection', 'branch_flow', 'compute_equilibrium', 'equilibrium_residual',
           'cycle_residuals', 'make_node_plant', 'make_line_controller', 'make_battery_controller',
           'battery_power_command', 'domain_membership', 'domain_predicate', 'assemble_grid_system',
           'initial_state', 'swing_rhs', 'flip_line', 'battery_command_series', 'line_flow_deviation',
           'apply_parameter', 'NOMINAL_FREQUENCY']

NOMINAL_FREQUENCY = 2.0 * math.pi * 50.0


# *************************
# Scenario data
# *************************

@dataclass(frozen=True)
class Bus:
    """
    Generator bus

    Parameters
    ----------
    id : int
        bus identifier used in files and reports
    M : float
        inertia (> 0)
    D : float
        damping (>= 0; D = 0 only gives a plain NI plant)
    E0 : float
        internal voltage magnitude (> 0)
    P_L : float
        load
    P_M : float or None
        mechanical input power, filled by compute_equilibrium
    P_ST : float
        battery baseline injection

    """

    id: int
    M: float
    D: float
    E0: float = 1.0
    P_L: float = 0.0
    P_M: Optional[float] = None
    P_ST: float = 0.0

    def __post_init__(self):
        if not self.M > 0.0:
            raise ConstructionError(f'bus {self.id}: inertia M must be > 0, got {self.M}')
        if not self.D >= 0.0:
            raise ConstructionError(f'bus {self.id}: damping D must be >= 0, got {self.D}')
        if not self.E0 > 0.0:
            raise ConstructionError(f'bus {self.id}: voltage E0 must be > 0, got {self.E0}')


@dataclass(frozen=True)
class Line:
    """
    Lossless line oriented from ``from_bus`` to ``to_bus``

    ``p_max`` = E_i E_j / X is derived when the line is placed in a scenario.
    """

    from_bus: int
    to_bus: int
    X: float
    psi_bar: float
    p_max: Optional[float] = None

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ConstructionError(f'line {self.from_bus}-{self.to_bus} connects a bus to itself')
        if not self.X > 0.0:
            raise ConstructionError(f'line {self.from_bus}-{self.to_bus}: reactance X must be > 0, got {self.X}')

    @property
    def label(self):
        return f'{self.from_bus}-{self.to_bus}'


@dataclass(frozen=True)
class BatteryParams:
    """First-order battery edge controller parameters, tau > 0 and K2 > K1 > 0"""

    tau: float
    K1: float
    K2: float

    def __post_init__(self):
        if not self.tau > 0.0:
            raise ConstructionError(f'battery controller needs tau > 0, got tau = {self.tau}')
        if not self.K1 > 0.0:
            raise ConstructionError(f'battery controller needs K2 > K1 > 0, got K1 = {self.K1}')
        if not self.K2 > self.K1:
            raise ConstructionError(f'battery controller needs K2 > K1 > 0, got K1 = {self.K1}, K2 = {self.K2}')

    @property
    def gamma(self):
        return self.K2 - self.K1


@dataclass(frozen=True)
class InitialDeviation:
    delta_dev: float = 0.0
    freq_dev: float = 0.0


@dataclass(frozen=True)
class GridScenario:
    """
    Buses, oriented lines, initial deviations and battery edges

    Parameters
    ----------
    buses : sequence of Bus
        node order of the interconnection
    lines : sequence of Line
        edge order of the interconnection
    initial : sequence of InitialDeviation
        one per bus in bus order; empty means all zero
    battery_edges : sequence of (int, BatteryParams)
        0-based line index and battery parameters
    omega0 : float
        nominal frequency in rad/s (stored, deviations only are simulated)
    name : str
        scenario label

    """

    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...]
    initial: Tuple[InitialDeviation, ...] = ()
    battery_edges: Tuple[Tuple[int, BatteryParams], ...] = ()
    omega0: float = NOMINAL_FREQUENCY
    name: str = ''
    _index: dict = field(default=None, init=False, repr=False, compare=False)
    _topology: NetworkTopology = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        buses = tuple(self.buses)
        index = {}
        for pos, b in enumerate(buses):
            if b.id in index:
                raise ConstructionError(f'bus id {b.id} appears twice')
            index[b.id] = pos

        lines = []
        for n, line in enumerate(self.lines):
            for end in (line.from_bus, line.to_bus):
                if end not in index:
                    raise ConstructionError(f'line {n + 1} ({line.label}) refers to unknown bus {end}')
            p_max = buses[index[line.from_bus]].E0 * buses[index[line.to_bus]].E0 / line.X
            lines.append(replace(line, p_max=p_max))
        lines = tuple(lines)

        initial = tuple(self.initial) or tuple(InitialDeviation() for _ in buses)
        if len(initial) != len(buses):
            raise ConstructionError(f'{len(initial)} initial deviations for {len(buses)} buses')

        batteries = tuple(sorted((int(k), p) for k, p in self.battery_edges))
        ks = [k for k, _ in batteries]
        if len(set(ks)) != len(ks):
            raise ConstructionError('a line carries at most one battery controller')
        for k in ks:
            if not 0 <= k < len(lines):
                raise ConstructionError(f'battery edge refers to line {k + 1}, scenario has {len(lines)} lines')

        edges = tuple((index[l.from_bus], index[l.to_bus]) for l in lines)
        graph = nx.Graph()
        graph.add_nodes_from(b.id for b in buses)
        graph.add_edges_from((l.from_bus, l.to_bus) for l in lines)
        if not nx.is_connected(graph):
            components = [sorted(c) for c in nx.connected_components(graph)]
            raise ConstructionError(f'the grid is not connected; bus groups: {components}')
        topology = NetworkTopology(len(buses), edges)

        object.__setattr__(self, 'buses', buses)
        object.__setattr__(self, 'lines', lines)
        object.__setattr__(self, 'initial', initial)
        object.__setattr__(self, 'battery_edges', batteries)
        object.__setattr__(self, '_index', index)
        object.__setattr__(self, '_topology', topology)

    @property
    def topology(self):
        return self._topology

    @property
    def bus_count(self):
        return len(self.buses)

    @property
    def line_count(self):
        return len(self.lines)

    @property
    def battery_map(self):
        return dict(self.battery_edges)

    def bus_position(self, bus_id):
        return self._index[bus_id]

    def line_ends(self, l):
        """Positions (i, j) of the initial and terminal bus of line l"""
        return self._topology.edges[l]

    @property
    def p_max(self):
        return np.array([l.p_max for l in self.lines])

    @property
    def psi_bar(self):
        return np.array([l.psi_bar for l in self.lines])

    def with_initial(self, delta_dev, freq_dev=None):
        """Copy with new initial deviations, given per bus in bus order"""
        delta_dev = np.asarray(delta_dev, dtype=float).reshape(self.bus_count)
        freq_dev = np.zeros(self.bus_count) if freq_dev is None else \
            np.asarray(freq_dev, dtype=float).reshape(self.bus_count)
        return replace(self, initial=tuple(InitialDeviation(float(d), float(v))
                                           for d, v in zip(delta_dev, freq_dev)))


# *************************
# Steady state
# *************************

def branch_flow(E_i, E_j, X, angle_diff):
    """
    Active power on a lossless line

    Parameters
    ----------
    E_i, E_j : float
        voltage magnitudes of the two ends
    X : float
        line reactance (> 0)
    angle_diff : float or array
        delta_i - delta_j in radians

    Returns
    -------
    P : float or array
        (E_i E_j / X) sin(angle_diff), flowing from i to j

    """
    if not X > 0.0:
        raise DimensionError(f'reactance X must be > 0, got {X}')
    return (E_i * E_j / X) * np.sin(angle_diff)


def _equilibrium_injection(scenario):
    Q = build_incidence(scenario.topology)
    return Q.entries.astype(float) @ (scenario.p_max * np.sin(scenario.psi_bar))


def compute_equilibrium(scenario):
    """
    Fill P_M so the buses balance at the equilibrium angles psi_bar

        P_M_i = P_L_i - P_ST_i + sum_j Pmax_ij sin(psi_ij)

    Returns
    -------
    scenario : GridScenario
        copy with P_M set on every bus

    """
    injection = _equilibrium_injection(scenario)
    buses = tuple(replace(b, P_M=float(b.P_L - b.P_ST + injection[i])) for i, b in enumerate(scenario.buses))
    for cycle, residual in cycle_residuals(scenario):
        if abs(residual) > 1e-12:
            logging.warning(f'psi_bar does not close around buses {cycle}: residual {residual:.3e} rad')
    return replace(scenario, buses=buses)


def equilibrium_residual(scenario):
    """
    Per-bus residual P_M - P_L + P_ST - sum_j Pmax_ij sin(psi_ij)
    """
    missing = [b.id for b in scenario.buses if b.P_M is None]
    if missing:
        raise ConstructionError(f'P_M is not set on buses {missing}; run compute_equilibrium first')
    injection = _equilibrium_injection(scenario)
    return np.array([b.P_M - b.P_L + b.P_ST for b in scenario.buses]) - injection


def cycle_residuals(scenario):
    """
    Oriented sum of psi_bar around each cycle of a cycle basis

    Returns
    -------
    residuals : list of (list of bus ids, float)

    """
    top = scenario.topology
    result = []
    for cycle in top.cycle_basis():
        total = 0.0
        for a, b in zip(cycle, cycle[1:] + cycle[:1]):
            l = top.edge_index(a, b)
            sign = 1.0 if top.edges[l] == (a, b) else -1.0
            total += sign * scenario.lines[l].psi_bar
        result.append(([scenario.buses[i].id for i in cycle], total))
    return result


# *************************
# Subsystems
# *************************

def make_node_plant(bus):
    """
    Linear node plant with state (frequency deviation, angle deviation)

    A = [[-D/M, 0], [1, 0]], B = [1/M, 0]', C = [0, 1], V = (M/2) v^2 and
    osni_epsilon = D.
    """
    M, D = bus.M, bus.D
    if D == 0.0:
        logging.warning(f'bus {bus.id} has D = 0: plant is NI but not output strictly NI')
    return linear_system([[-D / M, 0.0], [1.0, 0.0]], [[1.0 / M], [0.0]], [[0.0, 1.0]],
                         storage=lambda x: 0.5 * M * x[..., 0] ** 2,
                         osni_epsilon=D, name=f'bus {bus.id}')


def make_line_controller(line):
    """
    Static line coupling y = Pmax (sin psi - sin(u + psi))
    """
    P, psi = line.p_max, line.psi_bar
    if P is None or not P > 0.0:
        raise ConstructionError(f'line {line.label}: Pmax must be > 0, got {P}')
    if abs(psi) >= 0.5 * math.pi:
        logging.warning(f'line {line.label}: |psi_bar| = {abs(psi):.4f} is off the stable branch (< pi/2)')
    sin_psi = math.sin(psi)
    return DynamicSystem(state_dim=0, io_dim=1,
                         g=lambda u: P * (sin_psi - np.sin(u + psi)),
                         name=f'line {line.label}')


def make_battery_controller(params, name='battery'):
    """
    Battery edge controller tau dx/dt = -x + K1 u, y = x - K2 u

    Storage V = x^2 / (2 K1); declared steady-state margin gamma = K2 - K1.
    """
    if not isinstance(params, BatteryParams):
        params = BatteryParams(*params)
    tau, K1, K2 = params.tau, params.K1, params.K2
    return DynamicSystem(state_dim=1, io_dim=1,
                         f=lambda x, u: (-x + K1 * u) / tau,
                         h=lambda x: x,
                         g=lambda u: -K2 * u,
                         storage=lambda x: x[..., 0] ** 2 / (2.0 * K1),
                         gamma=params.gamma, name=name)


def battery_power_command(q_ik, x_ck, u_ck, line, params):
    """
    Battery injection at one end of line k

        P_ST_i = q_ik (x_ck - K2 u_ck - Pmax (sin psi - sin(u_ck + psi)))

    Parameters
    ----------
    q_ik : int
        +1 at the line's initial bus, -1 at its terminal bus
    x_ck : float or array
        battery controller state
    u_ck : float or array
        angle deviation difference across the line
    line : Line
        the line carrying the battery pair
    params : BatteryParams

    """
    if q_ik not in (1, -1):
        raise DimensionError(f'q_ik must be +1 or -1, got {q_ik}')
    psi = line.psi_bar
    u_ck = np.asarray(u_ck, dtype=float)
    return q_ik * (x_ck - params.K2 * u_ck - line.p_max * (math.sin(psi) - np.sin(u_ck + psi)))


def line_flow_deviation(scenario, psi_dev):
    """Pmax (sin(psi_dev + psi) - sin psi) per line, over leading axes"""
    psi = scenario.psi_bar
    return scenario.p_max * (np.sin(np.asarray(psi_dev) + psi) - np.sin(psi))


# *************************
# Domains
# *************************

@dataclass(frozen=True)
class DomainMembership:
    in_d1: bool
    in_d2: bool
    d2_sum: float
    d1_violations: Tuple[Tuple[int, float, float, float], ...] = ()

    @property
    def inside(self):
        return self.in_d1 and self.in_d2


def domain_membership(scenario, delta_dev, excluded_edge=None):
    """
    Membership of angle deviations in the local domains D1 and D2

    D1: every line has psi_dev in (-pi - 2 psi, pi - 2 psi).
    D2: sum_l Pmax_l (cos psi_l - psi_dev_l sin psi_l - cos(psi_dev_l + psi_l)) > 0,
    or all angle deviations are zero.

    Parameters
    ----------
    scenario : GridScenario
    delta_dev : array_like
        angle deviation per bus, in bus order
    excluded_edge : int or None
        0-based line left out of both conditions (battery line)

    Returns
    -------
    membership : DomainMembership
        d1_violations lists (line number, psi_dev, low, high), line numbers 1-based

    """
    delta = np.asarray(delta_dev, dtype=float).reshape(scenario.bus_count)
    Q = build_incidence(scenario.topology)
    psi_dev = edge_inputs(Q, delta)
    psi = scenario.psi_bar
    keep = np.ones(scenario.line_count, dtype=bool)
    if excluded_edge is not None:
        keep[excluded_edge] = False

    lo = -math.pi - 2.0 * psi
    hi = math.pi - 2.0 * psi
    bad = keep & ~((psi_dev > lo) & (psi_dev < hi))
    violations = tuple((int(l) + 1, float(psi_dev[l]), float(lo[l]), float(hi[l])) for l in np.nonzero(bad)[0])

    terms = scenario.p_max * (np.cos(psi) - psi_dev * np.sin(psi) - np.cos(psi_dev + psi))
    d2_sum = float(np.sum(terms[keep]))
    in_d2 = d2_sum > 0.0 or bool(np.all(delta == 0.0))

    return DomainMembership(in_d1=not violations, in_d2=in_d2, d2_sum=d2_sum, d1_violations=violations)


def domain_predicate(scenario, excluded_edge=None):
    """
    z -> bool on the concatenated state (X_p, X_c) of the assembled grid
    """
    N = scenario.bus_count

    def predicate(z):
        delta = np.asarray(z, dtype=float)[1:2 * N:2]
        return domain_membership(scenario, delta, excluded_edge).inside
    return predicate


# *************************
# Interconnection
# *************************

class GridInterconnection(InterconnectedSystem):
    """
    Assembled grid with a vectorised closed-loop right-hand side

    The subsystems are the same as in a plain InterconnectedSystem and every
    generic operation applies; only coupled_rhs is evaluated with whole-array
    expressions.
    """

    def __init__(self, scenario, node_plants, edge_controllers):
        super().__init__(node_plants, edge_controllers, scenario.topology)
        self.scenario = scenario
        Q = self.incidence
        self._init = Q.initial
        self._term = Q.terminal
        self._Q = Q.entries.astype(float)
        self._M = np.array([b.M for b in scenario.buses])
        self._D = np.array([b.D for b in scenario.buses])
        self._P = scenario.p_max
        self._psi = scenario.psi_bar
        self._sin_psi = np.sin(self._psi)

        batteries = scenario.battery_edges
        self._bat_lines = np.array([k for k, _ in batteries], dtype=int)
        self._static = np.setdiff1d(np.arange(scenario.line_count), self._bat_lines)
        self._tau = np.array([p.tau for _, p in batteries])
        self._K1 = np.array([p.K1 for _, p in batteries])
        self._K2 = np.array([p.K2 for _, p in batteries])

    def coupled_rhs(self, X_p, X_c):
        v = X_p[0::2]
        delta = X_p[1::2]

        Y_p = delta.copy()
        U_c = delta[self._init] - delta[self._term]

        Y_c = np.empty(self.edge_count)
        s = self._static
        Y_c[s] = self._P[s] * (self._sin_psi[s] - np.sin(U_c[s] + self._psi[s]))
        u_bat = U_c[self._bat_lines]
        Y_c[self._bat_lines] = X_c - self._K2 * u_bat

        U_p = self._Q @ Y_c

        xp_dot = np.empty_like(X_p)
        xp_dot[0::2] = (U_p - self._D * v) / self._M
        xp_dot[1::2] = v
        xc_dot = (self._K1 * u_bat - X_c) / self._tau
        return CoupledSignals(xp_dot, xc_dot, Y_p, Y_c, U_p, U_c)


def assemble_grid_system(scenario):
    """
    Networked NI form of a grid scenario

    Node plants come from make_node_plant, edge controllers from
    make_line_controller, except battery edges which use
    make_battery_controller.

    Returns
    -------
    system : GridInterconnection

    """
    plants = [make_node_plant(b) for b in scenario.buses]
    batteries = scenario.battery_map
    controllers = []
    for l, line in enumerate(scenario.lines):
        if l in batteries:
            controllers.append(make_battery_controller(batteries[l], name=f'battery {line.label}'))
        else:
            controllers.append(make_line_controller(line))
    logging.info(f'Assembled grid: {scenario.bus_count} buses, {scenario.line_count} lines, '
                 f'{len(batteries)} battery edges')
    return GridInterconnection(scenario, plants, controllers)


def initial_state(scenario):
    """
    (X_p0, X_c0): per-bus (freq_dev, delta_dev) pairs and zero battery states
    """
    X_p = np.empty(2 * scenario.bus_count)
    X_p[0::2] = [d.freq_dev for d in scenario.initial]
    X_p[1::2] = [d.delta_dev for d in scenario.initial]
    return X_p, np.zeros(len(scenario.battery_edges))


def swing_rhs(scenario):
    """
    Direct deviation swing dynamics on z = (v_1..v_N, delta_1..delta_N, x_c...)

        M_i dv_i/dt = -D_i v_i - sum_l q_il Pmax_l (sin(psi_dev_l + psi_l) - sin psi_l) + P_ST_i

    with battery injections from battery_power_command. Written line by line,
    independently of the networked form.
    """
    N = scenario.bus_count
    batteries = scenario.battery_edges
    ends = [scenario.line_ends(l) for l in range(scenario.line_count)]
    bat_pos = {k: n for n, (k, _) in enumerate(batteries)}

    def rhs(t, z):
        v = z[:N]
        delta = z[N:2 * N]
        xc = z[2 * N:]
        net = np.zeros(N)
        xc_dot = np.zeros(len(batteries))
        for l, line in enumerate(scenario.lines):
            i, j = ends[l]
            psi_dev = delta[i] - delta[j]
            flow = line.p_max * (math.sin(psi_dev + line.psi_bar) - math.sin(line.psi_bar))
            net[i] -= flow
            net[j] += flow
            if l in bat_pos:
                n = bat_pos[l]
                params = batteries[n][1]
                net[i] += battery_power_command(1, xc[n], psi_dev, line, params)
                net[j] += battery_power_command(-1, xc[n], psi_dev, line, params)
                xc_dot[n] = (-xc[n] + params.K1 * psi_dev) / params.tau
        v_dot = np.array([(net[i] - b.D * v[i]) / b.M for i, b in enumerate(scenario.buses)])
        return np.concatenate([v_dot, v, xc_dot])

    return rhs


def flip_line(scenario, index):
    """
    Copy of the scenario with line ``index`` reversed and its psi_bar negated

    The physical system is unchanged; the battery state on that line, if any,
    changes sign.
    """
    lines = list(scenario.lines)
    line = lines[index]
    lines[index] = Line(from_bus=line.to_bus, to_bus=line.from_bus, X=line.X, psi_bar=-line.psi_bar)
    return replace(scenario, lines=tuple(lines))


def battery_command_series(scenario, trajectory):
    """
    Battery injections at both ends of every battery line along a trajectory

    Returns
    -------
    commands : dict
        0-based line index -> (P_ST at initial bus, P_ST at terminal bus)

    """
    result = {}
    for n, (k, params) in enumerate(scenario.battery_edges):
        u = trajectory.u_c[:, k]
        x = trajectory.x_c[:, n]
        line = scenario.lines[k]
        result[k] = (battery_power_command(1, x, u, line, params),
                     battery_power_command(-1, x, u, line, params))
    return result


# *************************
# Parameter addressing
# *************************

_BUS_FIELDS = ('M', 'D', 'E0', 'P_L', 'P_ST')
_LINE_FIELDS = ('X', 'psi_bar')
_BATTERY_FIELDS = ('tau', 'K1', 'K2')


def apply_parameter(scenario, target, value):
    """
    Copy of the scenario with one numeric field replaced

    Targets:

        initial.<bus id>.delta_dev | initial.<bus id>.freq_dev
        buses.<bus id>.<M|D|E0|P_L|P_ST>
        lines.<n>.<X|psi_bar>                 (n counts from 1)
        battery_edges.<n>.<tau|K1|K2>         (n counts from 1)
        battery_line                          (moves the single battery to line value)

    P_M is cleared on every bus so the equilibrium is recomputed.

    Raises
    ------
    DimensionError
        a target that does not address a numeric scenario field

    """
    parts = target.split('.')
    value = float(value)
    try:
        if parts[0] == 'initial' and len(parts) == 3 and parts[2] in ('delta_dev', 'freq_dev'):
            pos = scenario.bus_position(int(parts[1]))
            initial = list(scenario.initial)
            initial[pos] = replace(initial[pos], **{parts[2]: value})
            scenario = replace(scenario, initial=tuple(initial))
        elif parts[0] == 'buses' and len(parts) == 3 and parts[2] in _BUS_FIELDS:
            pos = scenario.bus_position(int(parts[1]))
            buses = list(scenario.buses)
            buses[pos] = replace(buses[pos], **{parts[2]: value})
            scenario = replace(scenario, buses=tuple(buses))
        elif parts[0] == 'lines' and len(parts) == 3 and parts[2] in _LINE_FIELDS:
            n = int(parts[1]) - 1
            if not 0 <= n < scenario.line_count:
                raise IndexError(n)
            lines = list(scenario.lines)
            lines[n] = replace(lines[n], **{parts[2]: value})
            scenario = replace(scenario, lines=tuple(lines))
        elif parts[0] == 'battery_edges' and len(parts) == 3 and parts[2] in _BATTERY_FIELDS:
            n = int(parts[1]) - 1
            if not 0 <= n < len(scenario.battery_edges):
                raise IndexError(n)
            edges = list(scenario.battery_edges)
            k, params = edges[n]
            edges[n] = (k, replace(params, **{parts[2]: value}))
            scenario = replace(scenario, battery_edges=tuple(edges))
        elif target == 'battery_line':
            if len(scenario.battery_edges) != 1:
                raise DimensionError('battery_line needs exactly one battery edge in the scenario')
            if value != int(value) or not 1 <= int(value) <= scenario.line_count:
                raise DimensionError(f'battery_line must be a line number in 1..{scenario.line_count}, got {value}')
            scenario = replace(scenario, battery_edges=((int(value) - 1, scenario.battery_edges[0][1]),))
        else:
            raise DimensionError(f'{target!r} does not address a numeric scenario field')
    except (KeyError, ValueError, IndexError) as e:
        if isinstance(e, (DimensionError, ConstructionError)):
            raise
        raise DimensionError(f'{target!r} does not address a numeric scenario field')

    return replace(scenario, buses=tuple(replace(b, P_M=None) for b in scenario.buses))
