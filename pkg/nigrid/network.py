# ******************
# MODULE DOCSTRING
# ******************

"""

nigrid: networked interconnection
=====

Node plants sit on the vertices of a connected undirected graph, edge
controllers on its edges. Each edge has a fixed orientation (initial node i,
terminal node j) recorded in the incidence matrix Q, and the loop is wired as

    U_c = (Q' x I_m) Y_p,    Y_c = h_c(X_c) + g_c(U_c),    U_p = (Q x I_m) Y_c

Plants have no direct feedthrough, so the signals are evaluated in the order
Y_p -> U_c -> Y_c -> U_p without any fixed-point iteration.

Nodes and edges are indexed from 0.

"""

# ****************
# MODULE IMPORTS
# ****************

import logging
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import networkx as nx
import numpy as np

from .exceptions import ConstructionError, DimensionError, InsufficientDataError
from .systems import (DynamicSystem, aggregate_systems, central_difference,
                      check_steady_state_sign, _block_slices, _residual_report)

__all__ = ['NetworkTopology', 'IncidenceMatrix', 'CoupledSignals', 'InterconnectedSystem',
           'FeedbackLoop', 'build_incidence', 'edge_inputs', 'node_inputs', 'coupled_rhs',
           'power_balance_identity', 'networked_plant', 'check_networked_plant_dissipation',
           'check_networked_steady_state', 'DENSE_KRON_LIMIT']

# Above N*L*m the Kronecker wiring is never materialised
DENSE_KRON_LIMIT = 10 ** 4


# *************************
# Topology
# *************************

@dataclass(frozen=True, eq=False)
class NetworkTopology:
    """
    Connected undirected graph with one fixed orientation per edge

    Parameters
    ----------
    node_count : int
        number of nodes N
    edges : sequence of (int, int)
        (initial, terminal) node pairs; the order fixes the edge indices

    """

    node_count: int
    edges: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, 'edges', edges)

        if self.node_count < 1:
            raise ConstructionError(f'a network needs at least one node, got {self.node_count}')

        seen = set()
        for l, (i, j) in enumerate(edges):
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ConstructionError(f'edge {l} ({i}, {j}) refers to a node outside 0..{self.node_count - 1}')
            if i == j:
                raise ConstructionError(f'edge {l} is a self-loop on node {i}')
            key = frozenset((i, j))
            if key in seen:
                raise ConstructionError(f'edge {l} ({i}, {j}) duplicates an earlier edge')
            seen.add(key)

        graph = nx.Graph()
        graph.add_nodes_from(range(self.node_count))
        for l, (i, j) in enumerate(edges):
            graph.add_edge(i, j, index=l)
        if not nx.is_connected(graph):
            components = [sorted(c) for c in nx.connected_components(graph)]
            raise ConstructionError(f'the network is not connected; components: {components}')
        object.__setattr__(self, '_graph', graph)

    @property
    def edge_count(self):
        return len(self.edges)

    @property
    def graph(self):
        return self._graph.copy()

    def neighbors(self, i):
        """N(i): nodes sharing an edge with node i"""
        return sorted(self._graph.neighbors(i))

    def incident_edges(self, i):
        """E(i): indices of the edges touching node i"""
        return sorted(self._graph.edges[i, j]['index'] for j in self._graph.neighbors(i))

    def cycle_basis(self):
        return nx.cycle_basis(self._graph)

    def edge_index(self, i, j):
        return self._graph.edges[i, j]['index']

    def reoriented(self, flips):
        """Copy with the edges whose indices are in flips reversed"""
        flips = set(flips)
        return NetworkTopology(self.node_count,
                               tuple((j, i) if l in flips else (i, j) for l, (i, j) in enumerate(self.edges)))


@dataclass(frozen=True, eq=False)
class IncidenceMatrix:
    """
    Node-by-edge incidence matrix: +1 at the initial node, -1 at the
    terminal node of each column
    """

    entries: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.entries)
        if Q.ndim != 2:
            raise ConstructionError(f'incidence matrix must be 2-D, got shape {Q.shape}')
        if not np.all(np.isin(Q, (-1, 0, 1))):
            raise ConstructionError('incidence entries must lie in {-1, 0, +1}')
        if Q.shape[1] and not (np.all((Q == 1).sum(axis=0) == 1) and np.all((Q == -1).sum(axis=0) == 1)):
            raise ConstructionError('each incidence column needs exactly one +1 and one -1')
        Q = Q.astype(np.int8)
        Q.setflags(write=False)
        object.__setattr__(self, 'entries', Q)
        object.__setattr__(self, 'initial', np.argmax(Q == 1, axis=0))
        object.__setattr__(self, 'terminal', np.argmax(Q == -1, axis=0))

    @property
    def node_count(self):
        return self.entries.shape[0]

    @property
    def edge_count(self):
        return self.entries.shape[1]

    def kron(self, m):
        """
        Dense (Q x I_m); only available while N*L*m <= DENSE_KRON_LIMIT
        """
        if self.node_count * self.edge_count * m > DENSE_KRON_LIMIT:
            raise DimensionError(f'dense Kronecker product refused for N*L*m = '
                                 f'{self.node_count * self.edge_count * m}')
        return np.kron(self.entries.astype(float), np.eye(m))


def build_incidence(topology):
    """
    Incidence matrix of an oriented topology

    Parameters
    ----------
    topology : NetworkTopology
        the oriented connected graph

    Returns
    -------
    Q : IncidenceMatrix

    """
    if not isinstance(topology, NetworkTopology):
        raise ConstructionError(f'expected a NetworkTopology, got {type(topology).__name__}')
    Q = np.zeros((topology.node_count, topology.edge_count), dtype=np.int8)
    for l, (i, j) in enumerate(topology.edges):
        Q[i, l] = 1
        Q[j, l] = -1
    return IncidenceMatrix(Q)


def _blocks(values, count, m, what):
    values = np.asarray(values, dtype=float)
    if values.shape[-1:] != (count * m,):
        raise DimensionError(f'{what} has trailing size {values.shape[-1:]}, expected {count * m}')
    return values.reshape(values.shape[:-1] + (count, m))


def edge_inputs(Q, Y_p, m=1):
    """
    Controller inputs U_c = (Q' x I_m) Y_p

    Block l of the result is y_p(initial l) - y_p(terminal l). Leading batch
    axes are allowed.
    """
    Y = _blocks(Y_p, Q.node_count, m, 'Y_p')
    U = Y[..., Q.initial, :] - Y[..., Q.terminal, :]
    return U.reshape(U.shape[:-2] + (Q.edge_count * m,))


def node_inputs(Q, Y_c, m=1):
    """
    Plant inputs U_p = (Q x I_m) Y_c; leading batch axes are allowed
    """
    Y = _blocks(Y_c, Q.edge_count, m, 'Y_c')
    N, L = Q.node_count, Q.edge_count
    if N * L * m <= DENSE_KRON_LIMIT:
        U = np.matmul(Q.entries.astype(float), Y)
    else:
        U = np.zeros(Y.shape[:-2] + (N, m))
        for l in range(L):
            U[..., Q.initial[l], :] += Y[..., l, :]
            U[..., Q.terminal[l], :] -= Y[..., l, :]
    return U.reshape(U.shape[:-2] + (N * m,))


def power_balance_identity(Q, Y_p, Y_c, m=1):
    """
    Both sides of U_p'Y_p = U_c'Y_c

    Returns
    -------
    lhs : float
        U_p'Y_p with U_p = (Q x I_m) Y_c
    rhs : float
        U_c'Y_c with U_c = (Q' x I_m) Y_p

    """
    Y_p = np.asarray(Y_p, dtype=float)
    Y_c = np.asarray(Y_c, dtype=float)
    lhs = float(node_inputs(Q, Y_c, m) @ Y_p)
    rhs = float(edge_inputs(Q, Y_p, m) @ Y_c)
    return lhs, rhs


# *************************
# Interconnections
# *************************

class CoupledSignals(NamedTuple):
    xp_dot: np.ndarray
    xc_dot: np.ndarray
    y_p: np.ndarray
    y_c: np.ndarray
    u_p: np.ndarray
    u_c: np.ndarray


class _Loop(object):
    # Shared bookkeeping of plant and controller state blocks

    def _layout(self, plants, controllers):
        self.node_plants = tuple(plants)
        self.edge_controllers = tuple(controllers)
        self.plant_slices = _block_slices([p.state_dim for p in self.node_plants])
        self.controller_slices = _block_slices([c.state_dim for c in self.edge_controllers])
        self.plant_state_dim = sum(p.state_dim for p in self.node_plants)
        self.controller_state_dim = sum(c.state_dim for c in self.edge_controllers)
        self.epsilon_min = min(p.osni_epsilon for p in self.node_plants)

    @property
    def node_count(self):
        return len(self.node_plants)

    @property
    def edge_count(self):
        return len(self.edge_controllers)

    @property
    def state_dim(self):
        return self.plant_state_dim + self.controller_state_dim

    def split_state(self, z):
        z = np.asarray(z, dtype=float)
        return z[..., :self.plant_state_dim], z[..., self.plant_state_dim:]

    def _check_states(self, X_p, X_c):
        X_p = np.asarray(X_p, dtype=float)
        X_c = np.asarray(X_c, dtype=float)
        if X_p.shape != (self.plant_state_dim,):
            raise DimensionError(f'X_p has shape {X_p.shape}, expected ({self.plant_state_dim},)')
        if X_c.shape != (self.controller_state_dim,):
            raise DimensionError(f'X_c has shape {X_c.shape}, expected ({self.controller_state_dim},)')
        return X_p, X_c

    def _plant_outputs(self, X_p):
        return np.concatenate([p.output_state(X_p[..., s]) for p, s in zip(self.node_plants, self.plant_slices)],
                              axis=-1)

    def _controller_outputs(self, X_c, U_c):
        m = self.io_dim
        return np.concatenate([c.output(X_c[..., s], U_c[..., l * m:(l + 1) * m])
                               for l, (c, s) in enumerate(zip(self.edge_controllers, self.controller_slices))],
                              axis=-1)

    def _derivatives(self, X_p, X_c, U_p, U_c):
        m = self.io_dim
        xp_dot = np.empty(self.plant_state_dim)
        for i, (p, s) in enumerate(zip(self.node_plants, self.plant_slices)):
            xp_dot[s] = p.dynamics(X_p[s], U_p[i * m:(i + 1) * m])
        xc_dot = np.empty(self.controller_state_dim)
        for l, (c, s) in enumerate(zip(self.edge_controllers, self.controller_slices)):
            if c.state_dim:
                xc_dot[s] = c.dynamics(X_c[s], U_c[l * m:(l + 1) * m])
        return xp_dot, xc_dot

    def storage_terms(self, X_p, X_c):
        """
        Sum of plant storages and sum of controller storages, over leading axes
        """
        X_p = np.asarray(X_p, dtype=float)
        X_c = np.asarray(X_c, dtype=float)
        V_p = sum(p.storage_value(X_p[..., s]) for p, s in zip(self.node_plants, self.plant_slices))
        V_c = sum(c.storage_value(X_c[..., s]) for c, s in zip(self.edge_controllers, self.controller_slices))
        return V_p, V_c

    def controller_state_outputs(self, X_c):
        """Pi_cx(X_c): the state part of every controller output"""
        X_c = np.asarray(X_c, dtype=float)
        if not self.edge_controllers:
            return np.zeros(X_c.shape[:-1] + (0,))
        return np.concatenate([c.output_state(X_c[..., s])
                               for c, s in zip(self.edge_controllers, self.controller_slices)], axis=-1)

    def upper_limits(self, Y_p):
        """Upper integration limits of the Lyapunov integral term"""
        raise NotImplementedError


class InterconnectedSystem(_Loop):
    """
    Networked feedback interconnection of node plants and edge controllers

    Parameters
    ----------
    node_plants : sequence of DynamicSystem
        one plant per node, without direct feedthrough
    edge_controllers : sequence of DynamicSystem
        one controller per edge
    topology : NetworkTopology
        oriented graph wiring them

    """

    def __init__(self, node_plants, edge_controllers, topology):
        self._layout(node_plants, edge_controllers)
        self.topology = topology
        self.incidence = build_incidence(topology)

        if len(self.node_plants) != topology.node_count:
            raise ConstructionError(f'{len(self.node_plants)} plants for {topology.node_count} nodes')
        if len(self.edge_controllers) != topology.edge_count:
            raise ConstructionError(f'{len(self.edge_controllers)} controllers for {topology.edge_count} edges')

        dims = {s.io_dim for s in self.node_plants + self.edge_controllers}
        if len(dims) != 1:
            raise ConstructionError(f'all subsystems need the same io_dim, got {sorted(dims)}')
        self.io_dim = dims.pop()

        for i, p in enumerate(self.node_plants):
            if p.has_feedthrough:
                raise ConstructionError(f'node plant {i} ({p.label}) has direct feedthrough; plants need g = 0')

        logging.debug(f'Interconnection with {self.node_count} nodes, {self.edge_count} edges, m = {self.io_dim}')

    def upper_limits(self, Y_p):
        return edge_inputs(self.incidence, Y_p, self.io_dim)

    def coupled_rhs(self, X_p, X_c):
        """
        Closed-loop derivatives and all wiring signals

        Returns
        -------
        signals : CoupledSignals

        """
        Q, m = self.incidence, self.io_dim
        Y_p = self._plant_outputs(X_p)
        U_c = edge_inputs(Q, Y_p, m)
        Y_c = self._controller_outputs(X_c, U_c) if self.edge_count else np.zeros(0)
        U_p = node_inputs(Q, Y_c, m)
        xp_dot, xc_dot = self._derivatives(X_p, X_c, U_p, U_c)
        return CoupledSignals(xp_dot, xc_dot, Y_p, Y_c, U_p, U_c)


class FeedbackLoop(_Loop):
    """
    Single positive-feedback loop u_c = y_p, u_p = y_c of one plant and one
    controller

    Parameters
    ----------
    plant : DynamicSystem
        plant without direct feedthrough
    controller : DynamicSystem
        controller with the same io_dim

    """

    def __init__(self, plant, controller):
        if plant.has_feedthrough:
            raise ConstructionError(f'plant {plant.label} has direct feedthrough; plants need g = 0')
        if plant.io_dim != controller.io_dim:
            raise ConstructionError(f'io_dim mismatch: plant {plant.io_dim}, controller {controller.io_dim}')
        self._layout([plant], [controller])
        self.io_dim = plant.io_dim

    @property
    def plant(self):
        return self.node_plants[0]

    @property
    def controller(self):
        return self.edge_controllers[0]

    def upper_limits(self, Y_p):
        return np.asarray(Y_p, dtype=float)

    def coupled_rhs(self, X_p, X_c):
        y_p = self.plant.output_state(X_p)
        y_c = self.controller.output(X_c, y_p)
        xp_dot, xc_dot = self._derivatives(X_p, X_c, y_c, y_p)
        return CoupledSignals(xp_dot, xc_dot, y_p, y_c, y_c, y_p)


def coupled_rhs(sys, X_p, X_c):
    """
    Evaluate the closed loop at (X_p, X_c)

    Parameters
    ----------
    sys : InterconnectedSystem or FeedbackLoop
        the interconnection
    X_p : array_like
        stacked plant states
    X_c : array_like
        stacked controller states

    Returns
    -------
    signals : CoupledSignals
        (xp_dot, xc_dot, y_p, y_c, u_p, u_c)

    """
    X_p, X_c = sys._check_states(X_p, X_c)
    return sys.coupled_rhs(X_p, X_c)


# *************************
# Networked plant
# *************************

def networked_plant(sys):
    """
    The transformed plant with input U_hat (L*m) and output Y_hat = (Q' x I_m)Y_p

    Storage is the sum of the plant storages and epsilon the smallest plant
    epsilon.
    """
    Q, m = sys.incidence, sys.io_dim
    stacked = aggregate_systems(sys.node_plants, name='plants')

    return DynamicSystem(state_dim=stacked.state_dim,
                         io_dim=sys.edge_count * m,
                         f=lambda x, u: stacked.dynamics(x, node_inputs(Q, u, m)),
                         h=lambda x: edge_inputs(Q, stacked.output_state(x), m),
                         storage=stacked.storage,
                         osni_epsilon=stacked.osni_epsilon,
                         name='networked plant')


def check_networked_plant_dissipation(sys, trajectory, tolerance=1e-6, stencil=5):
    """
    Along a coupled trajectory, check

        sum_i dV_pi/dt <= U_hat' dY_hat/dt - epsilon_min |dY_p/dt|^2

    with U_hat = Y_c and Y_hat = U_c.

    Returns
    -------
    report : DissipationReport

    """
    if trajectory.samples < 3:
        raise InsufficientDataError(f'dissipation check needs at least 3 samples, got {trajectory.samples}')
    if trajectory.y_p is None or trajectory.u_c is None or trajectory.y_c is None:
        raise InsufficientDataError('trajectory lacks recorded outputs')

    dt = trajectory.dt
    V_p, _ = sys.storage_terms(trajectory.x_p, trajectory.x_c)
    index, V_dot = central_difference(V_p, dt, stencil)
    _, Yhat_dot = central_difference(trajectory.u_c, dt, stencil)
    _, Yp_dot = central_difference(trajectory.y_p, dt, stencil)
    U_hat = trajectory.y_c[index]

    residual = V_dot - np.sum(U_hat * Yhat_dot, axis=1) + sys.epsilon_min * np.sum(Yp_dot * Yp_dot, axis=1)
    return _residual_report(trajectory.times, index, residual, tolerance, sys.epsilon_min, 'networked plant')


def check_networked_steady_state(sys, u_hat_bar, **kwargs):
    """
    Steady-state sign experiment (plant role) on the networked plant under a
    constant U_hat; keyword arguments go to check_steady_state_sign
    """
    return check_steady_state_sign(networked_plant(sys), u_hat_bar, 'plant', **kwargs)
